"""Multi-channel transformer pipeline for multi-horizon corporate default prediction."""

__version__ = "0.1.0"

HORIZONS = ("3m", "6m", "9m", "1y", "2y", "3y")
HORIZON_MONTHS = (3, 6, 9, 12, 24, 36)
CHANNELS = ("fundamental", "market", "pricing")

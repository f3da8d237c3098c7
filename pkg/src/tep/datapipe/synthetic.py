"""Controllable synthetic panel generator used as the experiment oracle.

Each firm carries three independent AR(1) latent series: health (read out
by the fundamental channel), a market-exposure ratio (read out by the
derived-ratio part of the market channel), and a pricing momentum latent
(expressed in the drift of the daily price walk).  Default times are drawn
from a discrete-time hazard whose logit combines the three latents with
per-channel signal strengths, so the discriminative power of each channel
is directly controllable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from datetime import date, timedelta
from typing import Dict, List, Optional

import numpy as np

from .panel import ChannelPanel, Dataset, Observation, add_months, build_targets


@dataclass
class GenConfig:
    n_firms: int = 500
    quarters: int = 12
    horizon_quarters: int = 12
    pricing_window_days: int = 504
    n_fundamental_features: int = 10
    n_market_features: int = 6
    alpha_fundamental: float = 8.0
    alpha_market: float = 1.0
    alpha_pricing: float = 0.6
    base_hazard: float = -11.0
    ar: float = 0.95
    fundamental_noise: float = 0.3
    market_noise: float = 0.4
    pricing_drift: float = 0.5
    pricing_vol: float = 0.02
    missing_rate: float = 0.02
    # When set, only the most recent k quarters of fundamental readouts carry
    # the health signal; older rows are pure noise.
    fundamental_signal_quarters: Optional[int] = None
    # When set, the hazard reads health at this fixed lag behind the
    # observation quarter instead of the contemporaneous value.
    planted_hazard_lag: Optional[int] = None
    observation_date: date = field(default_factory=lambda: date(2020, 12, 31))

    def __post_init__(self):
        for name in ("n_firms", "quarters", "horizon_quarters", "pricing_window_days",
                     "n_fundamental_features", "n_market_features"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observation_date"] = self.observation_date.isoformat()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        if isinstance(d.get("observation_date"), str):
            d["observation_date"] = date.fromisoformat(d["observation_date"])
        return cls(**d)


@dataclass
class SyntheticDataset(Dataset):
    """Dataset plus the generator's own latents, for oracle-style tests."""

    latents: Dict[str, Dict[str, float]] = field(default_factory=dict)
    config: Optional[GenConfig] = None


def trading_days_ending_at(end: date, n: int) -> List[date]:
    """The last n weekdays up to and including `end` (if a weekday), oldest first."""
    days: List[date] = []
    d = end
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d -= timedelta(days=1)
    return days[::-1]


def _ar1(rng: np.random.Generator, n: int, rho: float) -> np.ndarray:
    x = np.empty(n)
    x[0] = rng.normal()
    innov = np.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + innov * rng.normal()
    return x


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x)) if x >= 0 else np.exp(x) / (1.0 + np.exp(x))


def generate_synthetic(config: GenConfig, seed: int) -> SyntheticDataset:
    obs_date = config.observation_date
    w_q = config.quarters
    total_q = w_q + config.horizon_quarters
    root = np.random.default_rng(np.random.SeedSequence([seed, 0x5E6E]))

    # dataset-level structure: feature loadings and the shared market factor
    load_f = root.normal(loc=1.0, scale=0.3, size=config.n_fundamental_features)
    n_idx = config.n_market_features // 2
    load_z = root.normal(loc=1.0, scale=0.3, size=n_idx)
    load_q = root.normal(loc=1.0, scale=0.3, size=config.n_market_features - n_idx)
    z_path = _ar1(root, total_q, config.ar)

    report_dates = [add_months(obs_date, -3 * (w_q - 1 - i)) for i in range(w_q)]
    price_dates = trading_days_ending_at(obs_date, config.pricing_window_days)
    days = config.pricing_window_days

    observations = []
    default_dates: Dict[str, Optional[date]] = {}
    latents: Dict[str, Dict[str, float]] = {}

    for i in range(config.n_firms):
        firm = f"F{i:05d}"
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF1E3, i]))
        h = _ar1(rng, total_q, config.ar)
        q = _ar1(rng, total_q, config.ar)
        g = _ar1(rng, total_q, config.ar)

        # default time from the discrete-time hazard over future quarters
        default_date: Optional[date] = None
        first_logit = None
        for t in range(w_q, total_q):
            if config.planted_hazard_lag is not None:
                h_eff = h[t - config.planted_hazard_lag]
            else:
                h_eff = h[t]
            logit = (
                config.base_hazard
                - config.alpha_fundamental * h_eff
                - config.alpha_market * q[t]
                - config.alpha_pricing * g[t]
            )
            if first_logit is None:
                first_logit = logit
            u = rng.random()
            if u < _sigmoid(logit):
                q_start = add_months(obs_date, 3 * (t - w_q))
                q_end = add_months(q_start, 3)
                offset = int(rng.integers(0, (q_end - q_start).days))
                default_date = q_start + timedelta(days=offset)
                break

        # fundamental channel: noisy linear readouts of health
        fvals = np.empty((w_q, config.n_fundamental_features))
        for t in range(w_q):
            signal_on = True
            if config.fundamental_signal_quarters is not None:
                signal_on = t >= w_q - config.fundamental_signal_quarters
            base = load_f * h[t] if signal_on else 0.0
            fvals[t] = base + config.fundamental_noise * rng.normal(size=config.n_fundamental_features)
        fmask = rng.random(fvals.shape) < config.missing_rate
        fvals_raw = np.where(fmask, np.nan, fvals)

        # market channel: shared index readouts plus firm-specific derived ratios
        mvals = np.empty((w_q, config.n_market_features))
        for t in range(w_q):
            idx_part = load_z * z_path[t] + config.market_noise * rng.normal(size=n_idx)
            der_part = load_q * q[t] + config.market_noise * rng.normal(size=len(load_q))
            mvals[t] = np.concatenate([idx_part, der_part])
        mmask = np.zeros(mvals.shape, dtype=bool)

        # pricing channel: multiplicative random walk whose quarterly drift
        # follows the pricing latent
        log_s = np.log(20.0) + 0.5 * rng.normal()
        closes = np.empty(days)
        highs = np.empty(days)
        lows = np.empty(days)
        for d in range(days):
            qi = max(0, w_q - 1 - (days - 1 - d) * 4 // 252)
            drift = config.pricing_drift * g[qi] / 63.0
            log_s += drift + config.pricing_vol * rng.normal()
            closes[d] = np.exp(log_s)
            spread = np.abs(rng.normal(size=2)) * config.pricing_vol
            highs[d] = closes[d] * np.exp(spread[0])
            lows[d] = closes[d] * np.exp(-spread[1])
        pvals = np.column_stack([highs, lows, closes])
        pmask = np.zeros(pvals.shape, dtype=bool)

        target = build_targets(obs_date, default_date)
        panels = {
            "fundamental": ChannelPanel(firm, obs_date, "fundamental", fvals_raw, fmask),
            "market": ChannelPanel(firm, obs_date, "market", mvals, mmask),
            "pricing": ChannelPanel(firm, obs_date, "pricing", pvals, pmask),
        }
        observations.append(Observation(firm, obs_date, panels, target))
        default_dates[firm] = default_date
        latents[firm] = {
            "health": float(h[w_q - 1]),
            "market": float(q[w_q - 1]),
            "pricing": float(g[w_q - 1]),
            "hazard_logit": float(first_logit),
        }

    ds = SyntheticDataset(observations, default_dates)
    ds.latents = latents
    ds.config = config
    ds._report_dates = report_dates  # used by the CSV writer
    ds._price_dates = price_dates
    return ds

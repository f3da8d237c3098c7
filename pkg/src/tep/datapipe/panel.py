"""Channel panel data model, target construction, and dataset containers."""

from __future__ import annotations

import calendar
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional

import numpy as np

from .. import HORIZON_MONTHS, HORIZONS


def add_months(d: date, months: int) -> date:
    """Shift a date by whole months, clamping the day to the month end."""
    m = d.month - 1 + months
    year = d.year + m // 12
    month = m % 12 + 1
    day = min(d.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def months_between(start: date, end: date) -> float:
    """Whole months from start to end plus a day fraction; end >= start."""
    whole = 0
    while add_months(start, whole + 1) <= end:
        whole += 1
    lo = add_months(start, whole)
    hi = add_months(start, whole + 1)
    frac = (end - lo).days / max((hi - lo).days, 1)
    return whole + frac


@dataclass
class TargetVector:
    """Monotone binary labels over the six horizons (3m ... 3y)."""

    y: np.ndarray  # shape (6,), values in {0, 1}
    default_offset_months: Optional[float] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.shape != (len(HORIZONS),):
            raise ValueError(f"target vector must have {len(HORIZONS)} entries")
        if np.any(np.diff(self.y) < 0):
            raise ValueError("target vector must be monotone non-decreasing")

    @property
    def defaulted(self) -> bool:
        return bool(self.y[-1])

    def __eq__(self, other):
        return (
            isinstance(other, TargetVector)
            and np.array_equal(self.y, other.y)
            and self.default_offset_months == other.default_offset_months
        )


def build_targets(observation_date: date, default_date: Optional[date]) -> TargetVector:
    """Label an observation: y[h] = 1 iff default falls within horizon h (inclusive)."""
    if default_date is None:
        return TargetVector(np.zeros(len(HORIZONS), dtype=np.int64))
    if default_date < observation_date:
        raise ValueError(
            f"default date {default_date} precedes observation date {observation_date}"
        )
    y = np.array(
        [1 if default_date <= add_months(observation_date, h) else 0 for h in HORIZON_MONTHS],
        dtype=np.int64,
    )
    return TargetVector(y, default_offset_months=months_between(observation_date, default_date))


@dataclass
class ChannelPanel:
    """One firm-observation's (w x f) input matrix for a single channel.

    `values` holds NaN where the raw input had no value; `missing_mask` is
    True exactly at those cells.  Rows are ordered oldest first.
    """

    firm_id: str
    observation_date: date
    channel: str
    values: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        if not self.channel:
            raise ValueError("channel name must be non-empty")
        self.values = np.asarray(self.values, dtype=np.float64)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        if self.values.shape != self.missing_mask.shape:
            raise ValueError("values and missing_mask shapes differ")

    @property
    def window(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, ChannelPanel)
            and self.firm_id == other.firm_id
            and self.observation_date == other.observation_date
            and self.channel == other.channel
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.missing_mask, other.missing_mask)
        )


@dataclass
class Observation:
    firm_id: str
    observation_date: date
    panels: Dict[str, ChannelPanel]
    target: TargetVector

    def __eq__(self, other):
        return (
            isinstance(other, Observation)
            and self.firm_id == other.firm_id
            and self.observation_date == other.observation_date
            and self.panels == other.panels
            and self.target == other.target
        )


@dataclass
class Dataset:
    """Immutable collection of observations plus firm-level default dates."""

    observations: List[Observation]
    default_dates: Dict[str, Optional[date]] = field(default_factory=dict)

    @property
    def firm_ids(self) -> List[str]:
        seen = dict.fromkeys(o.firm_id for o in self.observations)
        return list(seen)

    def defaulted_flags(self) -> Dict[str, bool]:
        flags = {f: False for f in self.firm_ids}
        for o in self.observations:
            if o.target.defaulted:
                flags[o.firm_id] = True
        return flags

    def subset_firms(self, firms) -> "Dataset":
        firms = set(firms)
        obs = [o for o in self.observations if o.firm_id in firms]
        dd = {f: d for f, d in self.default_dates.items() if f in firms}
        return Dataset(obs, dd)

    def split_by_firm(self, seed: int, fractions=(0.6, 0.2, 0.2)):
        """Deterministic train/val/test firm split; no firm straddles splits."""
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        firms = sorted(self.firm_ids)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5F11]))
        rng.shuffle(firms)
        n = len(firms)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        train = firms[:n_train]
        val = firms[n_train : n_train + n_val]
        test = firms[n_train + n_val :]
        return self.subset_firms(train), self.subset_firms(val), self.subset_firms(test)

    def targets_matrix(self) -> np.ndarray:
        return np.stack([o.target.y for o in self.observations])

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.observations == other.observations
            and self.default_dates == other.default_dates
        )

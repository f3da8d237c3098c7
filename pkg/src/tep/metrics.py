"""ROC/AUC, Gini, per-horizon evaluation tables, CV, and the window sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from . import HORIZONS

log = logging.getLogger(__name__)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC with half credit for tied pairs, via sort-and-rank."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = ranks[labels == 1].sum()
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_auc_pairwise(scores: Sequence[float], labels: Sequence[int]) -> float:
    """O(n^2) pairwise oracle: (#correctly ordered + 0.5 * #ties) / (pos*neg)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("roc_auc needs at least one positive and one negative label")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size))


def gini(auc: float) -> float:
    if not 0.0 <= auc <= 1.0:
        raise ValueError("auc must lie in [0, 1]")
    return 2.0 * auc - 1.0


@dataclass
class HorizonReport:
    """Per-horizon AUC table in the Average, d_3m ... d_3y layout."""

    auc: Dict[str, Optional[float]]
    positives: Dict[str, int] = field(default_factory=dict)
    negatives: Dict[str, int] = field(default_factory=dict)

    @property
    def average(self) -> Optional[float]:
        vals = [v for v in self.auc.values() if v is not None]
        return float(np.mean(vals)) if vals else None

    def row(self) -> List[Optional[float]]:
        return [self.average] + [self.auc[h] for h in HORIZONS]

    @staticmethod
    def header() -> List[str]:
        return ["Average"] + [f"d_{h}" for h in HORIZONS]

    def to_dict(self) -> dict:
        return {
            "average": self.average,
            "horizons": {h: self.auc[h] for h in HORIZONS},
            "positives": self.positives,
            "negatives": self.negatives,
        }


def horizon_report(pds: np.ndarray, targets: np.ndarray) -> HorizonReport:
    """Score a (n, 6) PD matrix against (n, 6) binary targets."""
    pds = np.asarray(pds)
    targets = np.asarray(targets)
    auc: Dict[str, Optional[float]] = {}
    pos: Dict[str, int] = {}
    neg: Dict[str, int] = {}
    for i, h in enumerate(HORIZONS):
        y = targets[:, i]
        pos[h] = int((y == 1).sum())
        neg[h] = int((y == 0).sum())
        if pos[h] == 0 or neg[h] == 0:
            auc[h] = None  # reported as NA
        else:
            auc[h] = roc_auc(pds[:, i], y)
    return HorizonReport(auc, pos, neg)


@dataclass
class CvReport:
    """Mean (sample std, k-1 denominator) of fold AUCs per horizon."""

    mean: Dict[str, Optional[float]]
    std: Dict[str, Optional[float]]
    fold_reports: List[HorizonReport]

    @staticmethod
    def from_folds(reports: List[HorizonReport]) -> "CvReport":
        mean: Dict[str, Optional[float]] = {}
        std: Dict[str, Optional[float]] = {}
        for key in ["average"] + list(HORIZONS):
            vals = []
            for r in reports:
                v = r.average if key == "average" else r.auc[key]
                if v is not None:
                    vals.append(v)
                else:
                    log.warning("fold horizon %s is single-class; excluded from the mean", key)
            if vals:
                mean[key] = float(np.mean(vals))
                std[key] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            else:
                mean[key] = None
                std[key] = None
        return CvReport(mean, std, reports)

    def cell(self, key: str) -> str:
        m, s = self.mean[key], self.std[key]
        return "NA" if m is None else f"{m:.3f} ({s:.3f})"

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "folds": [r.to_dict() for r in self.fold_reports],
        }

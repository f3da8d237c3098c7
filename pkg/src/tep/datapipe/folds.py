"""Company-level fold assignment, stratified on the defaulted-ever flag."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np


@dataclass
class FoldAssignment:
    folds: Dict[str, int]
    k: int

    def firms_in_fold(self, i: int) -> List[str]:
        return [f for f, idx in self.folds.items() if idx == i]


def assign_folds(firm_flags: Dict[str, bool], k: int, seed: int) -> FoldAssignment:
    """Shuffled round-robin within each stratum (defaulters / survivors).

    Deterministic given the seed; per-fold defaulter counts differ by at
    most one from perfect balance.
    """
    if k < 2:
        raise ValueError("fold count must be at least 2")
    if k > len(firm_flags):
        raise ValueError(f"fold count {k} exceeds firm count {len(firm_flags)}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    assignment: Dict[str, int] = {}
    offset = 0
    for stratum in (True, False):
        firms = sorted(f for f, flag in firm_flags.items() if flag == stratum)
        rng.shuffle(firms)
        for i, firm in enumerate(firms):
            assignment[firm] = (offset + i) % k
        offset += len(firms)
    return FoldAssignment(assignment, k)

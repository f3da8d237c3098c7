"""Multi-label sigmoid cross-entropy over the six horizons."""

from __future__ import annotations

import numpy as np

from ..tensorcore import tensor as T
from ..tensorcore.tensor import Tensor


def multilabel_loss(logits: Tensor, targets) -> Tensor:
    """Sum over horizons of sigmoid cross-entropy with logits, mean over batch.

    Computed in the stable form relu(z) - z*y + log(1 + exp(-|z|)) so large
    logits neither overflow nor lose precision.
    """
    y = Tensor(np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64))
    z = logits
    abs_z = T.relu(z) + T.relu(T.neg(z))
    per_term = T.relu(z) - z * y + T.log(1.0 + T.exp(T.neg(abs_z)))
    if per_term.ndim == 1:
        return T.tsum(per_term)
    return T.tmean(T.tsum(per_term, axis=1))

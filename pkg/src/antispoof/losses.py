"""One-class margin loss and the weighted multi-stage total.

Labels are 0 for bona-fide and 1 for spoof.  The loss drives the scaled
score of bona-fide speech above the large margin m0 and of spoofed
speech below the small margin m1; higher scores therefore mean more
bona-fide.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .tensor import Tensor, softplus

from .config import OcSoftmaxConfig


def oc_softmax(scores: Tensor, labels: np.ndarray, w_hat: Tensor, oc: OcSoftmaxConfig) -> Tensor:
    """Mean over the batch of softplus(alpha * (m_y - w*s) * (-1)^y)."""
    labels = np.asarray(labels)
    margins = np.where(labels == 0, oc.m0, oc.m1).astype(np.float32)
    signs = np.where(labels == 0, 1.0, -1.0).astype(np.float32)
    z = (Tensor(margins) - w_hat * scores) * Tensor(signs * oc.alpha)
    return softplus(z).mean()


def combine_losses(losses: list[Tensor | None], weights: list[float]) -> Tensor:
    """Weighted sum with the weights renormalized over present losses."""
    pairs = [(w, l) for w, l in zip(weights, losses) if l is not None]
    norm = sum(w for w, _ in pairs)
    if norm <= 0:
        raise ConfigError("loss weights over the enabled stages sum to zero")
    total = None
    for w, l in pairs:
        term = l * np.float32(w / norm)
        total = term if total is None else total + term
    return total

"""Class-balanced binary cross-entropy with analytic gradients.

The per-voxel weight map equalizes the two classes around the foreground
ratio wf = sum(y) / DHW:

    wf > 0.5:  w = y + wf/(1-wf) * (1-y)      (down-weighting never happens;
    else:      w = (1-wf)/wf * y + (1-y)       the minority class is boosted)

so that sum(w*y) == sum(w*(1-y)) for any non-degenerate binary target.  The
combined objective is the sum of the weighted BCE of the semantic-mask pair
and of the instance-boundary pair.

All arithmetic runs in float64 regardless of storage dtype.  Predictions
are clamped to [EPS, 1-EPS] before the logs; the gradient is defined as 0
at clamped voxels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DegenerateTargetError, DomainError
from .volume import Volume, ensure_same_dims

EPS = 1e-7


@dataclass
class WeightMap:
    w: Volume
    wf: float


def _check_target(y: Volume) -> None:
    d = y.data
    if not bool(np.all((d == 0) | (d == 1))):
        raise DomainError("target must be strictly binary (values in {0, 1})")


def foreground_ratio(y: Volume) -> float:
    """Fraction of foreground voxels in a binary target."""
    _check_target(y)
    return float(np.count_nonzero(y.data)) / y.size


def _weights64(y: Volume) -> Tuple[np.ndarray, float]:
    _check_target(y)
    wf = foreground_ratio(y)
    if wf == 0.0 or wf == 1.0:
        raise DegenerateTargetError(
            f"target is degenerate (foreground ratio {wf}); weights are undefined"
        )
    y64 = y.data.astype(np.float64)
    if wf > 0.5:
        w = y64 + (wf / (1.0 - wf)) * (1.0 - y64)
    else:
        w = ((1.0 - wf) / wf) * y64 + (1.0 - y64)
    return w, wf


def weight_map(y: Volume) -> WeightMap:
    """Per-voxel class-balancing weights; rejects all-0 / all-1 targets."""
    w, wf = _weights64(y)
    return WeightMap(w=Volume(w.astype(np.float32)), wf=wf)


def wbce(x: Volume, y: Volume) -> Tuple[float, Volume]:
    """Weighted BCE loss and its gradient with respect to ``x``.

    Returns ``(loss, grad)`` where grad is an f32 volume;
    ``grad = w * (x - y) / (x * (1 - x)) / DHW`` at unclamped voxels, 0 where
    ``x`` fell outside [EPS, 1-EPS].
    """
    ensure_same_dims(x, y, "prediction and target")
    if x.dtype != np.float32:
        raise DomainError(f"prediction must be f32, got {x.dtype}")
    xd = x.data.astype(np.float64)
    if bool(np.isnan(xd).any()):
        raise DomainError("prediction holds NaN values")
    w, _ = _weights64(y)
    y64 = y.data.astype(np.float64)

    n = x.size
    xc = np.clip(xd, EPS, 1.0 - EPS)
    bce = -(y64 * np.log(xc) + (1.0 - y64) * np.log1p(-xc))
    loss = float(np.sum(w * bce) / n)

    unclamped = (xd >= EPS) & (xd <= 1.0 - EPS)
    grad = np.where(unclamped, w * (xc - y64) / (xc * (1.0 - xc)) / n, 0.0)
    return loss, Volume(grad.astype(np.float32))


def total_loss(xm: Volume, ym: Volume, xb: Volume, yb: Volume) -> float:
    """Sum of the semantic-mask and instance-boundary weighted BCE terms."""
    lm, _ = wbce(xm, ym)
    lb, _ = wbce(xb, yb)
    return lm + lb

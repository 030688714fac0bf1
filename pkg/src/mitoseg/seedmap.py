"""Seed-map synthesis from semantic-mask and instance-boundary probabilities.

A voxel becomes a seed exactly when the semantic mask is confidently
foreground and the boundary response is confidently low:

    seed[j] = 1  iff  mask[j] > t1  and  boundary[j] < t2

Both inequalities are strict; values equal to a threshold never seed.
Comparisons run in float64 against the thresholds as given.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError
from .volume import Volume, ensure_probability, ensure_same_dims


@dataclass(frozen=True)
class SeedParams:
    """Thresholds for seed synthesis; defaults follow the published pipeline."""

    t1: float = 0.9
    t2: float = 0.8

    def __post_init__(self) -> None:
        if not (0.0 <= self.t1 <= 1.0 and 0.0 <= self.t2 <= 1.0):
            raise InvalidArgumentError(
                f"thresholds must lie in [0, 1], got t1={self.t1}, t2={self.t2}"
            )


def make_seed_map(mask: Volume, boundary: Volume, params: SeedParams = SeedParams()) -> Volume:
    """Threshold the two probability volumes into a binary u8 seed map."""
    ensure_same_dims(mask, boundary, "mask and boundary")
    ensure_probability(mask, "mask")
    ensure_probability(boundary, "boundary")
    out = np.empty(mask.dims, dtype=np.uint8)
    _kernels.seed_map_into(mask.data, boundary.data, float(params.t1), float(params.t2), out)
    return Volume(out)

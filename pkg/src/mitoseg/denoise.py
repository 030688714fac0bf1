"""Kernel-application restoration of hand-marked noisy slices.

Restoration of a noisy frame never looks at the frame itself: the two axial
neighbors are each convolved with a per-pixel predicted kernel and the two
responses are summed.  Kernel prediction happens upstream; here the kernel
stacks arrive as files, which keeps the operator deterministic and testable.

Per pixel the two kernels form a convex combination: sum(k1) + sum(k2) must
equal 1 within 1e-4 (validated on load and on application).  Frame borders
use zero padding.  Masked pixels are hard-selected from the restored frame,
unmasked pixels and unmasked slices pass through bit-unchanged.  Neighbor
frames are always read from the input volume as given, so restoring with
the same inputs twice is idempotent when no two masked slices are adjacent.

File formats: a kernel field is an EMV1 f32 volume of dims (2*k*k, H, W)
(channel-major: k1 taps row-major, then k2) with a JSON sidecar
``{"k": ..., "slice_index": ...}`` at ``<path>.json``; a noise mask is an
EMV1 u8 volume of dims (1, H, W).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict

import numpy as np

from . import _kernels
from .errors import DomainError, InvalidArgumentError, MissingNeighborError
from .volume import Volume, load_volume, save_volume

NORM_TOL = 1e-4


@dataclass
class KernelField:
    """Per-pixel kernel stacks k1, k2 of shape (H, W, k, k), f32."""

    k1: np.ndarray
    k2: np.ndarray

    def __post_init__(self) -> None:
        if self.k1.shape != self.k2.shape or self.k1.ndim != 4:
            raise InvalidArgumentError(
                f"kernel stacks must share a (H, W, k, k) shape, got "
                f"{self.k1.shape} and {self.k2.shape}"
            )
        k = self.k1.shape[2]
        if k % 2 == 0 or self.k1.shape[3] != k:
            raise InvalidArgumentError(f"kernel window must be square and odd, got {self.k1.shape[2:]}")
        self.k1 = np.ascontiguousarray(self.k1, dtype=np.float32)
        self.k2 = np.ascontiguousarray(self.k2, dtype=np.float32)

    @property
    def frame_shape(self):
        return self.k1.shape[:2]

    @property
    def k(self) -> int:
        return int(self.k1.shape[2])


def _check_normalized(kf: KernelField) -> None:
    total = kf.k1.sum(axis=(2, 3), dtype=np.float64) + kf.k2.sum(axis=(2, 3), dtype=np.float64)
    if not bool(np.all(np.abs(total - 1.0) <= NORM_TOL)):
        worst = float(np.abs(total - 1.0).max())
        raise DomainError(
            f"kernels are not normalized: per-pixel sums deviate up to {worst:.3g} from 1"
        )


def apply_kernels(prev: np.ndarray, nxt: np.ndarray, kf: KernelField) -> np.ndarray:
    """Restored frame: prev (*) k1 + next (*) k2, per pixel, zero-padded borders."""
    prev = np.ascontiguousarray(prev, dtype=np.float32)
    nxt = np.ascontiguousarray(nxt, dtype=np.float32)
    if prev.shape != kf.frame_shape or nxt.shape != kf.frame_shape:
        raise InvalidArgumentError(
            f"frames {prev.shape}/{nxt.shape} do not match kernel field {kf.frame_shape}"
        )
    _check_normalized(kf)
    out = np.empty(kf.frame_shape, dtype=np.float32)
    _kernels.apply_kernels_into(prev, nxt, kf.k1, kf.k2, out)
    return out


def restore_slices(volume: Volume, masks: Dict[int, np.ndarray],
                   kernels: Dict[int, KernelField]) -> Volume:
    """Replace masked pixels of masked slices with kernel-restored values.

    ``masks`` maps slice index -> (H, W) u8 mask (1 = restore); ``kernels``
    must provide a field for every masked slice.  Integer volumes are
    restored with round-to-nearest and clipped to the dtype range.
    """
    d, h, w = volume.dims
    out = volume.data.copy()
    for z in sorted(masks):
        mask = np.asarray(masks[z])
        if mask.shape != (h, w):
            raise InvalidArgumentError(
                f"mask for slice {z} has shape {mask.shape}, frame is {(h, w)}"
            )
        if not bool(np.all((mask == 0) | (mask == 1))):
            raise DomainError(f"mask for slice {z} must be binary")
        if z < 1 or z > d - 2:
            raise MissingNeighborError(
                f"slice {z} lacks two in-bounds neighbors (volume depth {d})"
            )
        if z not in kernels:
            raise InvalidArgumentError(f"no kernel field provided for masked slice {z}")
        if not mask.any():
            continue
        restored = apply_kernels(volume.data[z - 1].astype(np.float32),
                                 volume.data[z + 1].astype(np.float32),
                                 kernels[z])
        sel = mask == 1
        if np.issubdtype(volume.dtype, np.integer):
            info = np.iinfo(volume.dtype)
            vals = np.clip(np.rint(restored[sel]), info.min, info.max).astype(volume.dtype)
        else:
            vals = restored[sel]
        out[z][sel] = vals
    return Volume(out, voxel_size=volume.voxel_size)


def save_kernel_field(kf: KernelField, slice_index: int, path) -> None:
    h, w, k, _ = kf.k1.shape
    stacked = np.concatenate(
        [
            np.moveaxis(kf.k1.reshape(h, w, k * k), -1, 0),
            np.moveaxis(kf.k2.reshape(h, w, k * k), -1, 0),
        ]
    )
    save_volume(Volume(np.ascontiguousarray(stacked)), path)
    with open(f"{path}.json", "w") as f:
        json.dump({"k": k, "slice_index": slice_index}, f)


def load_kernel_field(path):
    """Returns (KernelField, slice_index); validates normalization."""
    with open(f"{path}.json") as f:
        sidecar = json.load(f)
    k = int(sidecar["k"])
    v = load_volume(path)
    c, h, w = v.dims
    if c != 2 * k * k:
        raise InvalidArgumentError(
            f"kernel volume has {c} channels, sidecar k={k} implies {2 * k * k}"
        )
    planes = v.data
    k1 = np.moveaxis(planes[: k * k], 0, -1).reshape(h, w, k, k)
    k2 = np.moveaxis(planes[k * k :], 0, -1).reshape(h, w, k, k)
    kf = KernelField(k1=k1.copy(), k2=k2.copy())
    _check_normalized(kf)
    return kf, int(sidecar["slice_index"])


def load_noise_mask(path) -> np.ndarray:
    v = load_volume(path)
    if v.dims[0] != 1 or v.dtype != np.uint8:
        raise InvalidArgumentError(f"noise mask must be u8 with dims (1, H, W), got {v.dims} {v.dtype}")
    mask = v.data[0]
    if not bool(np.all((mask == 0) | (mask == 1))):
        raise DomainError("noise mask must be binary")
    return mask

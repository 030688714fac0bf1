"""Dense 3D volume container, EMV1 file I/O, and chunk-grid iteration.

A volume is a (D, H, W) array stored x-fastest (C order), so individual
acquisition slices stay contiguous in memory.  The on-disk EMV1 format is
bit-exact and deliberately minimal:

    bytes 0-3    magic "EMV1"
    byte  4      dtype code (0=u8, 1=u16, 2=u32, 3=u64, 4=f32)
    bytes 5-28   D, H, W as little-endian u64
    bytes 29-    raw little-endian payload, x-fastest order

No compression, no padding.  Large volumes are processed through a
:class:`ChunkGrid`: a regular tiling whose chunks cover every voxel exactly
once, optionally extended by a clamped halo for stencil-crossing passes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    InvalidArgumentError,
    SizeMismatchError,
    UnsupportedDtypeError,
    VolumeFormatError,
)

MAGIC = b"EMV1"
HEADER_SIZE = 29

# dtype code <-> numpy dtype (always little-endian on disk)
DTYPE_CODES = {
    0: np.dtype("<u1"),
    1: np.dtype("<u2"),
    2: np.dtype("<u4"),
    3: np.dtype("<u8"),
    4: np.dtype("<f4"),
}
_CODE_OF_DTYPE = {
    np.dtype(np.uint8): 0,
    np.dtype(np.uint16): 1,
    np.dtype(np.uint32): 2,
    np.dtype(np.uint64): 3,
    np.dtype(np.float32): 4,
}


def dtype_code(dtype: np.dtype) -> int:
    try:
        return _CODE_OF_DTYPE[np.dtype(dtype)]
    except KeyError:
        raise UnsupportedDtypeError(f"unsupported volume dtype: {np.dtype(dtype)}") from None


@dataclass
class Volume:
    """A dense 3D scalar grid with explicit dtype and optional voxel size.

    ``data`` is always C-contiguous (z, y, x); ``voxel_size`` is in-memory
    metadata (nm per axis, z/y/x order) and is not persisted by EMV1.
    """

    data: np.ndarray
    voxel_size: Optional[Tuple[float, float, float]] = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise InvalidArgumentError(f"volume data must be 3D, got shape {arr.shape}")
        dtype_code(arr.dtype)  # validates the dtype
        if any(s < 1 for s in arr.shape):
            raise InvalidArgumentError(f"volume dimensions must be >= 1, got {arr.shape}")
        self.data = np.ascontiguousarray(arr)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape)  # type: ignore[return-value]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size


def ensure_same_dims(a: Volume, b: Volume, what: str = "volumes") -> None:
    if a.dims != b.dims:
        raise InvalidArgumentError(f"{what} have mismatched dims: {a.dims} vs {b.dims}")


def ensure_probability(v: Volume, name: str = "volume") -> None:
    """Require an f32 volume with all values in [0, 1] (rejects NaN)."""
    from .errors import DomainError

    if v.dtype != np.float32:
        raise DomainError(f"{name} must be f32 to carry probabilities, got {v.dtype}")
    d = v.data
    if not bool(np.all((d >= 0.0) & (d <= 1.0))):
        raise DomainError(f"{name} holds values outside [0, 1]")


def ensure_binary(v: Volume, name: str = "volume") -> None:
    """Require values to be exactly 0 or 1 (any supported dtype)."""
    from .errors import DomainError

    d = v.data
    if not bool(np.all((d == 0) | (d == 1))):
        raise DomainError(f"{name} must be binary (values in {{0, 1}})")


def save_volume(v: Volume, path) -> None:
    """Write ``v`` to ``path`` in EMV1; round-trips bit-exactly with load_volume."""
    code = dtype_code(v.dtype)
    d, h, w = v.dims
    header = struct.pack("<4sBQQQ", MAGIC, code, d, h, w)
    payload = np.ascontiguousarray(v.data, dtype=DTYPE_CODES[code])
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes())


def load_volume(path, expect_probability: bool = False) -> Volume:
    """Read an EMV1 file; the returned volume's data is marked read-only.

    With ``expect_probability=True`` the payload is additionally validated
    as an f32 probability volume (values in [0, 1]).
    """
    with open(path, "rb") as f:
        header = f.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE or header[:4] != MAGIC:
            raise VolumeFormatError(f"not an EMV1 file: {path}")
        code, d, h, w = struct.unpack("<BQQQ", header[4:])
        if code not in DTYPE_CODES:
            raise UnsupportedDtypeError(f"unknown dtype code {code} in {path}")
        dtype = DTYPE_CODES[code]
        n = d * h * w
        raw = f.read()
    if len(raw) != n * dtype.itemsize:
        raise SizeMismatchError(
            f"payload of {path} holds {len(raw)} bytes, expected {n * dtype.itemsize}"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(d, h, w)
    # native byte order for computation; no-op on little-endian hosts
    data = np.ascontiguousarray(data.astype(dtype.newbyteorder("="), copy=False))
    data.flags.writeable = False
    v = Volume(data)
    if expect_probability:
        ensure_probability(v, str(path))
    return v


def _as_triple(value, name: str) -> Tuple[int, int, int]:
    if np.isscalar(value):
        value = (int(value),) * 3
    t = tuple(int(x) for x in value)
    if len(t) != 3:
        raise InvalidArgumentError(f"{name} must be a scalar or 3 values, got {value!r}")
    return t  # type: ignore[return-value]


@dataclass
class ChunkGrid:
    """Regular tiling of a (D, H, W) volume into chunks plus a clamped halo.

    Core regions tile the volume exactly once; halos extend each chunk by up
    to ``halo`` voxels per side but never past the volume bounds.
    """

    dims: Tuple[int, int, int]
    chunk_dims: Tuple[int, int, int]
    halo: Tuple[int, int, int] = (0, 0, 0)
    origins: Sequence[Tuple[int, int, int]] = field(init=False)

    def __post_init__(self) -> None:
        self.dims = _as_triple(self.dims, "dims")
        self.chunk_dims = _as_triple(self.chunk_dims, "chunk_dims")
        self.halo = _as_triple(self.halo, "halo")
        if any(c <= 0 for c in self.chunk_dims):
            raise InvalidArgumentError(f"chunk dimensions must be positive, got {self.chunk_dims}")
        if any(h < 0 for h in self.halo):
            raise InvalidArgumentError(f"halo must be >= 0, got {self.halo}")
        if any(c > d for c, d in zip(self.chunk_dims, self.dims)):
            raise InvalidArgumentError(
                f"chunk dims {self.chunk_dims} exceed volume dims {self.dims}"
            )
        d, h, w = self.dims
        cd, ch, cw = self.chunk_dims
        self.origins = [
            (z, y, x)
            for z in range(0, d, cd)
            for y in range(0, h, ch)
            for x in range(0, w, cw)
        ]

    @property
    def counts(self) -> Tuple[int, int, int]:
        """Number of chunks along each axis."""
        return tuple(-(-d // c) for d, c in zip(self.dims, self.chunk_dims))  # type: ignore[return-value]

    def core_shape(self, origin: Tuple[int, int, int]) -> Tuple[int, int, int]:
        return tuple(
            min(c, d - o) for c, d, o in zip(self.chunk_dims, self.dims, origin)
        )  # type: ignore[return-value]


@dataclass(frozen=True)
class Chunk:
    """One chunk yielded by :func:`iter_chunks`.

    ``view`` covers core plus clamped halo; ``lo`` is the actual halo extent
    before the core on each axis, so ``view[lo0:lo0+c0, ...]`` is the core.
    """

    origin: Tuple[int, int, int]
    core_shape: Tuple[int, int, int]
    lo: Tuple[int, int, int]
    view: np.ndarray


def iter_chunks(v: Volume, g: ChunkGrid) -> Iterator[Chunk]:
    """Yield read-only chunk views with clamped halos covering ``v`` exactly once."""
    if g.dims != v.dims:
        raise InvalidArgumentError(f"grid dims {g.dims} do not match volume dims {v.dims}")
    data = v.data
    for origin in g.origins:
        core = g.core_shape(origin)
        starts = [max(0, o - h) for o, h in zip(origin, g.halo)]
        stops = [
            min(d, o + c + h)
            for d, o, c, h in zip(v.dims, origin, core, g.halo)
        ]
        view = data[starts[0] : stops[0], starts[1] : stops[1], starts[2] : stops[2]]
        view = view.view()
        view.flags.writeable = False
        lo = tuple(o - s for o, s in zip(origin, starts))
        yield Chunk(origin=origin, core_shape=core, lo=lo, view=view)  # type: ignore[arg-type]

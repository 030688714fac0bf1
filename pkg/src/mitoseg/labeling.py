"""Connected-component labeling of seed maps into instance labels.

The volume is processed in three phases so multi-gigavoxel inputs scale
across workers:

1. per-chunk pass: each chunk is labeled independently (provisional labels
   local to the chunk) — embarrassingly parallel;
2. merge: labels touching across chunk boundaries are united in a single
   global union-find (one scan per internal boundary plane);
3. relabel: every chunk rewrites its provisional labels through the final
   lookup table — parallel again.

Final labels are dense 1..K, renumbered by the first (z, y, x) occurrence of
each component, so results are byte-identical for every chunk grid and every
worker count.  Components smaller than ``min_size`` are relabeled to 0
before renumbering.

Connectivity is 6 (face neighbors) by default: with anisotropic EM voxels
(axial spacing several times the lateral spacing) diagonal axial adjacency
is physically weak.  26 is available for isotropic data.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _kernels
from .errors import DomainError, InvalidArgumentError
from .metrics import SizeBins
from .volume import ChunkGrid, Volume

CONNECTIVITIES = (6, 26)

_LATERAL = {
    6: ((0, 0),),
    26: tuple((du, dv) for du in (-1, 0, 1) for dv in (-1, 0, 1)),
}


class UnionFind:
    """Array-backed union-find with path halving and union by rank."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.rank = np.zeros(n, dtype=np.uint8)

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = int(parent[x])
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1

    def resolve_all(self) -> np.ndarray:
        """Root of every element, fully resolved (pointer jumping)."""
        roots = self.parent.copy()
        while True:
            nxt = roots[roots]
            if np.array_equal(nxt, roots):
                return roots
            roots = nxt


def _check_connectivity(connectivity: int) -> None:
    if connectivity not in CONNECTIVITIES:
        raise InvalidArgumentError(f"connectivity must be 6 or 26, got {connectivity}")


def _check_seed(seed: Volume) -> None:
    data = seed.data
    if np.issubdtype(data.dtype, np.unsignedinteger):
        binary = int(data.max(initial=0)) <= 1
    else:
        binary = bool(np.all((data == 0) | (data == 1)))
    if not binary:
        raise DomainError("seed map must be binary (values in {0, 1})")


def _seed_u8(seed: Volume) -> np.ndarray:
    return seed.data if seed.dtype == np.uint8 else seed.data.astype(np.uint8)


def label_components(seed: Volume, connectivity: int = 6, min_size: int = 0) -> Volume:
    """Label connected seed components; labels are dense and scan-ordered."""
    _check_connectivity(connectivity)
    _check_seed(seed)
    if min_size < 0:
        raise InvalidArgumentError(f"min_size must be >= 0, got {min_size}")
    labels = np.zeros(seed.dims, dtype=np.uint32)
    d, h, w = seed.dims
    k, _, counts = _kernels.label_chunk(_seed_u8(seed), labels, 0, 0, 0, d, h, w, connectivity)
    if k and min_size > 1:
        keep = counts >= min_size
        if not bool(keep.all()):
            lut = np.zeros(k + 1, dtype=np.uint32)
            lut[1:] = np.where(keep, np.cumsum(keep), 0).astype(np.uint32)
            _kernels.relabel_into(labels, lut, 0, 0, 0, d, h, w)
    return Volume(labels)


def label_components_chunked(
    seed: Volume,
    grid: ChunkGrid,
    connectivity: int = 6,
    min_size: int = 0,
    workers: int = 1,
) -> Volume:
    """Chunk-parallel labeling; byte-identical to :func:`label_components`."""
    _check_connectivity(connectivity)
    _check_seed(seed)
    if grid.dims != seed.dims:
        raise InvalidArgumentError(f"grid dims {grid.dims} do not match volume dims {seed.dims}")
    if min_size < 0:
        raise InvalidArgumentError(f"min_size must be >= 0, got {min_size}")
    counts_per_axis = grid.counts
    for axis in range(3):
        if counts_per_axis[axis] > 1 and grid.halo[axis] < 1:
            raise InvalidArgumentError(
                "labeling across chunks needs halo >= 1 along split axes; "
                f"axis {axis} has {counts_per_axis[axis]} chunks and halo {grid.halo[axis]}"
            )
    if len(grid.origins) == 1:
        return label_components(seed, connectivity, min_size)

    data = _seed_u8(seed)
    labels = np.zeros(seed.dims, dtype=np.uint32)
    chunks = []
    for origin in grid.origins:
        shape = grid.core_shape(origin)
        chunks.append((origin, shape))

    def _pass_one(item):
        (z0, y0, x0), (cd, ch, cw) = item
        return _kernels.label_chunk(data, labels, z0, y0, x0, cd, ch, cw, connectivity)

    results = _map_workers(_pass_one, chunks, workers)

    ks = np.array([r[0] for r in results], dtype=np.int64)
    offsets = np.zeros(len(ks) + 1, dtype=np.int64)
    np.cumsum(ks, out=offsets[1:])
    total = int(offsets[-1])

    _, h, w = seed.dims
    first_global = np.zeros(total + 1, dtype=np.int64)
    counts_global = np.zeros(total + 1, dtype=np.int64)
    for (origin, shape), (k, first_local, counts), base in zip(chunks, results, offsets[:-1]):
        if k == 0:
            continue
        lz, rem = np.divmod(first_local, shape[1] * shape[2])
        ly, lx = np.divmod(rem, shape[2])
        gflat = ((lz + origin[0]) * h + (ly + origin[1])) * w + (lx + origin[2])
        first_global[base + 1 : base + k + 1] = gflat
        counts_global[base + 1 : base + k + 1] = counts

    uf = UnionFind(total + 1)
    for a, b in _boundary_pairs(labels, grid, connectivity, ks):
        uf.union(int(a), int(b))
    roots = uf.resolve_all()

    root_first = np.full(total + 1, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(root_first, roots[1:], first_global[1:])
    root_count = np.zeros(total + 1, dtype=np.int64)
    np.add.at(root_count, roots[1:], counts_global[1:])

    is_root = roots == np.arange(total + 1, dtype=np.int64)
    is_root[0] = False
    survivors = np.flatnonzero(is_root & (root_count >= max(min_size, 1)))
    order = np.argsort(root_first[survivors], kind="stable")
    final_of_root = np.zeros(total + 1, dtype=np.uint32)
    final_of_root[survivors[order]] = np.arange(1, survivors.size + 1, dtype=np.uint32)
    mapping = final_of_root[roots]

    def _pass_two(item_with_base):
        ((z0, y0, x0), (cd, ch, cw)), k, base = item_with_base
        lut = mapping[base : base + k + 1].copy()
        lut[0] = 0
        _kernels.relabel_into(labels, lut, z0, y0, x0, cd, ch, cw)

    _map_workers(
        _pass_two,
        [(c, int(k), int(base)) for c, k, base in zip(chunks, ks, offsets[:-1])],
        workers,
    )
    return Volume(labels)


def _map_workers(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _boundary_pairs(labels: np.ndarray, grid: ChunkGrid, connectivity: int,
                    ks: np.ndarray) -> np.ndarray:
    """Unique (global_id, global_id) pairs of labels touching across chunk faces."""
    dims = labels.shape
    nz, ny, nx = grid.counts
    offsets3 = np.zeros(nz * ny * nx + 1, dtype=np.int64)
    np.cumsum(ks, out=offsets3[1:])
    offsets3 = offsets3[:-1].reshape(nz, ny, nx)
    idx = [np.arange(dims[a]) // grid.chunk_dims[a] for a in range(3)]
    laterals = _LATERAL[connectivity]

    keys = []
    for axis in range(3):
        step = grid.chunk_dims[axis]
        for p in range(step, dims[axis], step):
            slab_a = _take_plane(labels, axis, p - 1)
            slab_b = _take_plane(labels, axis, p)
            off_a = _plane_offsets(offsets3, idx, axis, p - 1, grid)
            off_b = _plane_offsets(offsets3, idx, axis, p, grid)
            for du, dv in laterals:
                sa, sb = _lateral_slices(slab_a.shape, du, dv)
                a = slab_a[sa]
                b = slab_b[sb]
                m = (a > 0) & (b > 0)
                if not m.any():
                    continue
                ga = (a[m].astype(np.int64) + off_a[sa][m]).astype(np.uint64)
                gb = (b[m].astype(np.int64) + off_b[sb][m]).astype(np.uint64)
                keys.append(ga << np.uint64(32) | gb)
    if not keys:
        return np.empty((0, 2), dtype=np.int64)
    uniq = np.unique(np.concatenate(keys))
    out = np.empty((uniq.size, 2), dtype=np.int64)
    out[:, 0] = (uniq >> np.uint64(32)).astype(np.int64)
    out[:, 1] = (uniq & np.uint64(0xFFFFFFFF)).astype(np.int64)
    return out


def _take_plane(vol: np.ndarray, axis: int, pos: int) -> np.ndarray:
    sl = [slice(None)] * 3
    sl[axis] = pos
    return vol[tuple(sl)]


def _plane_offsets(offsets3: np.ndarray, idx, axis: int, pos: int, grid: ChunkGrid) -> np.ndarray:
    """Per-voxel chunk base offsets for a 2D plane orthogonal to ``axis``."""
    c = pos // grid.chunk_dims[axis]
    if axis == 0:
        return offsets3[c][np.ix_(idx[1], idx[2])]
    if axis == 1:
        return offsets3[idx[0][:, None], c, idx[2][None, :]]
    return offsets3[idx[0][:, None], idx[1][None, :], c]


def _lateral_slices(shape: Tuple[int, int], du: int, dv: int):
    u, v = shape
    sa = (slice(max(0, -du), u - max(0, du)), slice(max(0, -dv), v - max(0, dv)))
    sb = (slice(max(0, du), u - max(0, -du)), slice(max(0, dv), v - max(0, -dv)))
    return sa, sb


@dataclass
class InstanceTable:
    """Per-instance voxel counts, size categories, and detection scores."""

    labels: np.ndarray      # instance ids 1..K
    counts: np.ndarray      # voxel count per instance
    categories: np.ndarray  # 'small' | 'med' | 'large'
    scores: np.ndarray      # mean probability if provided, else voxel count

    def __len__(self) -> int:
        return int(self.labels.size)


def instance_table(
    labels: Volume,
    score_source: Optional[Volume] = None,
    bins: Optional[SizeBins] = None,
) -> InstanceTable:
    """Tabulate a label volume; scores fall back to voxel counts."""
    if labels.dtype not in (np.uint32, np.uint64):
        raise InvalidArgumentError(f"label volume must be u32 or u64, got {labels.dtype}")
    bins = bins or SizeBins()
    flat = labels.data.ravel()
    counts = np.bincount(flat)
    k = counts.size - 1
    if k > 0 and bool((counts[1:] == 0).any()):
        raise DomainError("label volume has gaps; labels must be dense 1..K")
    if k == 0:
        empty = np.empty(0, dtype=np.int64)
        return InstanceTable(empty, empty.copy(), np.empty(0, dtype=object),
                             np.empty(0, dtype=np.float64))
    counts = counts[1:].astype(np.int64)
    if score_source is not None:
        if score_source.dims != labels.dims:
            raise InvalidArgumentError(
                f"score source dims {score_source.dims} do not match labels {labels.dims}"
            )
        sums = np.bincount(flat, weights=score_source.data.ravel().astype(np.float64),
                           minlength=k + 1)[1:]
        scores = sums / counts
    else:
        scores = counts.astype(np.float64)
    return InstanceTable(
        labels=np.arange(1, k + 1, dtype=np.int64),
        counts=counts,
        categories=bins.category_array(counts),
        scores=scores,
    )

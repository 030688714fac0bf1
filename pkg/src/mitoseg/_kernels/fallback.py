"""Pure-NumPy implementations of the hot kernels.

Selected by :mod:`mitoseg._kernels` when the compiled extension is missing
or when ``MITOSEG_PURE=1``.  Outputs are bit-identical to the compiled
kernels: comparisons run in float64, per-pixel accumulation follows the
same tap order, and chunk labels carry the same (partition, first
occurrence, count) semantics that the shared finalization consumes.
"""

from __future__ import annotations

import numpy as np

BACKEND = "fallback"

# backward half-stencils (dz, dy, dx), raster-scan order
_BACK_6 = ((-1, 0, 0), (0, -1, 0), (0, 0, -1))
_BACK_26 = tuple(
    (dz, dy, dx)
    for dz in (-1, 0)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dz, dy, dx) < (0, 0, 0)
)


def quantize_thresholds(t1: float, t2: float):
    """f32 thresholds reproducing the double-precision predicates exactly.

    For f32 values x, ``float64(x) > t1`` holds iff ``x > t1_lo`` in f32,
    where t1_lo is the largest f32 <= t1 (no f32 value lies strictly
    between them); symmetrically ``float64(x) < t2`` iff ``x < t2_hi``.
    """
    t1f = np.float32(t1)
    if float(t1f) > t1:
        t1f = np.nextafter(t1f, np.float32(-np.inf))
    t2f = np.float32(t2)
    if float(t2f) < t2:
        t2f = np.nextafter(t2f, np.float32(np.inf))
    return t1f, t2f


def seed_map_into(mask: np.ndarray, boundary: np.ndarray, t1: float, t2: float,
                  out: np.ndarray) -> None:
    t1f, t2f = quantize_thresholds(t1, t2)
    np.logical_and(mask > t1f, boundary < t2f, out=out.view(bool))


def _runs(seed: np.ndarray):
    """Decompose foreground into x-runs: (row, x0, x1_exclusive) per run."""
    d, h, w = seed.shape
    rows = np.ascontiguousarray(seed).reshape(d * h, w) != 0
    padded = np.zeros((d * h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = rows
    step = np.diff(padded, axis=1)
    srow, sx = np.nonzero(step == 1)
    ex = np.nonzero(step == -1)[1]
    # starts and ends pair up within each row; both scans are row-major
    return srow, sx, ex


def label_chunk(seed: np.ndarray, labels: np.ndarray,
                z0: int, y0: int, x0: int, cd: int, ch: int, cw: int,
                connectivity: int):
    """Run-based connected-component pass over one chunk box.

    Writes dense labels 1..K into the box (numbered by first occurrence in
    z,y,x raster order) and returns ``(K, first_flat, counts)`` where
    ``first_flat`` is the chunk-local flat index of each label's first voxel.
    """
    box = (slice(z0, z0 + cd), slice(y0, y0 + ch), slice(x0, x0 + cw))
    return _label_box(seed[box], labels[box], connectivity)


def _label_box(seed: np.ndarray, labels: np.ndarray, connectivity: int):
    d, h, w = seed.shape
    run_row, run_x0, run_x1 = _runs(seed)
    n_runs = run_row.size
    if n_runs == 0:
        labels[:] = 0
        return 0, np.empty(0, np.int64), np.empty(0, np.int64)

    lengths = (run_x1 - run_x0).astype(np.int64)
    creation = run_row.astype(np.int64) * w + run_x0  # == chunk-local flat index

    # paint provisional run ids (1-based, raster order) into a scratch array
    ids = np.arange(1, n_runs + 1, dtype=np.uint32)
    flat = np.zeros(d * h * w, dtype=np.uint32)
    starts_flat = creation
    total = int(lengths.sum())
    pos = np.repeat(starts_flat, lengths) + (
        np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    )
    flat[pos] = np.repeat(ids, lengths)
    provisional = flat.reshape(d, h, w)

    # merge runs touching under the stencil
    parent = np.arange(n_runs + 1, dtype=np.int64)
    offsets = _BACK_6 if connectivity == 6 else _BACK_26
    for dz, dy, dx in offsets:
        if dz == 0 and dy == 0:
            continue  # in-row contacts are already merged into runs
        a, b = _shifted_pair(provisional, dz, dy, dx)
        m = (a != 0) & (b != 0)
        if not m.any():
            continue
        pairs = np.unique(
            a[m].astype(np.uint64) << np.uint64(32) | b[m].astype(np.uint64)
        )
        for key in pairs:
            _union(parent, int(key >> np.uint64(32)), int(key & np.uint64(0xFFFFFFFF)))

    roots = _resolve(parent)

    # dense ids in first-occurrence order = ascending minimal member id
    uniq, first_member = np.unique(roots[1:], return_index=True)
    order = np.argsort(first_member, kind="stable")
    dense_of_root = np.zeros(n_runs + 1, dtype=np.uint32)
    dense_of_root[uniq[order]] = np.arange(1, uniq.size + 1, dtype=np.uint32)
    dense = dense_of_root[roots]  # run id -> final chunk-local label

    k = int(uniq.size)
    counts = np.zeros(k + 1, dtype=np.int64)
    np.add.at(counts, dense[1:], lengths)
    first = creation[first_member[order]]

    lut = np.concatenate(([np.uint32(0)], dense[1:]))
    labels[:] = lut[provisional]
    return k, first, counts[1:]


def _shifted_pair(vol: np.ndarray, dz: int, dy: int, dx: int):
    """Views of ``vol`` pairing each voxel with its (dz,dy,dx) neighbor."""
    sl_a, sl_b = [], []
    for delta, n in zip((dz, dy, dx), vol.shape):
        sl_a.append(slice(max(0, -delta), n - max(0, delta)))
        sl_b.append(slice(max(0, delta), n - max(0, -delta)))
    return vol[tuple(sl_a)], vol[tuple(sl_b)]


def _union(parent: np.ndarray, a: int, b: int) -> None:
    ra, rb = _find(parent, a), _find(parent, b)
    if ra != rb:
        if ra > rb:
            ra, rb = rb, ra
        parent[rb] = ra


def _find(parent: np.ndarray, x: int) -> int:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = int(parent[x])
    return x


def _resolve(parent: np.ndarray) -> np.ndarray:
    roots = parent.copy()
    while True:
        nxt = roots[roots]
        if np.array_equal(nxt, roots):
            return roots
        roots = nxt


def relabel_into(labels: np.ndarray, lut: np.ndarray,
                 z0: int, y0: int, x0: int, cd: int, ch: int, cw: int) -> None:
    """labels[box] <- lut[labels[box]]; the caller guarantees lut[0] == 0."""
    box = (slice(z0, z0 + cd), slice(y0, y0 + ch), slice(x0, x0 + cw))
    labels[box] = lut[labels[box]]


def apply_kernels_into(prev: np.ndarray, nxt: np.ndarray, k1: np.ndarray,
                       k2: np.ndarray, out: np.ndarray) -> None:
    h, w, k, _ = k1.shape
    c = k // 2
    pp = np.zeros((h + 2 * c, w + 2 * c), dtype=np.float64)
    pn = np.zeros_like(pp)
    pp[c : c + h, c : c + w] = prev
    pn[c : c + h, c : c + w] = nxt
    acc1 = np.zeros((h, w), dtype=np.float64)
    acc2 = np.zeros((h, w), dtype=np.float64)
    # fixed (u, v) tap order; matches the compiled kernel's accumulation
    for u in range(k):
        for v in range(k):
            acc1 += pp[u : u + h, v : v + w] * k1[:, :, u, v].astype(np.float64)
            acc2 += pn[u : u + h, v : v + w] * k2[:, :, u, v].astype(np.float64)
    out[:] = (acc1 + acc2).astype(np.float32)

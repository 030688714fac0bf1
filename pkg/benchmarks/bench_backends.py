"""Benchmark the compiled kernels against the pure-NumPy fallback.

Usage:
    python benchmarks/bench_backends.py [--n 256] [--workers 4] [--scale-n 512]

Prints per-kernel timings for both backends plus end-to-end labeling with
1 and N workers.  The worker-scaling check is a soft threshold: a warning,
not a failure, since it depends on the machine's core count and memory
bandwidth.
"""

import argparse
import time

import numpy as np

import mitoseg._kernels.fallback as fallback
from mitoseg import ChunkGrid, Volume, label_components_chunked

try:
    import mitoseg._core as compiled
except ImportError:
    compiled = None


def _timeit(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _blobby_seed(n, rng):
    seed = np.zeros((n, n, n), dtype=np.uint8)
    for _ in range(max(32, n)):
        size = rng.integers(max(4, n // 32), max(8, n // 8), 3)
        z, y, x = (int(rng.integers(0, n - s)) for s in size)
        seed[z : z + int(size[0]), y : y + int(size[1]), x : x + int(size[2])] = 1
    return seed


def bench_kernels(n, rng):
    rows = []
    mask = rng.random((n, n, n), dtype=np.float32)
    boundary = rng.random((n, n, n), dtype=np.float32)
    out_u8 = np.empty((n, n, n), np.uint8)
    rows.append((
        f"seed_map {n}^3",
        _timeit(lambda: compiled.seed_map_into(mask, boundary, 0.9, 0.8, out_u8)) if compiled else None,
        _timeit(lambda: fallback.seed_map_into(mask, boundary, 0.9, 0.8, out_u8)),
    ))

    seed = _blobby_seed(n, rng)
    box = (0, 0, 0, n, n, n)

    def run_label(impl):
        labels = np.zeros((n, n, n), np.uint32)
        impl.label_chunk(seed, labels, *box, 6)

    rows.append((
        f"label_chunk {n}^3 conn6",
        _timeit(lambda: run_label(compiled)) if compiled else None,
        _timeit(lambda: run_label(fallback)),
    ))

    labels = np.zeros((n, n, n), np.uint32)
    k, _, _ = (compiled or fallback).label_chunk(seed, labels, *box, 6)
    lut = np.arange(k + 1, dtype=np.uint32)
    rows.append((
        f"relabel {n}^3",
        _timeit(lambda: compiled.relabel_into(labels, lut, *box)) if compiled else None,
        _timeit(lambda: fallback.relabel_into(labels, lut, *box)),
    ))

    h = w = 512
    kk = 13
    prev = rng.random((h, w), dtype=np.float32)
    nxt = rng.random((h, w), dtype=np.float32)
    k1 = rng.random((h, w, kk, kk), dtype=np.float32)
    k2 = rng.random((h, w, kk, kk), dtype=np.float32)
    out_f32 = np.empty((h, w), np.float32)
    rows.append((
        f"apply_kernels {h}x{w} k={kk}",
        _timeit(lambda: compiled.apply_kernels_into(prev, nxt, k1, k2, out_f32), repeat=1)
        if compiled else None,
        _timeit(lambda: fallback.apply_kernels_into(prev, nxt, k1, k2, out_f32), repeat=1),
    ))
    return rows


def bench_scaling(n, workers, rng):
    seed = Volume(_blobby_seed(n, rng))
    chunk = max(32, n // 4)
    grid = ChunkGrid(seed.dims, (chunk, chunk, chunk), halo=1)
    label_components_chunked(seed, grid, 6, workers=workers)  # warm-up
    t_one = _timeit(lambda: label_components_chunked(seed, grid, 6, workers=1), repeat=2)
    t_many = _timeit(lambda: label_components_chunked(seed, grid, 6, workers=workers), repeat=2)
    return t_one, t_many


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=256, help="volume edge for kernel benchmarks")
    ap.add_argument("--scale-n", type=int, default=512, help="volume edge for worker scaling")
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"compiled extension: {'present' if compiled else 'MISSING (fallback only)'}")
    print()
    print(f"{'kernel':32s} {'compiled':>10s} {'fallback':>10s} {'ratio':>7s}")
    for name, tc, tf in bench_kernels(args.n, rng):
        ratio = f"{tf / tc:6.1f}x" if tc else "    n/a"
        tc_s = f"{tc * 1e3:8.1f}ms" if tc else "       -"
        print(f"{name:32s} {tc_s} {tf * 1e3:8.1f}ms {ratio}")

    print()
    t_one, t_many = bench_scaling(args.scale_n, args.workers, rng)
    speedup = t_one / t_many
    print(
        f"labeling {args.scale_n}^3 end-to-end: 1 worker {t_one:.2f}s, "
        f"{args.workers} workers {t_many:.2f}s, speedup {speedup:.2f}x"
    )
    if speedup < 2.0:
        print(
            "warning: speedup below the 2x soft threshold "
            "(expected on machines with fewer than 4 effective cores "
            "or when memory bandwidth dominates)"
        )


if __name__ == "__main__":
    main()

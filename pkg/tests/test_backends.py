"""Bit-exact agreement between the compiled kernels and the NumPy fallback."""

import numpy as np
import pytest

import mitoseg._kernels.fallback as fallback

core = pytest.importorskip("mitoseg._core", reason="compiled extension not built")


def test_backend_reports_name():
    from mitoseg import backend_name

    assert backend_name() in ("compiled", "fallback")
    assert fallback.BACKEND == "fallback"
    assert core.BACKEND == "compiled"


def test_seed_map_bitwise_parity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        shape = tuple(int(x) for x in rng.integers(1, 24, 3))
        mask = rng.random(shape, dtype=np.float32)
        boundary = rng.random(shape, dtype=np.float32)
        t1, t2 = float(rng.random()), float(rng.random())
        a = np.empty(shape, np.uint8)
        b = np.empty(shape, np.uint8)
        core.seed_map_into(mask, boundary, t1, t2, a)
        fallback.seed_map_into(mask, boundary, t1, t2, b)
        assert np.array_equal(a, b)


def test_label_chunk_parity():
    rng = np.random.default_rng(1)
    for _ in range(30):
        shape = tuple(int(x) for x in rng.integers(1, 20, 3))
        seed = (rng.random(shape) < rng.uniform(0.1, 0.8)).astype(np.uint8)
        for conn in (6, 26):
            la = np.zeros(shape, np.uint32)
            lb = np.zeros(shape, np.uint32)
            box = (0, 0, 0) + shape
            ka, fa, ca = core.label_chunk(seed, la, *box, conn)
            kb, fb, cb = fallback.label_chunk(seed, lb, *box, conn)
            assert ka == kb
            assert np.array_equal(la, lb)
            assert np.array_equal(fa, fb)
            assert np.array_equal(ca, cb)


def test_label_chunk_parity_on_interior_box():
    rng = np.random.default_rng(2)
    seed = (rng.random((12, 13, 14)) < 0.5).astype(np.uint8)
    box = (2, 3, 4, 7, 6, 5)
    for conn in (6, 26):
        la = np.zeros(seed.shape, np.uint32)
        lb = np.zeros(seed.shape, np.uint32)
        ka, fa, ca = core.label_chunk(seed, la, *box, conn)
        kb, fb, cb = fallback.label_chunk(seed, lb, *box, conn)
        assert (ka, fa.tolist(), ca.tolist()) == (kb, fb.tolist(), cb.tolist())
        assert np.array_equal(la, lb)


def test_relabel_parity():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 9, (10, 10, 10)).astype(np.uint32)
    lut = np.concatenate(([0], rng.permutation(np.arange(1, 9, dtype=np.uint32)))).astype(np.uint32)
    a = labels.copy()
    b = labels.copy()
    core.relabel_into(a, lut, 1, 2, 3, 6, 5, 4)
    fallback.relabel_into(b, lut, 1, 2, 3, 6, 5, 4)
    assert np.array_equal(a, b)
    assert np.array_equal(a[0], labels[0])  # outside the box untouched


def test_apply_kernels_bitwise_parity():
    rng = np.random.default_rng(4)
    for _ in range(10):
        h, w = int(rng.integers(2, 24)), int(rng.integers(2, 24))
        k = int(rng.choice([1, 3, 5, 7]))
        prev = rng.normal(size=(h, w)).astype(np.float32)
        nxt = rng.normal(size=(h, w)).astype(np.float32)
        k1 = rng.random((h, w, k, k), dtype=np.float32)
        k2 = rng.random((h, w, k, k), dtype=np.float32)
        a = np.empty((h, w), np.float32)
        b = np.empty((h, w), np.float32)
        core.apply_kernels_into(prev, nxt, k1, k2, a)
        fallback.apply_kernels_into(prev, nxt, k1, k2, b)
        assert a.tobytes() == b.tobytes()


def test_full_labeling_identical_under_forced_fallback(monkeypatch):
    from mitoseg import ChunkGrid, Volume, label_components, label_components_chunked
    from mitoseg import _kernels

    rng = np.random.default_rng(5)
    seed = Volume((rng.random((40, 40, 40)) < 0.5).astype(np.uint8))
    grid = ChunkGrid((40, 40, 40), (16, 16, 16), halo=1)
    compiled_whole = label_components(seed, 26).data.tobytes()
    compiled_chunked = label_components_chunked(seed, grid, 26, workers=2).data.tobytes()

    monkeypatch.setattr(_kernels, "label_chunk", fallback.label_chunk)
    monkeypatch.setattr(_kernels, "relabel_into", fallback.relabel_into)
    fb_whole = label_components(seed, 26).data.tobytes()
    fb_chunked = label_components_chunked(seed, grid, 26, workers=2).data.tobytes()

    assert compiled_whole == fb_whole == compiled_chunked == fb_chunked

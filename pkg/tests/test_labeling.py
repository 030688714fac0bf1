import numpy as np
import pytest

from mitoseg import (
    ChunkGrid,
    UnionFind,
    Volume,
    instance_table,
    label_components,
    label_components_chunked,
)
from mitoseg.errors import DomainError, InvalidArgumentError
from oracles import flood_fill_labels, histogram_scalar


def _seed(arr):
    return Volume(np.asarray(arr, dtype=np.uint8))


def _random_seed(rng, shape, density):
    return _seed(rng.random(shape) < density)


def test_empty_volume_has_no_labels():
    labels = label_components(_seed(np.zeros((8, 8, 8))))
    assert labels.data.max() == 0
    assert labels.dtype == np.uint32


def test_two_isolated_voxels_in_scan_order():
    seed = np.zeros((8, 8, 8), dtype=np.uint8)
    seed[0, 0, 0] = 1
    seed[4, 4, 4] = 1
    labels = label_components(_seed(seed), connectivity=6)
    assert labels.data[0, 0, 0] == 1
    assert labels.data[4, 4, 4] == 2
    assert labels.data.max() == 2


@pytest.mark.parametrize("connectivity", [6, 26])
def test_matches_flood_fill_oracle(connectivity):
    rng = np.random.default_rng(2)
    for density in (0.15, 0.4, 0.65):
        seed = _random_seed(rng, (48, 40, 56), density)
        got = label_components(seed, connectivity).data
        assert np.array_equal(got, flood_fill_labels(seed.data, connectivity))


def test_connectivity_is_respected():
    # two voxels touching only diagonally: split under 6, joined under 26
    seed = np.zeros((2, 2, 2), dtype=np.uint8)
    seed[0, 0, 0] = 1
    seed[1, 1, 1] = 1
    assert label_components(_seed(seed), 6).data.max() == 2
    assert label_components(_seed(seed), 26).data.max() == 1


@pytest.mark.parametrize("connectivity", [6, 26])
@pytest.mark.parametrize("chunk", [(32, 32, 32), (16, 16, 16), (48, 32, 24)])
def test_chunked_is_bit_identical(connectivity, chunk):
    rng = np.random.default_rng(3)
    seed = _random_seed(rng, (64, 64, 64), 0.45)
    whole = label_components(seed, connectivity)
    grid = ChunkGrid(seed.dims, chunk, halo=1)
    for workers in (1, 4):
        got = label_components_chunked(seed, grid, connectivity, workers=workers)
        assert got.data.tobytes() == whole.data.tobytes()


def test_single_chunk_grid_equals_whole():
    rng = np.random.default_rng(4)
    seed = _random_seed(rng, (20, 20, 20), 0.5)
    grid = ChunkGrid(seed.dims, seed.dims)
    got = label_components_chunked(seed, grid, 6)
    assert got.data.tobytes() == label_components(seed, 6).data.tobytes()


def test_component_straddling_chunk_face_stays_one_label():
    seed = np.zeros((8, 8, 32), dtype=np.uint8)
    seed[4, 4, 12:20] = 1  # bar crossing the x=16 chunk boundary
    grid = ChunkGrid((8, 8, 32), (8, 8, 16), halo=1)
    labels = label_components_chunked(_seed(seed), grid, 6)
    assert labels.data.max() == 1
    assert np.array_equal(labels.data, flood_fill_labels(seed, 6))


def test_min_size_filter_matches_oracle():
    rng = np.random.default_rng(5)
    seed = _random_seed(rng, (40, 40, 40), 0.25)
    for min_size in (2, 5, 20):
        got = label_components(seed, 6, min_size=min_size).data
        assert np.array_equal(got, flood_fill_labels(seed.data, 6, min_size=min_size))
        grid = ChunkGrid(seed.dims, (16, 16, 16), halo=1)
        chunked = label_components_chunked(seed, grid, 6, min_size=min_size).data
        assert np.array_equal(chunked, got)


def test_determinism_across_runs():
    rng = np.random.default_rng(6)
    seed = _random_seed(rng, (32, 32, 32), 0.5)
    a = label_components(seed, 26).data.tobytes()
    b = label_components(seed, 26).data.tobytes()
    assert a == b


def test_labels_are_dense():
    rng = np.random.default_rng(7)
    seed = _random_seed(rng, (24, 24, 24), 0.3)
    labels = label_components(seed, 6, min_size=3)
    uniq = np.unique(labels.data)
    assert np.array_equal(uniq, np.arange(uniq.size))


def test_validation_errors():
    with pytest.raises(DomainError):
        label_components(Volume(np.full((2, 2, 2), 2, dtype=np.uint8)))
    with pytest.raises(InvalidArgumentError):
        label_components(_seed(np.zeros((2, 2, 2))), connectivity=18)
    with pytest.raises(InvalidArgumentError):
        label_components(_seed(np.zeros((2, 2, 2))), min_size=-1)
    seed = _seed(np.zeros((8, 8, 8)))
    with pytest.raises(InvalidArgumentError):
        label_components_chunked(seed, ChunkGrid((8, 8, 8), (4, 8, 8), halo=0))
    with pytest.raises(InvalidArgumentError):
        label_components_chunked(seed, ChunkGrid((9, 9, 9), (4, 4, 4), halo=1))


def test_union_find_basics():
    uf = UnionFind(10)
    uf.union(1, 2)
    uf.union(3, 4)
    uf.union(2, 3)
    root = uf.find(1)
    assert all(uf.find(i) == root for i in (1, 2, 3, 4))
    assert uf.find(root) == root  # idempotent
    other = UnionFind(10)
    other.union(4, 3)
    other.union(2, 1)
    other.union(3, 2)  # union order must not change the partition
    assert len({other.find(i) for i in (1, 2, 3, 4)}) == 1
    roots = uf.resolve_all()
    assert roots[1] == roots[2] == roots[3] == roots[4]
    assert roots[5] == 5


def test_instance_table_empty():
    table = instance_table(label_components(_seed(np.zeros((4, 4, 4)))))
    assert len(table) == 0


def test_instance_table_size_categories():
    # 4999 voxels: one voxel shy of the small/med boundary
    seed = np.ones((1, 50, 100), dtype=np.uint8)
    seed[0, 49, 99] = 0
    table = instance_table(label_components(_seed(seed), 6))
    assert table.counts.tolist() == [4999]
    assert table.categories.tolist() == ["small"]

    table = instance_table(label_components(_seed(np.ones((1, 50, 100))), 6))
    assert table.counts.tolist() == [5000]
    assert table.categories.tolist() == ["med"]

    table = instance_table(label_components(_seed(np.ones((1, 100, 150))), 6))
    assert table.counts.tolist() == [15000]
    assert table.categories.tolist() == ["large"]


def test_instance_table_counts_match_histogram():
    rng = np.random.default_rng(8)
    seed = _random_seed(rng, (24, 24, 24), 0.4)
    labels = label_components(seed, 6)
    table = instance_table(labels)
    expect = histogram_scalar(labels.data)
    assert {int(l): int(c) for l, c in zip(table.labels, table.counts)} == expect
    assert np.array_equal(table.scores, table.counts.astype(np.float64))


def test_instance_table_scores_from_source():
    seed = np.zeros((2, 2, 2), dtype=np.uint8)
    seed[0, 0, :] = 1
    labels = label_components(_seed(seed), 6)
    source = np.zeros((2, 2, 2), dtype=np.float32)
    source[0, 0, 0] = 0.25
    source[0, 0, 1] = 0.75
    table = instance_table(labels, score_source=Volume(source))
    assert table.scores.tolist() == [0.5]
    with pytest.raises(InvalidArgumentError):
        instance_table(labels, score_source=Volume(np.zeros((1, 2, 2), dtype=np.float32)))


def test_instance_table_rejects_gaps():
    data = np.zeros((2, 2, 2), dtype=np.uint32)
    data[0, 0, 0] = 2  # label 1 missing
    with pytest.raises(DomainError):
        instance_table(Volume(data))
    with pytest.raises(InvalidArgumentError):
        instance_table(Volume(np.zeros((2, 2, 2), dtype=np.float32)))

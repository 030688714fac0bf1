import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mitoseg import (
    SizeBins,
    Volume,
    ap_at_threshold,
    evaluate_instances,
    match_instances,
    overlap_table,
    semantic_metrics,
)
from mitoseg.errors import InvalidArgumentError, UnsupportedThresholdError
from mitoseg.labeling import InstanceTable
from mitoseg.metrics import MatchPair, _average_precision
from oracles import overlap_counts_scalar


def _labels(arr):
    return Volume(np.asarray(arr, dtype=np.uint32))


def _mask(arr):
    return Volume(np.asarray(arr, dtype=np.uint8))


def _row_volume(values, length=16):
    data = np.zeros((1, 1, length), dtype=np.uint32)
    data[0, 0, : len(values)] = values
    return Volume(data)


def test_overlap_identical_volumes_is_diagonal():
    rng = np.random.default_rng(0)
    labels = _labels(rng.integers(0, 4, (8, 8, 8)))
    t = overlap_table(labels, labels)
    for (p, g), inter in t.pairs.items():
        assert p == g
        assert inter == t.pred_sizes[p] == t.gt_sizes[g]


def test_overlap_disjoint_supports_is_empty():
    pred = _row_volume([1, 1, 0, 0])
    gt = _row_volume([0, 0, 2, 2])
    assert overlap_table(pred, gt).pairs == {}


def test_overlap_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    pred = _labels(rng.integers(0, 6, (32, 32, 32)))
    gt = _labels(rng.integers(0, 6, (32, 32, 32)))
    t = overlap_table(pred, gt)
    assert t.pairs == overlap_counts_scalar(pred.data, gt.data)
    # summed intersections never exceed either side's total
    for axis, sizes in ((0, t.pred_sizes), (1, t.gt_sizes)):
        sums = {}
        for key, inter in t.pairs.items():
            sums[key[axis]] = sums.get(key[axis], 0) + inter
        for label, total in sums.items():
            assert total <= sizes[label]


def test_overlap_dim_mismatch():
    with pytest.raises(InvalidArgumentError):
        overlap_table(_row_volume([1]), _labels(np.zeros((1, 2, 2))))


def test_iou_boundary_case_three_quarters():
    # |pred| = 3, |gt| = 4, intersection 3 -> IoU = 3 / (3 + 4 - 3) = 0.75
    pred = _row_volume([1, 1, 1, 0])
    gt = _row_volume([1, 1, 1, 1])
    t = overlap_table(pred, gt)
    assert t.iou(1, 1) == 0.75
    assert [(m.pred, m.gt) for m in match_instances(t, 0.75)] == [(1, 1)]
    assert match_instances(t, 0.76) == []


def test_iou_small_overlap_unmatched():
    # |pred| = 4, |gt| = 4, intersection 2 -> IoU = 2 / 6
    pred = _row_volume([1, 1, 1, 1, 0, 0])
    gt = _row_volume([0, 0, 1, 1, 1, 1])
    t = overlap_table(pred, gt)
    assert t.iou(1, 1) == pytest.approx(2 / 6)
    assert match_instances(t, 0.75) == []


def test_identical_volumes_match_at_iou_one():
    rng = np.random.default_rng(2)
    labels = _labels(rng.integers(0, 5, (10, 10, 10)))
    t = overlap_table(labels, labels)
    matches = match_instances(t, 0.75)
    k = int(labels.data.max())
    assert len(matches) == k
    assert all(m.iou == 1.0 for m in matches)


def test_threshold_validation():
    t = overlap_table(_row_volume([1]), _row_volume([1]))
    for bad in (0.4, 0.5, 0.0, 1.1):
        with pytest.raises(UnsupportedThresholdError):
            match_instances(t, bad)


def test_perfect_prediction_ap_is_one_in_nonempty_bins():
    rng = np.random.default_rng(3)
    labels = _labels(rng.integers(0, 4, (12, 12, 12)))
    report = evaluate_instances(labels, labels, 0.75)
    # every bin is either perfectly matched or empty on both sides
    for stats in report.bins.values():
        assert stats.ap == 1.0
    assert report.bins["all"].fp == 0
    assert report.bins["all"].fn == 0


def test_two_gt_one_matched_ap_half():
    # Ranked by score: the matched prediction first -> PR walks
    # (precision 1.0, recall 0.5) then (0.5, 0.5); area = 0.5.
    pred = np.zeros((1, 4, 16), dtype=np.uint32)
    gt = np.zeros((1, 4, 16), dtype=np.uint32)
    gt[0, 0, 0:10] = 1
    gt[0, 2, 0:10] = 2
    pred[0, 0, 0:10] = 1   # exactly matches gt 1, score = 10 voxels
    pred[0, 3, 0:5] = 2    # pure false positive, score = 5 voxels
    report = evaluate_instances(Volume(pred), Volume(gt), 0.75)
    assert report.bins["all"].ap == 0.5
    assert report.bins["all"].tp == 1
    assert report.bins["all"].fp == 1
    assert report.bins["all"].fn == 1


def test_empty_cases():
    empty = _labels(np.zeros((4, 4, 4)))
    both = evaluate_instances(empty, empty, 0.75)
    assert both.bins["all"].ap == 1.0
    assert both.bins["all"].precision == 1.0

    pred = _row_volume([1, 1])
    report = evaluate_instances(pred, _labels(np.zeros((1, 1, 16))), 0.75)
    assert report.bins["all"].ap == 0.0
    assert report.bins["all"].fn == 0
    assert report.bins["all"].fp == 1

    report = evaluate_instances(_labels(np.zeros((1, 1, 16))), pred, 0.75)
    assert report.bins["all"].ap == 0.0
    assert report.bins["all"].fn == 1


def test_bin_rule_follows_gt_for_matches():
    # one instance just under 5000 in pred, just over in gt: IoU above 0.75,
    # so the pair lands in the gt's bin ('med') and TP+FN is consistent there
    pred = np.zeros((1, 100, 100), dtype=np.uint32)
    gt = np.zeros((1, 100, 100), dtype=np.uint32)
    gt[0, :51, :100] = 1   # 5100 voxels -> med
    pred[0, :49, :100] = 1  # 4900 voxels -> small on its own, IoU 4900/5100 > 0.96
    report = evaluate_instances(Volume(pred), Volume(gt), 0.75)
    assert report.bins["med"].tp == 1
    assert report.bins["med"].fn == 0
    assert report.bins["small"].tp == 0
    assert report.bins["small"].fp == 0


def test_ap_score_groups_are_permutation_invariant():
    # two predictions share a score; AP must not depend on their label order
    ap = _average_precision(
        np.array([5.0, 5.0]), np.array([True, False]), n_gt=1
    )
    ap_swapped = _average_precision(
        np.array([5.0, 5.0]), np.array([False, True]), n_gt=1
    )
    assert ap == ap_swapped == 0.5  # single PR point at (recall 1, precision 0.5)


def test_ap_false_positive_never_raises_ap():
    rng = np.random.default_rng(4)
    for _ in range(40):
        n = int(rng.integers(1, 8))
        scores = rng.random(n)
        is_tp = rng.random(n) < 0.6
        n_gt = int(is_tp.sum() + rng.integers(0, 4))
        if n_gt == 0:
            continue
        base = _average_precision(scores, is_tp, n_gt)
        for _ in range(5):
            s2 = np.append(scores, rng.random())
            t2 = np.append(is_tp, False)
            assert _average_precision(s2, t2, n_gt) <= base + 1e-12


def test_label_permutation_leaves_metrics_unchanged():
    rng = np.random.default_rng(5)
    pred = rng.integers(0, 6, (14, 14, 14)).astype(np.uint32)
    gt = rng.integers(0, 6, (14, 14, 14)).astype(np.uint32)
    before = evaluate_instances(Volume(pred), Volume(gt), 0.75)

    def permute(arr):
        k = int(arr.max())
        perm = np.concatenate(([0], rng.permutation(np.arange(1, k + 1))))
        return perm[arr].astype(np.uint32)

    after = evaluate_instances(Volume(permute(pred)), Volume(permute(gt)), 0.75)
    for name in before.bins:
        for fieldname in ("ap", "precision", "recall", "f1", "tp", "fp", "fn"):
            assert getattr(before.bins[name], fieldname) == getattr(after.bins[name], fieldname)


def test_report_json_schema():
    pred = _row_volume([1, 1, 1])
    report = evaluate_instances(pred, pred, 0.75)
    doc = report.to_dict()
    assert set(doc) == {"iou_threshold", "bins", "pairs"}
    assert list(doc["bins"]) == ["small", "med", "large", "all"]
    for stats in doc["bins"].values():
        assert set(stats) == {"ap", "precision", "recall", "f1", "tp", "fp", "fn"}
    assert doc["pairs"] == [{"pred": 1, "gt": 1, "iou": 1.0}]
    assert doc["iou_threshold"] == 0.75


def test_ap_at_threshold_with_synthetic_tables():
    # scoreless degenerate case: all scores equal -> AP equals precision at
    # full recall of the matched items
    pred_table = InstanceTable(
        labels=np.array([1, 2, 3]),
        counts=np.array([10, 10, 10]),
        categories=np.array(["small"] * 3, dtype=object),
        scores=np.array([1.0, 1.0, 1.0]),
    )
    gt_table = InstanceTable(
        labels=np.array([1, 2]),
        counts=np.array([10, 10]),
        categories=np.array(["small"] * 2, dtype=object),
        scores=np.array([10.0, 10.0]),
    )
    pairs = [MatchPair(1, 1, 1.0), MatchPair(2, 2, 1.0)]
    report = ap_at_threshold(pred_table, gt_table, pairs, SizeBins(), 0.75)
    assert report.bins["all"].ap == pytest.approx(2 / 3)
    assert report.bins["all"].recall == 1.0


def test_semantic_metrics_hand_cases():
    a = _mask([[[1, 1, 0, 0]]])
    assert semantic_metrics(a, a) == (1.0, 1.0)

    disjoint = semantic_metrics(_mask([[[1, 1, 0, 0]]]), _mask([[[0, 0, 1, 1]]]))
    assert disjoint == (0.0, 0.0)

    # |A| = 4, |B| = 4, intersection 2
    j, d = semantic_metrics(
        _mask([[[1, 1, 1, 1, 0, 0]]]), _mask([[[0, 0, 1, 1, 1, 1]]])
    )
    assert j == pytest.approx(2 / 6)
    assert d == pytest.approx(0.5)
    assert d == pytest.approx(2 * j / (1 + j), abs=1e-12)

    both_empty = semantic_metrics(_mask(np.zeros((2, 2, 2))), _mask(np.zeros((2, 2, 2))))
    assert both_empty == (1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_semantic_identity_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = _mask(rng.random((5, 5, 5)) < 0.5)
    b = _mask(rng.random((5, 5, 5)) < 0.5)
    j, d = semantic_metrics(a, b)
    assert semantic_metrics(b, a) == (j, d)
    assert abs(d - 2 * j / (1 + j)) < 1e-9
    assert 0.0 <= j <= d <= 1.0


def test_size_bins_validation():
    with pytest.raises(InvalidArgumentError):
        SizeBins(0, 10)
    with pytest.raises(InvalidArgumentError):
        SizeBins(20, 10)
    bins = SizeBins()
    assert bins.category(4999) == "small"
    assert bins.category(5000) == "med"
    assert bins.category(14999) == "med"
    assert bins.category(15000) == "large"

"""Instance evaluation (AP at an IoU threshold, size-binned) and semantic overlap scores.

Matching rule: a predicted instance is a true positive when its IoU with a
ground-truth instance reaches the threshold.  Thresholds are restricted to
(0.5, 1.0]: above 0.5 the overlap majorities are exclusive, so each
prediction can reach the threshold with at most one ground-truth instance
and vice versa, and matching needs no assignment step.

Average precision uses all-points interpolation over the precision
envelope.  Predictions are ranked by descending score; equal scores form a
single PR point, which keeps the result invariant under label permutation.
Degenerate cases are pinned: an empty bin on both sides scores 1.0, an
empty ground truth with predictions scores 0.0.

Size bins follow the ground-truth instance for matched pairs (so per-bin
TP+FN equals the bin's ground-truth count); unmatched instances fall into
the bin of their own size.  Boundaries are half-open: small < 5000 voxels,
5000 <= med < 15000, large >= 15000.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidArgumentError, UnsupportedThresholdError
from .volume import Volume, ensure_binary, ensure_same_dims

BIN_NAMES = ("small", "med", "large", "all")


@dataclass(frozen=True)
class SizeBins:
    """Voxel-count thresholds splitting instances into small/med/large."""

    small_max: int = 5000
    med_max: int = 15000

    def __post_init__(self) -> None:
        if not 0 < self.small_max < self.med_max:
            raise InvalidArgumentError(
                f"need 0 < small_max < med_max, got {self.small_max}, {self.med_max}"
            )

    def category(self, count: int) -> str:
        if count < self.small_max:
            return "small"
        if count < self.med_max:
            return "med"
        return "large"

    def category_array(self, counts: np.ndarray) -> np.ndarray:
        out = np.where(
            counts < self.small_max, "small", np.where(counts < self.med_max, "med", "large")
        )
        return out.astype(object)


@dataclass
class OverlapTable:
    """Sparse (pred, gt) intersection counts plus per-label totals.

    ``pred_sizes``/``gt_sizes`` are indexed by label id; index 0 is the
    background voxel count and never participates in pairs.
    """

    pairs: Dict[Tuple[int, int], int]
    pred_sizes: np.ndarray
    gt_sizes: np.ndarray

    def iou(self, pred: int, gt: int) -> float:
        inter = self.pairs.get((pred, gt), 0)
        union = int(self.pred_sizes[pred]) + int(self.gt_sizes[gt]) - inter
        return inter / union if union else 0.0


def overlap_table(pred: Volume, gt: Volume) -> OverlapTable:
    """Single-pass intersection counting between two label volumes."""
    ensure_same_dims(pred, gt, "pred and gt")
    pf = pred.data.ravel().astype(np.int64, copy=False)
    gf = gt.data.ravel().astype(np.int64, copy=False)
    if pf.size and (int(pf.max()) >= 1 << 32 or int(gf.max()) >= 1 << 32):
        raise InvalidArgumentError("label ids above 2^32 are not supported")
    pred_sizes = np.bincount(pf)
    gt_sizes = np.bincount(gf)
    m = (pf != 0) & (gf != 0)
    pairs: Dict[Tuple[int, int], int] = {}
    if m.any():
        keys = pf[m].astype(np.uint64) << np.uint64(32) | gf[m].astype(np.uint64)
        uniq, counts = np.unique(keys, return_counts=True)
        p_ids = (uniq >> np.uint64(32)).astype(np.int64)
        g_ids = (uniq & np.uint64(0xFFFFFFFF)).astype(np.int64)
        pairs = {
            (int(p), int(g)): int(c) for p, g, c in zip(p_ids, g_ids, counts)
        }
    return OverlapTable(pairs=pairs, pred_sizes=pred_sizes, gt_sizes=gt_sizes)


@dataclass(frozen=True)
class MatchPair:
    pred: int
    gt: int
    iou: float


def match_instances(table: OverlapTable, iou_threshold: float) -> List[MatchPair]:
    """All (pred, gt) pairs whose IoU reaches the threshold, sorted by pred id."""
    if not 0.5 < iou_threshold <= 1.0:
        raise UnsupportedThresholdError(
            f"IoU threshold must lie in (0.5, 1.0], got {iou_threshold}"
        )
    matched = []
    for (p, g), inter in table.pairs.items():
        union = int(table.pred_sizes[p]) + int(table.gt_sizes[g]) - inter
        iou = inter / union
        if iou >= iou_threshold:
            matched.append(MatchPair(pred=p, gt=g, iou=iou))
    matched.sort(key=lambda m: m.pred)
    # thresholds above 0.5 imply one-to-one matches; a violation is a bug
    preds = [m.pred for m in matched]
    gts = [m.gt for m in matched]
    assert len(set(preds)) == len(preds) and len(set(gts)) == len(gts)
    return matched


@dataclass
class BinStats:
    ap: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass
class MatchReport:
    """Matching outcome plus per-bin detection statistics."""

    iou_threshold: float
    pairs: List[MatchPair]
    tp_pred: List[int] = field(default_factory=list)
    fp_pred: List[int] = field(default_factory=list)
    fn_gt: List[int] = field(default_factory=list)
    bins: Dict[str, BinStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "bins": {
                name: {
                    "ap": s.ap,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                }
                for name, s in self.bins.items()
            },
            "pairs": [{"pred": m.pred, "gt": m.gt, "iou": m.iou} for m in self.pairs],
        }


def _average_precision(scores: np.ndarray, is_tp: np.ndarray, n_gt: int) -> float:
    if scores.size == 0:
        return 1.0 if n_gt == 0 else 0.0
    if n_gt == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = is_tp[order].astype(np.int64)
    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, s.size + 1)
    # one PR point per distinct score (ties collapse into one operating point)
    group_end = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    recall = cum_tp[group_end] / n_gt
    precision = cum_tp[group_end] / ranks[group_end]
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * envelope))


def ap_at_threshold(
    pred_table,
    gt_table,
    pairs: List[MatchPair],
    bins: Optional[SizeBins] = None,
    iou_threshold: float = 0.75,
) -> MatchReport:
    """Complete a match report with per-bin AP, precision, recall, and F1.

    ``pred_table``/``gt_table`` are :class:`~mitoseg.labeling.InstanceTable`
    views of the two label volumes (the gt table supplies sizes for the bin
    rule and the FN side).
    """
    bins = bins or SizeBins()
    pred_cat = {int(l): c for l, c in zip(pred_table.labels, pred_table.categories)}
    pred_score = {int(l): float(s) for l, s in zip(pred_table.labels, pred_table.scores)}
    gt_cat = {int(l): c for l, c in zip(gt_table.labels, gt_table.categories)}

    matched_gt_cat = {m.pred: gt_cat[m.gt] for m in pairs}
    matched_preds = set(matched_gt_cat)
    matched_gts = {m.gt for m in pairs}

    report = MatchReport(iou_threshold=iou_threshold, pairs=list(pairs))
    report.tp_pred = sorted(matched_preds)
    report.fp_pred = sorted(int(l) for l in pred_table.labels if int(l) not in matched_preds)
    report.fn_gt = sorted(int(l) for l in gt_table.labels if int(l) not in matched_gts)

    for name in BIN_NAMES:
        def in_bin(cat: str) -> bool:
            return name == "all" or cat == name

        entries = []  # (score, is_tp)
        for p in map(int, pred_table.labels):
            if p in matched_preds:
                if in_bin(matched_gt_cat[p]):
                    entries.append((pred_score[p], True))
            elif in_bin(pred_cat[p]):
                entries.append((pred_score[p], False))
        n_gt = sum(1 for g in map(int, gt_table.labels) if in_bin(gt_cat[g]))

        tp = sum(1 for _, t in entries if t)
        fp = len(entries) - tp
        fn = n_gt - tp
        scores = np.array([s for s, _ in entries], dtype=np.float64)
        is_tp = np.array([t for _, t in entries], dtype=bool)
        ap = _average_precision(scores, is_tp, n_gt)
        if not entries and n_gt == 0:
            precision = recall = f1 = 1.0
        else:
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        report.bins[name] = BinStats(ap=ap, precision=precision, recall=recall,
                                     f1=f1, tp=tp, fp=fp, fn=fn)
    return report


def evaluate_instances(
    pred: Volume,
    gt: Volume,
    iou_threshold: float = 0.75,
    bins: Optional[SizeBins] = None,
    score_source: Optional[Volume] = None,
) -> MatchReport:
    """Full evaluation of two label volumes: overlap, matching, per-bin AP."""
    from .labeling import instance_table  # deferred: labeling imports SizeBins from here

    bins = bins or SizeBins()
    table = overlap_table(pred, gt)
    pairs = match_instances(table, iou_threshold)
    pred_table = instance_table(pred, score_source=score_source, bins=bins)
    gt_table = instance_table(gt, bins=bins)
    return ap_at_threshold(pred_table, gt_table, pairs, bins, iou_threshold)


def semantic_metrics(pred_mask: Volume, gt_mask: Volume) -> Tuple[float, float]:
    """(jaccard, dsc) of two binary masks; two empty masks score (1.0, 1.0)."""
    ensure_same_dims(pred_mask, gt_mask, "pred and gt masks")
    ensure_binary(pred_mask, "pred mask")
    ensure_binary(gt_mask, "gt mask")
    a = pred_mask.data != 0
    b = gt_mask.data != 0
    inter = int(np.count_nonzero(a & b))
    na = int(np.count_nonzero(a))
    nb = int(np.count_nonzero(b))
    union = na + nb - inter
    jaccard = inter / union if union else 1.0
    dsc = 2 * inter / (na + nb) if na + nb else 1.0
    return jaccard, dsc

"""Single-class detection evaluation: IoU matching, interpolated AP,
and the mAP@50 / mAP@75 / mAP@50:95 suite.

Matching is greedy in descending confidence with deterministic
tie-breaking (ascending box x, then y).  AP uses the 101-point recall
grid {0, 0.01, ..., 1.00}: the mean over grid points of the maximum
precision among operating points with recall at or above the grid
value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .boxes import BBox, iou
from .errors import ConfigurationError

IOU_GRID_5095 = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
_RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class EvalResult:
    map50: float
    map75: float
    map5095: float
    ap_per_threshold: tuple
    pr_curves: dict


def match_detections(preds: Sequence[BBox], gts: Sequence[BBox],
                     iou_thresh: float) -> tuple[list[bool], int]:
    """TP/FP flag per prediction (input order) plus count of unmatched GT.

    Predictions are processed in descending confidence; each one takes
    the unmatched ground-truth box of highest IoU if that IoU reaches
    the threshold.
    """
    order = sorted(range(len(preds)),
                   key=lambda i: (-(preds[i].score or 0.0), preds[i].x, preds[i].y))
    taken = [False] * len(gts)
    flags = [False] * len(preds)
    for i in order:
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou(preds[i], gt)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0 and best_iou >= iou_thresh:
            taken[best_j] = True
            flags[i] = True
    return flags, taken.count(False)


def average_precision(flags: Sequence[bool], total_gt: int) -> float:
    """AP over confidence-ordered TP/FP flags against `total_gt` boxes."""
    if total_gt == 0:
        return 0.0 if len(flags) else 1.0
    if not flags:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    ranks = np.arange(1, len(flags) + 1, dtype=np.float64)
    precisions = tp / ranks
    recalls = tp / float(total_gt)
    # best precision over each suffix; recalls are nondecreasing
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    idx = np.searchsorted(recalls, _RECALL_GRID, side="left")
    grid_prec = np.where(idx < len(flags), envelope[np.minimum(idx, len(flags) - 1)], 0.0)
    return float(grid_prec.mean())


def _interp_curve(flags: Sequence[bool], total_gt: int) -> tuple:
    if total_gt == 0 or not flags:
        return tuple(np.zeros(101))
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    precisions = tp / np.arange(1, len(flags) + 1, dtype=np.float64)
    recalls = tp / float(total_gt)
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    idx = np.searchsorted(recalls, _RECALL_GRID, side="left")
    return tuple(np.where(idx < len(flags), envelope[np.minimum(idx, len(flags) - 1)], 0.0))


def _ordered_flags(preds_by_image: Mapping, gts_by_image: Mapping,
                   thresh: float) -> tuple[list[bool], int]:
    scored: list[tuple] = []
    total_gt = 0
    for image_id in sorted(preds_by_image):
        preds = list(preds_by_image[image_id])
        gts = list(gts_by_image[image_id])
        total_gt += len(gts)
        flags, _ = match_detections(preds, gts, thresh)
        for p, f in zip(preds, flags):
            scored.append(((-(p.score or 0.0), p.x, p.y, p.w, p.h), f))
    scored.sort(key=lambda e: e[0])
    return [f for _, f in scored], total_gt


def map_suite(preds_by_image: Mapping, gts_by_image: Mapping) -> EvalResult:
    """COCO-style mAP over one class; inputs keyed by image id."""
    if set(preds_by_image) != set(gts_by_image):
        raise ConfigurationError("prediction and ground-truth image ids differ")
    aps = []
    curves = {}
    for thresh in IOU_GRID_5095:
        flags, total_gt = _ordered_flags(preds_by_image, gts_by_image, thresh)
        aps.append(average_precision(flags, total_gt))
        curves[thresh] = _interp_curve(flags, total_gt)
    return EvalResult(map50=aps[0], map75=aps[5],
                      map5095=float(np.mean(aps)),
                      ap_per_threshold=tuple(aps), pr_curves=curves)

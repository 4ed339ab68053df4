"""Independent reference implementations used only by the tests.

Deliberately plain quadratic loops, no code shared with the library, so
a defect would have to be introduced twice to survive the comparison.
"""

import numpy as np

from cellsynth.boxes import iou


def ap_brute(flags, total_gt):
    """101-point interpolated AP by direct scan over the recall grid."""
    if total_gt == 0:
        return 0.0 if flags else 1.0
    tp = 0
    fp = 0
    points = []
    for f in flags:
        if f:
            tp += 1
        else:
            fp += 1
        points.append((tp / total_gt, tp / (tp + fp)))
    bests = []
    for r in np.linspace(0.0, 1.0, 101):
        best = 0.0
        for rec, prec in points:
            if rec >= r and prec > best:
                best = prec
        bests.append(best)
    # same reduction the library uses, so agreement is bit-exact when the
    # 101 per-point values are
    return float(np.mean(bests))


def match_brute(preds, gts, thresh):
    """Confidence-ordered greedy matching to the best unmatched truth box."""
    order = sorted(range(len(preds)),
                   key=lambda i: (-(preds[i].score or 0.0),
                                  preds[i].x, preds[i].y))
    taken = set()
    flags = []
    for i in order:
        best_j = -1
        best_v = 0.0
        for j, g in enumerate(gts):
            if j in taken:
                continue
            v = iou(preds[i], g)
            if v > best_v:
                best_j, best_v = j, v
        if best_j >= 0 and best_v >= thresh:
            taken.add(best_j)
            flags.append(True)
        else:
            flags.append(False)
    return flags, len(gts)


def dataset_ap_brute(preds_by_image, gts_by_image, thresh):
    """Dataset AP at one threshold: per-image matching, globally ordered flags."""
    rows = []
    total_gt = 0
    for img in preds_by_image:
        preds = list(preds_by_image[img])
        gts = list(gts_by_image[img])
        total_gt += len(gts)
        flags, _ = match_brute(preds, gts, thresh)
        ordered = sorted(preds, key=lambda p: (-(p.score or 0.0), p.x, p.y))
        for p, hit in zip(ordered, flags):
            rows.append((-(p.score or 0.0), p.x, p.y, p.w, p.h, hit))
    rows.sort(key=lambda r: r[:5])
    return ap_brute([r[5] for r in rows], total_gt)

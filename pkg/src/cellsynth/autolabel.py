"""Semi-automated labeling from the fluorescence channel.

The pipeline is: threshold the fluorescence image, group foreground
pixels into 8-connected components, and take the tight bounding box of
each sufficiently large component. Synthetic images, which have no
fluorescence channel, are draft-labeled by a trained detector and the
drafts exported to a plain-text review file for human correction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .boxes import BBox
from .errors import ConfigurationError
from .manifest import format_box, parse_box

__all__ = [
    "LabelRecord",
    "binarize",
    "otsu_threshold",
    "connected_components",
    "boxes_from_regions",
    "label_from_fluorescence",
    "model_assisted_label",
    "write_review",
    "apply_review",
]

PROVENANCES = ("auto_fluorescence", "model_assisted", "reviewed")


@dataclass(frozen=True)
class LabelRecord:
    image_id: str
    boxes: tuple[BBox, ...]
    provenance: str = "auto_fluorescence"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


def otsu_threshold(img: np.ndarray) -> float:
    """Threshold maximizing between-class variance on a 256-bin histogram.

    Ties resolve to the lowest threshold. Returned value t is used as
    `img > t`, with t = k/255 for the chosen bin k.
    """
    bins = np.clip(np.floor(np.asarray(img) * 255.0 + 0.5), 0, 255).astype(np.int64)
    hist = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if total == 0:
        return 0.0
    p = hist / total
    omega = np.cumsum(p)                      # class-0 mass for threshold k
    mu = np.cumsum(p * np.arange(256))        # class-0 first moment
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between = np.nan_to_num(between[:-1], nan=-1.0, posinf=-1.0)
    k = int(np.argmax(between))
    return k / 255.0


def binarize(fluor: np.ndarray, method: str = "otsu", tau: float | None = None) -> np.ndarray:
    """Boolean mask of pixels strictly above the threshold."""
    if method == "otsu":
        thresh = otsu_threshold(fluor)
    elif method == "fixed":
        if tau is None or not 0.0 <= tau <= 1.0:
            raise ConfigurationError(f"fixed binarize needs tau in [0,1], got {tau}")
        thresh = tau
    else:
        raise ConfigurationError(f"unknown binarize method {method!r}")
    return np.asarray(fluor) > thresh


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of a binary mask.

    Returns one (n_pixels, 2) array of (y, x) coordinates per component,
    pixels in row-major order, components ordered by their first pixel in
    scan order. Row runs are unioned instead of single pixels, which keeps
    the pass fast on large masks.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape

    parent: list[int] = []

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:   # path compression
            parent[i], i = root, parent[i]
        return root

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb

    run_spans: list[tuple[int, int, int]] = []  # (row, start, end) per run id
    prev: list[tuple[int, int, int]] = []       # (start, end, run id) on previous row
    pad = np.zeros(1, dtype=np.int8)
    for y in range(h):
        row8 = mask[y].astype(np.int8)
        edges = np.flatnonzero(np.diff(np.concatenate((pad, row8, pad))))
        cur: list[tuple[int, int, int]] = []
        for k in range(0, len(edges), 2):
            s, e = int(edges[k]), int(edges[k + 1])
            rid = len(parent)
            parent.append(rid)
            run_spans.append((y, s, e))
            for (ps, pe, prid) in prev:
                # 8-connectivity: the run widened by one overlaps the run above
                if ps < e + 1 and pe > s - 1:
                    union(rid, prid)
            cur.append((s, e, rid))
        prev = cur

    groups: dict[int, list[int]] = {}
    for rid in range(len(parent)):
        groups.setdefault(find(rid), []).append(rid)

    components = []
    for root in sorted(groups):  # root is the smallest run id => scan order
        coords = []
        for rid in groups[root]:
            y, s, e = run_spans[rid]
            xs = np.arange(s, e, dtype=np.int64)
            coords.append(np.stack([np.full_like(xs, y), xs], axis=1))
        pix = np.concatenate(coords, axis=0)
        order = np.lexsort((pix[:, 1], pix[:, 0]))
        components.append(pix[order])
    return components


def boxes_from_regions(regions: list[np.ndarray], min_area: int = 9) -> list[BBox]:
    """Tight integer-grid bounding box per region with at least min_area pixels."""
    if min_area < 0:
        raise ConfigurationError("min_area must be >= 0")
    out = []
    for region in regions:
        if len(region) < min_area:
            continue
        ys, xs = region[:, 0], region[:, 1]
        x0, y0 = int(xs.min()), int(ys.min())
        out.append(BBox(float(x0), float(y0),
                        float(int(xs.max()) - x0 + 1), float(int(ys.max()) - y0 + 1)))
    return out


def label_from_fluorescence(image_id: str, fluor: np.ndarray, method: str = "otsu",
                            tau: float | None = None, min_area: int = 9) -> LabelRecord:
    """Full auto-label of one image from its fluorescence channel."""
    mask = binarize(fluor, method=method, tau=tau)
    regions = connected_components(mask)
    return LabelRecord(image_id, tuple(boxes_from_regions(regions, min_area)),
                       "auto_fluorescence")


def model_assisted_label(detector, images: list[tuple[str, np.ndarray]],
                         conf_thresh: float) -> tuple[list[LabelRecord], str]:
    """Draft labels from detector predictions, plus the review-file text.

    `detector` is a TrainedDetector; predictions strictly above
    conf_thresh become draft boxes awaiting review.
    """
    if detector is None:
        raise ConfigurationError("model-assisted labeling requires a trained detector")
    records = []
    for image_id, img in images:
        pred = detector.predict(img, conf_thresh=0.0)
        kept = tuple(b for b in pred.boxes if b.score is not None and b.score > conf_thresh)
        records.append(LabelRecord(image_id, kept, "model_assisted"))
    return records, write_review(records)


def write_review(records: list[LabelRecord], path: str | os.PathLike | None = None) -> str:
    """Serialize draft labels, one line per image: id, then box tuples."""
    lines = []
    for rec in records:
        cols = [rec.image_id]
        cols.extend(format_box(b) for b in rec.boxes)
        lines.append("\t".join(cols))
    text = "\n".join(lines) + ("\n" if lines else "")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def apply_review(records: list[LabelRecord], review_text: str) -> list[LabelRecord]:
    """Replace box lists with reviewed edits; every record becomes `reviewed`."""
    edits: dict[str, tuple[BBox, ...]] = {}
    for line in review_text.splitlines():
        if not line.strip():
            continue
        cols = line.split("\t")
        edits[cols[0]] = tuple(parse_box(c) for c in cols[1:] if c)
    out = []
    for rec in records:
        boxes = edits.get(rec.image_id, rec.boxes)
        out.append(replace(rec, boxes=boxes, provenance="reviewed"))
    return out

"""Axis-aligned bounding boxes in pixel coordinates."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["BBox", "iou", "clip_box"]


@dataclass(frozen=True)
class BBox:
    """(x, y) is the top-left corner; w/h extend right/down. Optional confidence."""

    x: float
    y: float
    w: float
    h: float
    score: float | None = None

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x2 and self.y <= py <= self.y2


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union is empty."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        inter = 0.0
    else:
        inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clip_box(box: BBox, width: float, height: float) -> BBox:
    """Clip a box to the image rectangle [0,width] x [0,height]."""
    x1 = min(max(box.x, 0.0), width)
    y1 = min(max(box.y, 0.0), height)
    x2 = min(max(box.x2, 0.0), width)
    y2 = min(max(box.y2, 0.0), height)
    return BBox(x1, y1, x2 - x1, y2 - y1, box.score)

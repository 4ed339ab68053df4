"""Non-overlapping patch extraction and well-edge filtering.

Large source images are tiled from the origin into patch_size squares;
remainder rows/columns are discarded. A patch is flagged as containing a
well edge when a single dark connected region touching the patch border
covers at least area_frac of the patch.
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass, replace

from .autolabel import connected_components
from .errors import ConfigurationError, SizeError

__all__ = [
    "PatchRecord",
    "extract_patches",
    "detect_well_edge",
    "flag_patches",
    "sample_filtered",
]

DEFAULT_DARK_THRESH = 0.2
DEFAULT_AREA_FRAC = 0.05


@dataclass(frozen=True)
class PatchRecord:
    source_id: str
    offset: tuple[int, int]            # (x, y), multiples of the patch size
    patch: np.ndarray
    flag: bool = False                 # True when a well edge was detected
    score: float = 0.0                 # dark border-region area fraction


def extract_patches(image: np.ndarray, patch_size: int, source_id: str = "") -> list[PatchRecord]:
    """Tile floor(W/p) x floor(H/p) disjoint patches from the origin."""
    if patch_size < 1:
        raise ConfigurationError("patch_size must be >= 1")
    h, w = image.shape
    out = []
    for by in range(h // patch_size):
        for bx in range(w // patch_size):
            x, y = bx * patch_size, by * patch_size
            out.append(PatchRecord(source_id, (x, y),
                                   image[y:y + patch_size, x:x + patch_size].copy()))
    return out


def detect_well_edge(patch: np.ndarray, dark_thresh: float = DEFAULT_DARK_THRESH,
                     area_frac: float = DEFAULT_AREA_FRAC) -> tuple[bool, float]:
    """Score = area fraction of the largest border-touching dark component."""
    if not 0.0 <= dark_thresh <= 1.0:
        raise ConfigurationError(f"dark_thresh={dark_thresh} outside [0, 1]")
    if not 0.0 < area_frac <= 1.0:
        raise ConfigurationError(f"area_frac={area_frac} outside (0, 1]")
    h, w = patch.shape
    mask = patch < dark_thresh
    best = 0
    for region in connected_components(mask):
        ys, xs = region[:, 0], region[:, 1]
        touches = (ys.min() == 0 or xs.min() == 0 or
                   ys.max() == h - 1 or xs.max() == w - 1)
        if touches and len(region) > best:
            best = len(region)
    score = best / float(h * w)
    return score >= area_frac, score


def flag_patches(records: list[PatchRecord], dark_thresh: float = DEFAULT_DARK_THRESH,
                 area_frac: float = DEFAULT_AREA_FRAC) -> list[PatchRecord]:
    """Run the well-edge detector over every patch, filling flag/score."""
    out = []
    for rec in records:
        flag, score = detect_well_edge(rec.patch, dark_thresh, area_frac)
        out.append(replace(rec, flag=flag, score=score))
    return out


def sample_filtered(patches: list[PatchRecord], k: int, seed: int) -> list[PatchRecord]:
    """Uniform sample without replacement from the unflagged patches."""
    pool = [p for p in patches if not p.flag]
    if k > len(pool):
        raise SizeError(f"requested {k} patches but only {len(pool)} unflagged")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    return [pool[i] for i in order[:k]]

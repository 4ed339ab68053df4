"""Procedural brightfield/fluorescence cell phantoms with exact ground truth.

Each cell is an ellipse rendered into the brightfield channel as a dark
rim with a brighter interior plateau and a soft halo outside, roughly the
appearance of a slightly defocused adherent cell. The fluorescence
channel fills the ellipse interior, so thresholding it recovers the cells
(the labeling oracle). Ground-truth boxes are the analytic axis-aligned
extents of the ellipses, clipped to the image.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .boxes import BBox, clip_box
from .errors import ConfigurationError
from .images import clamp01, write_pgm
from .manifest import DatasetManifest, ManifestRecord

__all__ = [
    "PhantomConfig",
    "PhantomSample",
    "generate_sample",
    "add_well_edge",
    "generate_dataset",
    "ellipse_extent",
]

# Fixed rendering constants (appearance knobs, not config surface).
FLUOR_LEVEL = 0.85          # fluorescence plateau inside cells
RIM_WIDTH = 1.2             # gaussian width of the dark rim band, px
EDGE_SOFT = 1.5             # interior plateau ramp width, px
HALO_GAIN = 0.35            # halo amplitude as a fraction of rim_darkness
MAX_PLACE_ATTEMPTS = 100    # rejection-sampling cap per cell


@dataclass(frozen=True)
class PhantomConfig:
    width: int = 64
    height: int = 64
    cell_count_range: tuple[int, int] = (3, 8)
    radius_range: tuple[float, float] = (5.0, 9.0)
    eccentricity_range: tuple[float, float] = (1.0, 1.6)
    rim_darkness: float = 0.55
    interior_brightness: float = 0.62
    halo_width: float = 2.5
    background_level: float = 0.45
    noise_sigma: float = 0.02
    overlap_allowed: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("cell_count_range", "radius_range", "eccentricity_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigurationError(f"{name}: min {lo} > max {hi}")
        if self.cell_count_range[0] < 0:
            raise ConfigurationError("cell_count_range must be non-negative")
        if self.radius_range[0] <= 0:
            raise ConfigurationError("radius_range must be positive")
        if self.eccentricity_range[0] < 1.0:
            raise ConfigurationError("eccentricity must be >= 1")
        for name in ("rim_darkness", "interior_brightness", "background_level",
                     "noise_sigma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} outside [0, 1]")
        if self.halo_width <= 0:
            raise ConfigurationError("halo_width must be positive")
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("image dimensions must be positive")


@dataclass
class PhantomSample:
    brightfield: np.ndarray
    fluorescence: np.ndarray
    boxes: list[BBox]
    cell_params: list[tuple[tuple[float, float], tuple[float, float], float]] = field(
        default_factory=list
    )


def ellipse_extent(a: float, b: float, theta: float) -> tuple[float, float]:
    """Half-extents (ex, ey) of the tight axis-aligned bound of a rotated ellipse."""
    c, s = np.cos(theta), np.sin(theta)
    ex = float(np.sqrt((a * c) ** 2 + (b * s) ** 2))
    ey = float(np.sqrt((a * s) ** 2 + (b * c) ** 2))
    return ex, ey


def _place_cells(cfg: PhantomConfig, rng: np.random.Generator):
    """Sample cell geometry; rejection sampling keeps major-axis discs disjoint."""
    n = int(rng.integers(cfg.cell_count_range[0], cfg.cell_count_range[1] + 1))
    cells: list[tuple[float, float, float, float, float]] = []  # cx, cy, a, b, theta
    for _ in range(n):
        for _attempt in range(MAX_PLACE_ATTEMPTS):
            cx = float(rng.uniform(0, cfg.width))
            cy = float(rng.uniform(0, cfg.height))
            a = float(rng.uniform(*cfg.radius_range))
            ecc = float(rng.uniform(*cfg.eccentricity_range))
            b = a / ecc
            theta = float(rng.uniform(0.0, np.pi))
            if cfg.overlap_allowed:
                cells.append((cx, cy, a, b, theta))
                break
            ok = True
            for (ox, oy, oa, _ob, _ot) in cells:
                if (cx - ox) ** 2 + (cy - oy) ** 2 < (a + oa + 1.0) ** 2:
                    ok = False
                    break
            if ok:
                cells.append((cx, cy, a, b, theta))
                break
        # on rejection-cap failure the cell is skipped
    return cells


def _render_cell(bf: np.ndarray, fl: np.ndarray, cfg: PhantomConfig,
                 cx: float, cy: float, a: float, b: float, theta: float) -> None:
    h, w = bf.shape
    ex, ey = ellipse_extent(a, b, theta)
    pad = 3.0 * max(RIM_WIDTH, EDGE_SOFT) + 3.0 * cfg.halo_width
    x0 = max(0, int(np.floor(cx - ex - pad)))
    x1 = min(w, int(np.ceil(cx + ex + pad)) + 1)
    y0 = max(0, int(np.floor(cy - ey - pad)))
    y1 = min(h, int(np.ceil(cy + ey + pad)) + 1)
    if x0 >= x1 or y0 >= y1:
        return

    xs = np.arange(x0, x1, dtype=np.float64) + 0.5
    ys = np.arange(y0, y1, dtype=np.float64) + 0.5
    px, py = np.meshgrid(xs - cx, ys - cy)
    c, s = np.cos(theta), np.sin(theta)
    u = (px * c + py * s) / a
    v = (-px * s + py * c) / b
    rho = np.sqrt(u * u + v * v)
    # Approximate signed distance to the ellipse boundary, px.
    d = (rho - 1.0) * min(a, b)

    win = bf[y0:y1, x0:x1]
    # interior plateau
    t_in = np.clip(-d / EDGE_SOFT, 0.0, 1.0)
    win[:] = win * (1.0 - t_in) + cfg.interior_brightness * t_in
    # dark rim band
    band = np.exp(-((d / RIM_WIDTH) ** 2))
    win *= 1.0 - cfg.rim_darkness * band
    # soft halo outside
    outside = d > 0
    halo = HALO_GAIN * cfg.rim_darkness * np.exp(-((d / cfg.halo_width) ** 2))
    win[outside] += halo[outside]

    fl_win = fl[y0:y1, x0:x1]
    inside = rho <= 1.0
    fl_win[inside] = np.maximum(fl_win[inside], FLUOR_LEVEL)


def generate_sample(config: PhantomConfig, seed: int) -> PhantomSample:
    """Render one paired brightfield/fluorescence phantom, bit-deterministic in (config, seed)."""
    rng = np.random.default_rng(seed)
    cells = _place_cells(config, rng)

    bf = np.full((config.height, config.width), config.background_level, dtype=np.float64)
    fl = np.zeros_like(bf)
    boxes: list[BBox] = []
    params = []
    for (cx, cy, a, b, theta) in cells:
        _render_cell(bf, fl, config, cx, cy, a, b, theta)
        ex, ey = ellipse_extent(a, b, theta)
        boxes.append(clip_box(BBox(cx - ex, cy - ey, 2 * ex, 2 * ey),
                              config.width, config.height))
        params.append(((cx, cy), (a, b), theta))

    # noise after compositing, before clamping
    bf = bf + rng.normal(0.0, config.noise_sigma, bf.shape)
    fl = fl + rng.normal(0.0, config.noise_sigma, fl.shape)
    return PhantomSample(clamp01(bf), clamp01(fl), boxes, params)


def add_well_edge(image: np.ndarray,
                  arc: tuple[tuple[float, float], float, float, float]) -> np.ndarray:
    """Darken pixels within `thickness` of the circle of given center/radius.

    arc = ((cx, cy), radius, thickness, darkness); darkness=1 zeroes the band.
    """
    (cx, cy), radius, thickness, darkness = arc
    if radius <= 0 or thickness <= 0:
        raise ConfigurationError("well-edge arc needs positive radius and thickness")
    h, w = image.shape
    xs = np.arange(w, dtype=np.float64) + 0.5
    ys = np.arange(h, dtype=np.float64) + 0.5
    px, py = np.meshgrid(xs - cx, ys - cy)
    dist = np.sqrt(px * px + py * py)
    band = np.abs(dist - radius) <= thickness
    out = image.copy()
    out[band] *= 1.0 - darkness
    return out


def derive_seed(base_seed: int, index: int) -> int:
    """Per-sample seed, deterministic in (base_seed, index)."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def generate_dataset(config: PhantomConfig, n: int, out_dir: str | os.PathLike,
                     name: str = "phantoms") -> DatasetManifest:
    """Write n phantom pairs plus a ground-truth manifest under out_dir.

    Image refs are relative to out_dir; fluorescence shares the stem with
    the brightfield image (suffix _fl instead of _bf).
    """
    if n < 0:
        raise ConfigurationError("n must be >= 0")
    out_dir = os.fspath(out_dir)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)

    records = []
    for i in range(n):
        sample = generate_sample(config, derive_seed(config.seed, i))
        bf_ref = f"images/phantom_{i:05d}_bf.pgm"
        fl_ref = f"images/phantom_{i:05d}_fl.pgm"
        write_pgm(os.path.join(out_dir, bf_ref), sample.brightfield)
        write_pgm(os.path.join(out_dir, fl_ref), sample.fluorescence)
        records.append(ManifestRecord(bf_ref, tuple(sample.boxes), "real", "pool"))

    man = DatasetManifest(name=name, seed=config.seed, records=records)
    man.save(os.path.join(out_dir, "manifest.txt"))
    return man


def fluorescence_ref(bf_ref: str) -> str:
    """Fluorescence sibling of a brightfield image ref."""
    if "_bf" not in bf_ref:
        raise ValueError(f"not a brightfield ref: {bf_ref!r}")
    return bf_ref.replace("_bf", "_fl")

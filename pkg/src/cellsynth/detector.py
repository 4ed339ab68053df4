"""Trainable center-heatmap cell detector and a classical blob baseline.

The learned detector predicts a per-cell center heatmap plus width/height
regression maps on a stride-downsampled grid: a pooling stem brings the
image down to the stride resolution, a small encoder-decoder refines
features there, and two convolutional heads emit heatmap logits and sizes.
Training minimizes a penalty-reduced focal loss on the heatmap plus an L1
size loss at center cells, with early stopping on validation mAP@50.

The blob baseline is a non-learned difference-of-Gaussians detector used
as a control: it needs no training data and its accuracy is independent
of dataset composition.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import autodiff as ad
from .autodiff import _stable_sigmoid
from .boxes import BBox, clip_box, iou
from .errors import ConfigurationError, ShapeError
from .eval_map import map_suite
from .manifest import DatasetManifest
from .images import clamp01, read_pgm
from .optim import adamw_step, init_opt_state
from .train_diffusion import TrainingDiverged

ParamSet = dict

AUGMENT_FLAGS = ("hflip", "vflip", "intensity_jitter", "mosaic", "mixup")

# Loss constants: focal focusing/penalty exponents, size-loss weight, and
# the probability clip that keeps log() finite.
_FOCAL_ALPHA = 2.0
_FOCAL_BETA = 4.0
_SIZE_WEIGHT = 0.1
_PROB_EPS = 1e-6


@dataclass(frozen=True)
class DetectorConfig:
    """Architecture and training knobs for the heatmap detector.

    `stride` is the heatmap downsampling factor; `channels` gives the
    width of each encoder-decoder level operating on the stride grid,
    so inputs must be divisible by stride * 2**(len(channels)-1).
    `augment` holds flag names drawn from AUGMENT_FLAGS; "mixup" is
    reserved and rejected at construction.
    """

    stride: int = 4
    channels: tuple = (16, 32, 64)
    conf_thresh: float = 0.25
    nms_iou: float = 0.5
    epochs: int = 60
    patience: int = 35
    lr: float = 1e-3
    batch_size: int = 8
    augment: tuple = ("hflip", "vflip", "intensity_jitter", "mosaic")

    def __post_init__(self):
        if self.stride < 1 or self.stride & (self.stride - 1):
            raise ConfigurationError("stride must be a positive power of two")
        if len(self.channels) < 1 or any(int(c) < 1 for c in self.channels):
            raise ConfigurationError("channels must be a nonempty positive tuple")
        for name, v in (("conf_thresh", self.conf_thresh), ("nms_iou", self.nms_iou)):
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.lr <= 0 or self.batch_size < 1:
            raise ConfigurationError("lr must be positive and batch_size >= 1")
        for flag in self.augment:
            if flag not in AUGMENT_FLAGS:
                raise ConfigurationError(f"unknown augmentation flag {flag!r}")
        if "mixup" in self.augment:
            raise ConfigurationError("mixup augmentation is reserved and not implemented")

    @property
    def levels(self) -> int:
        return len(self.channels)

    @property
    def min_side(self) -> int:
        return self.stride * 2 ** (self.levels - 1)


@dataclass(frozen=True)
class Prediction:
    """Detector output for one image: boxes sorted by descending score."""

    boxes: tuple


@dataclass
class TrainedDetector:
    """Bundles (params, config) so downstream callers need one handle."""

    params: ParamSet
    config: DetectorConfig

    def predict(self, image: np.ndarray, conf_thresh: float | None = None,
                nms_iou: float | None = None) -> Prediction:
        return detect(self.params, image, self.config, conf_thresh, nms_iou)


def _conv_init(rng, cout: int, cin: int, k: int) -> np.ndarray:
    fan_in = cin * k * k
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), (cout, cin, k, k)).astype(np.float32)


def _init_block(params: ParamSet, rng, prefix: str, cin: int, cout: int) -> None:
    params[f"{prefix}.conv1.w"] = _conv_init(rng, cout, cin, 3)
    params[f"{prefix}.conv1.b"] = np.zeros(cout, np.float32)
    params[f"{prefix}.ss1.g"] = np.ones(cout, np.float32)
    params[f"{prefix}.ss1.b"] = np.zeros(cout, np.float32)
    params[f"{prefix}.conv2.w"] = _conv_init(rng, cout, cout, 3)
    params[f"{prefix}.conv2.b"] = np.zeros(cout, np.float32)
    params[f"{prefix}.ss2.g"] = np.ones(cout, np.float32)
    params[f"{prefix}.ss2.b"] = np.zeros(cout, np.float32)
    if cin != cout:
        params[f"{prefix}.skip.w"] = _conv_init(rng, cout, cin, 1)


def init_detector(cfg: DetectorConfig, seed: int = 0) -> ParamSet:
    """Fresh parameter set.  The heatmap head starts near zero with a
    negative bias so an untrained detector emits a low, flat heatmap."""
    rng = np.random.default_rng(seed)
    ch = [int(c) for c in cfg.channels]
    params: ParamSet = {}

    n_pool = int(math.log2(cfg.stride))
    for k in range(max(1, n_pool)):
        cin = 1 if k == 0 else ch[0]
        params[f"stem{k}.w"] = _conv_init(rng, ch[0], cin, 3)
        params[f"stem{k}.b"] = np.zeros(ch[0], np.float32)
        params[f"stem{k}.g"] = np.ones(ch[0], np.float32)
        params[f"stem{k}.bb"] = np.zeros(ch[0], np.float32)

    cin = ch[0]
    for i, cout in enumerate(ch):
        _init_block(params, rng, f"enc{i}", cin, cout)
        cin = cout
    for i in range(len(ch) - 2, -1, -1):
        _init_block(params, rng, f"dec{i}", ch[i + 1] + ch[i], ch[i])

    params["heat0.w"] = _conv_init(rng, ch[0], ch[0], 3)
    params["heat0.b"] = np.zeros(ch[0], np.float32)
    params["heat1.w"] = rng.normal(0.0, 1e-3, (1, ch[0], 1, 1)).astype(np.float32)
    params["heat1.b"] = np.full(1, -2.0, np.float32)
    params["size0.w"] = _conv_init(rng, ch[0], ch[0], 3)
    params["size0.b"] = np.zeros(ch[0], np.float32)
    params["size1.w"] = np.zeros((2, ch[0], 1, 1), np.float32)
    params["size1.b"] = np.zeros(2, np.float32)
    return params


def _scale_shift(h, g, b):
    c = g.shape[0]
    return h * ad.reshape(g, (1, c, 1, 1)) + ad.reshape(b, (1, c, 1, 1))


def _block(p: dict, prefix: str, x):
    h = ad.conv2d(x, p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"], padding=1)
    h = _scale_shift(h, p[f"{prefix}.ss1.g"], p[f"{prefix}.ss1.b"])
    h = ad.silu(h)
    h = ad.conv2d(h, p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"], padding=1)
    h = _scale_shift(h, p[f"{prefix}.ss2.g"], p[f"{prefix}.ss2.b"])
    h = ad.silu(h)
    skip_w = p.get(f"{prefix}.skip.w")
    shortcut = x if skip_w is None else ad.conv2d(x, skip_w)
    return h + shortcut


def detector_forward(params: ParamSet, images: np.ndarray, cfg: DetectorConfig):
    """Run the network on a batch of (N, H, W) images.

    Returns (heatmap logits (N, H/s, W/s), size maps (N, 2, H/s, W/s))
    as Tensors; wrap in `autodiff.no_grad()` for inference.
    """
    x = np.asarray(images)
    if x.ndim != 3:
        raise ShapeError(f"expected (N, H, W) images, got shape {np.shape(images)}")
    n, h, w = x.shape
    if h != w:
        raise ShapeError(f"expected square input, got {h}x{w}")
    if h % cfg.min_side:
        raise ShapeError(f"side {h} not divisible by {cfg.min_side}")

    p = {k: (v if isinstance(v, ad.Tensor) else ad.constant(v))
         for k, v in params.items()}
    hcur = ad.constant(x[:, None].astype(np.float32, copy=False))
    n_pool = int(math.log2(cfg.stride))
    for k in range(max(1, n_pool)):
        hcur = ad.conv2d(hcur, p[f"stem{k}.w"], p[f"stem{k}.b"], padding=1)
        hcur = _scale_shift(hcur, p[f"stem{k}.g"], p[f"stem{k}.bb"])
        hcur = ad.silu(hcur)
        if k < n_pool:
            hcur = ad.avg_pool2x(hcur)

    skips = []
    for i in range(cfg.levels):
        hcur = _block(p, f"enc{i}", hcur)
        if i < cfg.levels - 1:
            skips.append(hcur)
            hcur = ad.avg_pool2x(hcur)
    for i in range(cfg.levels - 2, -1, -1):
        hcur = ad.upsample2x(hcur)
        hcur = _block(p, f"dec{i}", ad.concat_channels([hcur, skips[i]]))

    heat = ad.silu(ad.conv2d(hcur, p["heat0.w"], p["heat0.b"], padding=1))
    heat = ad.conv2d(heat, p["heat1.w"], p["heat1.b"])
    size = ad.silu(ad.conv2d(hcur, p["size0.w"], p["size0.b"], padding=1))
    size = ad.conv2d(size, p["size1.w"], p["size1.b"])
    hs = h // cfg.stride
    return ad.reshape(heat, (n, hs, hs)), size


def encode_targets(boxes, image_size, stride: int):
    """Rasterize boxes into training targets on the stride grid.

    Returns (heatmap (H/s, W/s), sizes (2, H/s, W/s)).  Each box splats
    an unnormalized Gaussian centered on its center cell with
    sigma = max(1, min(w, h) / (3 * stride)), combined with the running
    heatmap by elementwise max, so every center cell holds exactly 1.0.
    Width/height (in grid units) are written at the center cell.
    """
    if isinstance(image_size, (tuple, list)):
        h, w = int(image_size[0]), int(image_size[1])
    else:
        h = w = int(image_size)
    hs, ws = h // stride, w // stride
    heat = np.zeros((hs, ws), np.float32)
    sizes = np.zeros((2, hs, ws), np.float32)
    if not boxes:
        return heat, sizes
    ii, jj = np.mgrid[0:hs, 0:ws]
    for b in boxes:
        ci = min(max(int(b.cy // stride), 0), hs - 1)
        cj = min(max(int(b.cx // stride), 0), ws - 1)
        sigma = max(1.0, min(b.w, b.h) / (3.0 * stride))
        g = np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2) / (2.0 * sigma * sigma))
        np.maximum(heat, g.astype(np.float32), out=heat)
        sizes[0, ci, cj] = b.w / stride
        sizes[1, ci, cj] = b.h / stride
    return heat, sizes


def detection_loss(params: ParamSet, images: np.ndarray, heat_t: np.ndarray,
                   size_t: np.ndarray, cfg: DetectorConfig):
    """Penalty-reduced focal heatmap loss plus weighted L1 size loss.

    Cells where the target heatmap equals 1.0 are positives; elsewhere
    the focal negative term is damped by (1 - target)**4 so cells near a
    center are penalized softly.  Both terms are normalized by the
    positive count.  Returns a scalar Tensor.
    """
    heat_t = np.asarray(heat_t, np.float32)
    size_t = np.asarray(size_t, np.float32)
    logits, sizes = detector_forward(params, images, cfg)

    pos = (heat_t == 1.0).astype(np.float32)
    neg_damp = (1.0 - heat_t) ** _FOCAL_BETA
    npos = max(1.0, float(pos.sum()))

    p = ad.clip(ad.sigmoid(logits), _PROB_EPS, 1.0 - _PROB_EPS)
    pos_term = ad.constant(pos) * ad.power(1.0 - p, _FOCAL_ALPHA) * ad.log(p)
    neg_term = (ad.constant((1.0 - pos) * neg_damp) * ad.power(p, _FOCAL_ALPHA)
                * ad.log(1.0 - p))
    heat_loss = -(ad.reduce_sum(pos_term) + ad.reduce_sum(neg_term)) * (1.0 / npos)

    pos_b = ad.constant(pos[:, None])
    size_loss = ad.reduce_sum(pos_b * ad.absolute(sizes - ad.constant(size_t)))
    return heat_loss + size_loss * (_SIZE_WEIGHT / npos)


def local_peaks(heat: np.ndarray) -> np.ndarray:
    """Boolean mask of cells strictly greater than all 3x3 neighbors.

    Strictness matters: a flat heatmap (e.g. an untrained detector) has
    no peaks at all, rather than a peak at every cell.
    """
    h = np.asarray(heat, np.float64)
    padded = np.full((h.shape[0] + 2, h.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = h
    peak = np.ones(h.shape, bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            peak &= h > padded[1 + di:padded.shape[0] - 1 + di,
                               1 + dj:padded.shape[1] - 1 + dj]
    return peak


def nms(boxes, iou_thresh: float):
    """Greedy non-maximum suppression; keeps descending-score order.

    Candidates are visited by descending score (ties broken by ascending
    x then y) and kept unless they overlap an already-kept box with
    IoU > iou_thresh.  Idempotent: running twice equals running once.
    """
    order = sorted(boxes, key=lambda b: (-(b.score or 0.0), b.x, b.y))
    kept = []
    for cand in order:
        if all(iou(cand, k) <= iou_thresh for k in kept):
            kept.append(cand)
    return kept


def _decode_one(heat: np.ndarray, wh: np.ndarray, shape, conf: float,
                thr: float, stride: int) -> Prediction:
    h, w = shape
    cand = []
    peaks = local_peaks(heat) & (heat > conf)
    for i, j in zip(*np.nonzero(peaks)):
        bw = max(float(wh[0, i, j]) * stride, 1.0)
        bh = max(float(wh[1, i, j]) * stride, 1.0)
        cx = (j + 0.5) * stride
        cy = (i + 0.5) * stride
        box = BBox(cx - bw / 2.0, cy - bh / 2.0, bw, bh, score=float(heat[i, j]))
        cand.append(clip_box(box, w, h))
    return Prediction(tuple(nms(cand, thr)))


def detect_batch(params: ParamSet, images: np.ndarray, cfg: DetectorConfig,
                 conf_thresh: float | None = None,
                 nms_iou: float | None = None) -> list:
    """Detect over a batch of (N, H, W) images; one Prediction each."""
    conf = cfg.conf_thresh if conf_thresh is None else conf_thresh
    thr = cfg.nms_iou if nms_iou is None else nms_iou
    x = np.asarray(images, np.float32)
    with ad.no_grad():
        logits, sizes = detector_forward(params, x, cfg)
    heats = _stable_sigmoid(logits.numpy().astype(np.float64))
    whs = sizes.numpy()
    return [_decode_one(heats[k], whs[k], x.shape[1:], conf, thr, cfg.stride)
            for k in range(x.shape[0])]


def detect(params: ParamSet, image: np.ndarray, cfg: DetectorConfig,
           conf_thresh: float | None = None, nms_iou: float | None = None) -> Prediction:
    """Detect cells in one (H, W) image.

    Heatmap cells that are strict 3x3 local maxima with probability
    above conf_thresh become boxes via the size maps (decoded at cell
    centers, sizes clamped to at least one pixel, clipped to the image),
    then greedy NMS keeps the survivors in descending-score order.
    """
    img = np.asarray(image, np.float32)
    if img.ndim != 2:
        raise ShapeError(f"expected a single (H, W) image, got shape {np.shape(image)}")
    return detect_batch(params, img[None], cfg, conf_thresh, nms_iou)[0]


def _flip_boxes(boxes, side: int, horizontal: bool):
    if horizontal:
        return [BBox(side - b.x - b.w, b.y, b.w, b.h) for b in boxes]
    return [BBox(b.x, side - b.y - b.h, b.w, b.h) for b in boxes]


def _mosaic(images, box_lists, idx: int, rng) -> tuple:
    """Compose 4 training images on a 2S x 2S canvas and crop S x S.

    The current sample takes the top-left quadrant; three partners are
    drawn with replacement.  Boxes are remapped into crop coordinates,
    clipped, and dropped when thinner than 2 pixels on either axis.
    """
    s = images[idx].shape[0]
    partners = [idx] + [int(rng.integers(len(images))) for _ in range(3)]
    canvas = np.zeros((2 * s, 2 * s), np.float32)
    remapped = []
    ox, oy = int(rng.integers(s + 1)), int(rng.integers(s + 1))
    for q, src in enumerate(partners):
        qy, qx = (q // 2) * s, (q % 2) * s
        canvas[qy:qy + s, qx:qx + s] = images[src]
        for b in box_lists[src]:
            nb = BBox(b.x + qx - ox, b.y + qy - oy, b.w, b.h)
            nb = clip_box(nb, s, s)
            if nb.w >= 2.0 and nb.h >= 2.0:
                remapped.append(nb)
    return canvas[oy:oy + s, ox:ox + s], remapped


def _augment_sample(images, box_lists, idx: int, rng, flags) -> tuple:
    img, boxes = images[idx], list(box_lists[idx])
    side = img.shape[0]
    if "mosaic" in flags and rng.random() < 0.5:
        img, boxes = _mosaic(images, box_lists, idx, rng)
    if "hflip" in flags and rng.random() < 0.5:
        img = img[:, ::-1].copy()
        boxes = _flip_boxes(boxes, side, horizontal=True)
    if "vflip" in flags and rng.random() < 0.5:
        img = img[::-1, :].copy()
        boxes = _flip_boxes(boxes, side, horizontal=False)
    if "intensity_jitter" in flags:
        scale = rng.uniform(0.9, 1.1)
        shift = rng.uniform(-0.05, 0.05)
        img = clamp01(img * scale + shift)
    return img, boxes


def _load_split(manifest: DatasetManifest, split: str, root):
    records = manifest.for_split(split)
    images, box_lists = [], []
    for rec in records:
        path = rec.image_ref if root is None else os.path.join(root, rec.image_ref)
        img = read_pgm(path)
        if img.shape[0] != img.shape[1]:
            raise ShapeError(f"non-square training image {rec.image_ref}")
        if images and img.shape != images[0].shape:
            raise ShapeError("training images must share one size")
        images.append(img)
        box_lists.append(list(rec.boxes))
    return images, box_lists


def _val_map50(params: ParamSet, images, box_lists, cfg: DetectorConfig) -> float:
    preds = {}
    for start in range(0, len(images), 64):
        chunk = np.stack(images[start:start + 64])
        for off, pr in enumerate(detect_batch(params, chunk, cfg)):
            preds[str(start + off)] = list(pr.boxes)
    gts = {str(i): boxes for i, boxes in enumerate(box_lists)}
    return map_suite(preds, gts).map50


def train_detector(manifest: DatasetManifest, cfg: DetectorConfig, seed: int = 0,
                   root=None) -> ParamSet:
    """Train on the manifest's train split; early-stop on val mAP@50.

    Per epoch: shuffle, augment per config flags, encode targets, and
    take AdamW steps on the detection loss.  The validation split (when
    present) is scored with mAP@50 after every epoch; training halts
    once `patience` epochs pass without improvement and the best
    parameters are returned.  Deterministic for a fixed (manifest, cfg,
    seed).  `root` resolves relative image refs.
    """
    train_imgs, train_boxes = _load_split(manifest, "train", root)
    if not train_imgs:
        raise ConfigurationError("manifest has an empty train split")
    val_imgs, val_boxes = _load_split(manifest, "val", root)

    params = init_detector(cfg, seed)
    if cfg.epochs == 0:
        return params
    state = init_opt_state(params)
    side = train_imgs[0].shape[0]
    if side % cfg.min_side:
        raise ShapeError(f"image side {side} not divisible by {cfg.min_side}")

    best_map, best_epoch, best_params = -1.0, 0, {k: v.copy() for k, v in params.items()}
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
        order = rng.permutation(len(train_imgs))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            imgs, heats, sizes = [], [], []
            for idx in batch:
                img, boxes = _augment_sample(train_imgs, train_boxes, int(idx),
                                             rng, cfg.augment)
                ht, sz = encode_targets(boxes, side, cfg.stride)
                imgs.append(img)
                heats.append(ht)
                sizes.append(sz)
            wrapped = {k: ad.parameter(v) for k, v in params.items()}
            loss = detection_loss(wrapped, np.stack(imgs), np.stack(heats),
                                  np.stack(sizes), cfg)
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            ad.backward(loss)
            grads = {k: wrapped[k].grad for k in params}
            params, state = adamw_step(params, grads, state, lr=cfg.lr)
        if val_imgs:
            score = _val_map50(params, val_imgs, val_boxes, cfg)
            if score > best_map:
                best_map, best_epoch = score, epoch
                best_params = {k: v.copy() for k, v in params.items()}
            elif epoch - best_epoch >= cfg.patience:
                return best_params
    return best_params if val_imgs else params


def blob_baseline(image: np.ndarray, sigmas, thresh: float) -> Prediction:
    """Difference-of-Gaussians bright-blob detector, no training required.

    For each adjacent sigma pair the DoG response gauss(s1) - gauss(s2)
    is positive over blobs brighter than their surround (cell interiors
    sit above the background here).  Strict 3x3 spatial maxima are
    scored by response normalized to the global maximum across scales;
    those above thresh become boxes with side 2*sqrt(2)*sigma, where
    sigma is the scale of the response: the geometric mean of the pair.
    Cross-scale duplicates are removed greedily: a candidate is dropped
    when it overlaps a kept box at IoU > 0.5 or its center falls inside
    one (concentric responses at neighboring scales collapse to the
    strongest).
    """
    sig = [float(s) for s in sigmas]
    if len(sig) < 2 or any(b <= a for a, b in zip(sig, sig[1:])):
        raise ConfigurationError("sigmas must be ascending with at least two entries")
    img = np.asarray(image, np.float64)
    if img.ndim != 2:
        raise ShapeError(f"expected a single (H, W) image, got shape {np.shape(image)}")

    smoothed = [gaussian_filter(img, s, mode="nearest") for s in sig]
    responses = [smoothed[i] - smoothed[i + 1] for i in range(len(sig) - 1)]
    scales = [math.sqrt(a * b) for a, b in zip(sig, sig[1:])]
    peak_val = max(float(r.max()) for r in responses)
    if peak_val <= 0.0:
        return Prediction(())

    h, w = img.shape
    cand = []
    for r, sigma in zip(responses, scales):
        side = 2.0 * math.sqrt(2.0) * sigma
        mask = local_peaks(r) & (r > 0)
        for i, j in zip(*np.nonzero(mask)):
            conf = float(r[i, j]) / peak_val
            if conf > thresh:
                box = BBox(j + 0.5 - side / 2.0, i + 0.5 - side / 2.0,
                           side, side, score=conf)
                cand.append(clip_box(box, w, h))

    kept = []
    for b in sorted(cand, key=lambda b: (-(b.score or 0.0), b.x, b.y)):
        if all(iou(b, k) <= 0.5 and not k.contains(b.cx, b.cy) for k in kept):
            kept.append(b)
    return Prediction(tuple(kept))

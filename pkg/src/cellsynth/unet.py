"""Convolutional U-Net epsilon predictor built on the autodiff engine.

Encoder-decoder with one residual block per level, 2x average-pool
downsampling, nearest-neighbor upsampling with channel-concatenated
skips, sinusoidal timestep embeddings injected into every block, and
per-channel scale-shift in place of normalization layers.  The final
convolution is zero-initialized so an untrained net predicts zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, ShapeError

ParamSet = dict


@dataclass(frozen=True)
class UNetConfig:
    """Architecture knobs; defaults are sized for desktop-CPU runs."""

    block_channels: tuple = (16, 32, 64)
    time_embed_dim: int = 64
    in_channels: int = 1
    attention: bool = False

    def __post_init__(self):
        if len(self.block_channels) < 1:
            raise ConfigurationError("block_channels must be nonempty")
        if any(int(c) < 1 for c in self.block_channels):
            raise ConfigurationError("block_channels must be positive")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ConfigurationError("time_embed_dim must be even and >= 2")
        if self.attention:
            raise ConfigurationError("attention blocks are not part of this architecture")

    @property
    def levels(self) -> int:
        return len(self.block_channels)


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Standard sin/cos positional features of integer timesteps, (N, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    exponents = np.arange(half, dtype=np.float64) / max(1, half - 1)
    freqs = np.exp(-math.log(10000.0) * exponents)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    return emb.astype(np.float32)


def _conv_init(rng, cout: int, cin: int, k: int) -> np.ndarray:
    fan_in = cin * k * k
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), (cout, cin, k, k)).astype(np.float32)


def _linear_init(rng, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(1.0 / fan_in), (fan_in, fan_out)).astype(np.float32)


def _block_param_names(prefix: str):
    return (f"{prefix}.conv1.w", f"{prefix}.conv1.b", f"{prefix}.ss1.g",
            f"{prefix}.ss1.b", f"{prefix}.temb.w", f"{prefix}.temb.b",
            f"{prefix}.conv2.w", f"{prefix}.conv2.b", f"{prefix}.ss2.g",
            f"{prefix}.ss2.b")


def _init_block(params: ParamSet, rng, prefix: str, cin: int, cout: int, tdim: int) -> None:
    params[f"{prefix}.conv1.w"] = _conv_init(rng, cout, cin, 3)
    params[f"{prefix}.conv1.b"] = np.zeros(cout, np.float32)
    params[f"{prefix}.ss1.g"] = np.ones(cout, np.float32)
    params[f"{prefix}.ss1.b"] = np.zeros(cout, np.float32)
    params[f"{prefix}.temb.w"] = _linear_init(rng, tdim, cout)
    params[f"{prefix}.temb.b"] = np.zeros(cout, np.float32)
    params[f"{prefix}.conv2.w"] = _conv_init(rng, cout, cout, 3)
    params[f"{prefix}.conv2.b"] = np.zeros(cout, np.float32)
    params[f"{prefix}.ss2.g"] = np.ones(cout, np.float32)
    params[f"{prefix}.ss2.b"] = np.zeros(cout, np.float32)
    if cin != cout:
        params[f"{prefix}.skip.w"] = _conv_init(rng, cout, cin, 1)


def unet_init(cfg: UNetConfig, seed: int = 0) -> ParamSet:
    """Fresh parameter set; the output head starts at exactly zero."""
    rng = np.random.default_rng(seed)
    ch = [int(c) for c in cfg.block_channels]
    tdim = cfg.time_embed_dim
    params: ParamSet = {}

    params["tmlp.w1"] = _linear_init(rng, tdim, tdim)
    params["tmlp.b1"] = np.zeros(tdim, np.float32)
    params["tmlp.w2"] = _linear_init(rng, tdim, tdim)
    params["tmlp.b2"] = np.zeros(tdim, np.float32)

    params["stem.w"] = _conv_init(rng, ch[0], cfg.in_channels, 3)
    params["stem.b"] = np.zeros(ch[0], np.float32)

    cin = ch[0]
    for i, cout in enumerate(ch):
        _init_block(params, rng, f"enc{i}", cin, cout, tdim)
        cin = cout
    for i in range(cfg.levels - 2, -1, -1):
        _init_block(params, rng, f"dec{i}", ch[i + 1] + ch[i], ch[i], tdim)

    params["head.ss.g"] = np.ones(ch[0], np.float32)
    params["head.ss.b"] = np.zeros(ch[0], np.float32)
    params["head.w"] = np.zeros((cfg.in_channels, ch[0], 3, 3), np.float32)
    params["head.b"] = np.zeros(cfg.in_channels, np.float32)
    return params


def _scale_shift(h, g, b):
    c = g.shape[0]
    return h * ad.reshape(g, (1, c, 1, 1)) + ad.reshape(b, (1, c, 1, 1))


def _block(p: dict, prefix: str, x, temb):
    cout = p[f"{prefix}.conv1.b"].shape[0]
    h = ad.conv2d(x, p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"], padding=1)
    h = _scale_shift(h, p[f"{prefix}.ss1.g"], p[f"{prefix}.ss1.b"])
    h = ad.silu(h)
    tproj = ad.matmul(temb, p[f"{prefix}.temb.w"]) + p[f"{prefix}.temb.b"]
    h = h + ad.reshape(tproj, (tproj.shape[0], cout, 1, 1))
    h = ad.conv2d(h, p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"], padding=1)
    h = _scale_shift(h, p[f"{prefix}.ss2.g"], p[f"{prefix}.ss2.b"])
    h = ad.silu(h)
    skip_w = p.get(f"{prefix}.skip.w")
    shortcut = x if skip_w is None else ad.conv2d(x, skip_w)
    return h + shortcut


def unet_forward(params: ParamSet, x_t: np.ndarray, t, cfg: UNetConfig):
    """Predict epsilon for a batch.

    `x_t` is (N, H, W) or (N, C, H, W); `t` is a scalar timestep or a
    per-sample integer array.  Returns a Tensor of the input shape; use
    inside `autodiff.no_grad()` for inference.
    """
    x = np.asarray(x_t)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[:, None]
    if x.ndim != 4:
        raise ShapeError(f"expected batched images, got shape {np.shape(x_t)}")
    n, c, h, w = x.shape
    if c != cfg.in_channels:
        raise ShapeError(f"expected {cfg.in_channels} channel(s), got {c}")
    if h != w:
        raise ShapeError(f"expected square input, got {h}x{w}")
    factor = 2 ** (cfg.levels - 1)
    if h % factor:
        raise ShapeError(f"side {h} not divisible by {factor}")

    p = {k: (v if isinstance(v, ad.Tensor) else ad.constant(v))
         for k, v in params.items()}
    tvec = np.broadcast_to(np.atleast_1d(np.asarray(t)), (n,))
    temb = ad.constant(sinusoidal_embedding(tvec, cfg.time_embed_dim).astype(x.dtype))
    temb = ad.silu(ad.matmul(temb, p["tmlp.w1"]) + p["tmlp.b1"])
    temb = ad.matmul(temb, p["tmlp.w2"]) + p["tmlp.b2"]

    hcur = ad.conv2d(ad.constant(x), p["stem.w"], p["stem.b"], padding=1)
    skips = []
    for i in range(cfg.levels):
        hcur = _block(p, f"enc{i}", hcur, temb)
        if i < cfg.levels - 1:
            skips.append(hcur)
            hcur = ad.avg_pool2x(hcur)
    for i in range(cfg.levels - 2, -1, -1):
        hcur = ad.upsample2x(hcur)
        hcur = _block(p, f"dec{i}", ad.concat_channels([hcur, skips[i]]), temb)

    hcur = _scale_shift(hcur, p["head.ss.g"], p["head.ss.b"])
    hcur = ad.silu(hcur)
    out = ad.conv2d(hcur, p["head.w"], p["head.b"], padding=1)
    if squeeze:
        out = ad.reshape(out, (n, h, w))
    return out


class UNetDenoiser:
    """Callable denoiser bundling (config, params) for the samplers."""

    def __init__(self, params: ParamSet, cfg: UNetConfig):
        self.params = params
        self.cfg = cfg

    def predict_epsilon(self, x_t: np.ndarray, t) -> np.ndarray:
        with ad.no_grad():
            return unet_forward(self.params, x_t, t, self.cfg).numpy()

"""Epsilon-prediction training loop with EMA and FID-based selection.

Single-threaded and fully deterministic for a given seed: batch order,
timestep draws, and noise come from per-epoch child generators, and the
periodic FID evaluation samples with its own derived seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoints import config_hash, save_checkpoint
from .diffusion import NoiseSchedule, SamplerConfig, forward_noise, make_schedule, sample
from .errors import ConfigurationError, SizeError
from .fid import frechet_distance, gaussian_stats
from .optim import adamw_step, ema_update, init_ema, init_opt_state
from .unet import UNetConfig, UNetDenoiser, unet_forward


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 4
    epochs: int = 50
    ema_decay: float = 0.9999
    fid_every_epochs: int = 10
    seed: int = 0
    fid_sample_count: int = 64
    fid_sample_steps: int = 40

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigurationError("ema_decay must be in [0,1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size >= 1 and epochs >= 0 required")
        if self.fid_every_epochs < 1:
            raise ConfigurationError("fid_every_epochs must be >= 1")
        if self.fid_sample_count < 2:
            raise ConfigurationError("fid_sample_count must be >= 2")


@dataclass(frozen=True)
class CheckpointInfo:
    epoch: int
    path: Path
    fid: float | None


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch)]))


def _wrap(params: dict) -> dict:
    return {k: ad.parameter(v) for k, v in params.items()}


def loss_and_grads(params: dict, x0: np.ndarray, noise: np.ndarray,
                   t: np.ndarray, schedule: NoiseSchedule,
                   unet_cfg: UNetConfig) -> tuple[float, dict]:
    """MSE between predicted and true noise, with gradients by name."""
    if x0.shape[0] == 0:
        raise SizeError("empty batch")
    x_t = forward_noise(x0, t, noise, schedule)
    wrapped = _wrap(params)
    pred = unet_forward(wrapped, x_t, t, unet_cfg)
    loss = ((pred - ad.constant(noise)) ** 2.0).mean()
    ad.backward(loss)
    grads = {k: p.grad for k, p in wrapped.items()}
    return loss.item(), grads


def train(images: np.ndarray, unet_cfg: UNetConfig, cfg: TrainConfig,
          fid_reference, out_dir, params: dict | None = None,
          schedule: NoiseSchedule | None = None,
          ) -> tuple[list[CheckpointInfo], list[tuple[int, float]], list[float]]:
    """Train on a stack of same-size images in [0,1].

    Returns (checkpoints, fid_curve, loss_curve).  A checkpoint is
    written at epoch 0 and at every FID evaluation epoch plus the final
    epoch; each persists raw and EMA weights ("raw."/"ema." prefixes).
    """
    imgs = np.asarray(images, dtype=np.float32)
    if imgs.ndim != 3 or imgs.shape[0] == 0:
        raise SizeError(f"expected a nonempty (N,H,W) image stack, got {imgs.shape}")
    if schedule is None:
        schedule = make_schedule()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if params is None:
        from .unet import unet_init
        params = unet_init(unet_cfg, seed=cfg.seed)
    ema = init_ema(params)
    opt_state = init_opt_state(params)
    chash = config_hash(cfg) + "-" + config_hash(unet_cfg)
    ref_stats = gaussian_stats(fid_reference)

    side = imgs.shape[1]
    sampler = SamplerConfig(kind="euler_ancestral", steps=cfg.fid_sample_steps,
                            spacing="trailing")

    def eval_fid(weights: dict, epoch: int) -> float:
        denoiser = UNetDenoiser(weights, unet_cfg)
        batch = sample(denoiser, sampler, schedule,
                       (cfg.fid_sample_count, side, side),
                       seed=np.random.SeedSequence([cfg.seed, 1_000_003, epoch]).generate_state(1)[0])
        return frechet_distance(gaussian_stats(list(batch)), ref_stats)

    def write_ckpt(epoch: int, fid: float | None) -> CheckpointInfo:
        blob = {f"raw.{k}": v for k, v in params.items()}
        blob.update({f"ema.{k}": v for k, v in ema.items()})
        path = out_dir / f"ckpt_ep{epoch:05d}.ckpt"
        save_checkpoint(path, blob, epoch=epoch, cfg_hash=chash, fid=fid)
        return CheckpointInfo(epoch=epoch, path=path, fid=fid)

    checkpoints = [write_ckpt(0, None)]
    fid_curve: list[tuple[int, float]] = []
    loss_curve: list[float] = []

    n = imgs.shape[0]
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    for epoch in range(1, cfg.epochs + 1):
        rng = _epoch_rng(cfg.seed, epoch)
        order = rng.permutation(n)
        for step in range(steps_per_epoch):
            idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            x0 = imgs[idx]
            t = rng.integers(0, schedule.T, size=idx.size)
            noise = rng.standard_normal(x0.shape).astype(np.float32)
            loss, grads = loss_and_grads(params, x0, noise, t, schedule, unet_cfg)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch} step {step}")
            loss_curve.append(loss)
            params, opt_state = adamw_step(params, grads, opt_state, lr=cfg.lr)
            ema = ema_update(ema, params, cfg.ema_decay)

        if epoch % cfg.fid_every_epochs == 0:
            fid = eval_fid(ema, epoch)
            fid_curve.append((epoch, fid))
            checkpoints.append(write_ckpt(epoch, fid))
        elif epoch == cfg.epochs:
            checkpoints.append(write_ckpt(epoch, None))

    return checkpoints, fid_curve, loss_curve


def select_model(checkpoints: list[CheckpointInfo],
                 fid_curve: list[tuple[int, float]]) -> CheckpointInfo:
    """Checkpoint with the lowest FID; ties resolved to the latest epoch."""
    if not checkpoints or not fid_curve:
        raise SizeError("select_model needs nonempty checkpoints and fid curve")
    best_epoch, best_fid = fid_curve[0]
    for epoch, fid in fid_curve[1:]:
        if fid < best_fid or (fid == best_fid and epoch > best_epoch):
            best_epoch, best_fid = epoch, fid
    for info in checkpoints:
        if info.epoch == best_epoch:
            return info
    raise SizeError(f"no checkpoint recorded for epoch {best_epoch}")

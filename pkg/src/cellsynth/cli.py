"""Command-line pipeline driver.

Subcommands cover the full experiment: phantom-gen, patchify,
train-diffusion, sample, fid, autolabel, mix, train-detector, evaluate,
survey-serve, report.  Every stage writes its artifacts into a run
directory together with a `run.txt` reproducibility record (stage name,
config hash, seed, library versions, and the effective configuration),
so re-running a stage with its recorded settings reproduces the same
bytes.  Stages communicate through files: each reads the previous
stage's manifests or checkpoints from disk, which is what makes a
partially completed pipeline resumable per stage.

Configuration comes from an INI file with one flat key=value section
per stage (`--config pipeline.ini`); command-line flags override file
values, which override defaults.
"""

from __future__ import annotations

import argparse
import configparser
import os
import platform
import sys

import numpy as np

from . import __version__
from .checkpoints import config_hash, load_checkpoint, save_checkpoint, split_prefixed
from .dataset_mix import SCC_NAMES, split, standard_mixes
from .detector import (DetectorConfig, TrainedDetector, detect_batch,
                       train_detector)
from .diffusion import SamplerConfig, make_schedule, sample
from .errors import ConfigurationError
from .eval_map import map_suite
from .fid import compute_fid
from .images import read_pgm, write_pgm
from .manifest import DatasetManifest, ManifestRecord, relabel
from .autolabel import label_from_fluorescence, model_assisted_label, write_review
from .patches import extract_patches, flag_patches, sample_filtered
from .phantoms import PhantomConfig, derive_seed, fluorescence_ref, generate_dataset
from .survey import ResponseStore
from .survey_server import SurveyService, make_server
from .train_diffusion import TrainConfig, select_model, train
from .unet import UNetConfig, UNetDenoiser


def _parse_tuple(text: str, cast=int) -> tuple:
    return tuple(cast(p) for p in str(text).replace(",", " ").split())


def _load_ini(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        parser.read(path)
    return parser


def _effective(defaults: dict, ini: configparser.ConfigParser, section: str,
               flags: dict) -> dict:
    """defaults < config-file section < explicit flags."""
    out = dict(defaults)
    if ini.has_section(section):
        for key, value in ini.items(section):
            if key not in out:
                raise ConfigurationError(f"[{section}] has unknown key {key!r}")
            out[key] = value
    for key, value in flags.items():
        if value is not None:
            out[key] = value
    return out


def _write_run_record(out_dir: str, stage: str, config: dict,
                      extras: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    cfg_text = {k: str(v) for k, v in config.items()}
    lines = [
        "# cellsynth-run v1",
        f"stage={stage}",
        f"config_hash={config_hash(cfg_text)}",
        f"python={platform.python_version()}",
        f"numpy={np.__version__}",
        f"cellsynth={__version__}",
    ]
    lines.extend(f"{k}={cfg_text[k]}" for k in sorted(cfg_text))
    for k, v in (extras or {}).items():
        lines.append(f"{k}={v}")
    with open(os.path.join(out_dir, "run.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _rebase_records(records, manifest_path: str, out_dir: str) -> list:
    """Rewrite image refs so they stay valid from the new manifest's dir."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    out = []
    for rec in records:
        ref = rec.image_ref
        if not os.path.isabs(ref):
            ref = os.path.relpath(os.path.join(base, ref), os.path.abspath(out_dir))
        out.append(relabel(rec, image_ref=ref.replace(os.sep, "/")))
    return out


def _load_split_images(manifest_path: str, split_tag: str | None):
    """(records, images) for one split, or the whole manifest when None."""
    man = DatasetManifest.load(manifest_path)
    recs = man.records if split_tag in (None, "all") else man.for_split(split_tag)
    base = os.path.dirname(os.path.abspath(manifest_path))
    images = [read_pgm(os.path.join(base, r.image_ref)) for r in recs]
    return man, recs, images


def _write_ini(path: str, sections: dict) -> None:
    parser = configparser.ConfigParser()
    for name, kv in sections.items():
        parser[name] = {k: str(v) for k, v in kv.items()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        parser.write(fh)


def _detector_config_from(ini_path: str | None, overrides: dict) -> DetectorConfig:
    values: dict = {}
    if ini_path and os.path.exists(ini_path):
        parser = configparser.ConfigParser()
        parser.read(ini_path)
        if parser.has_section("detector"):
            sec = parser["detector"]
            values = {
                "stride": sec.getint("stride"),
                "channels": _parse_tuple(sec.get("channels")),
                "conf_thresh": sec.getfloat("conf_thresh"),
                "nms_iou": sec.getfloat("nms_iou"),
                "epochs": sec.getint("epochs"),
                "patience": sec.getint("patience"),
                "lr": sec.getfloat("lr"),
                "batch_size": sec.getint("batch_size"),
                "augment": _parse_tuple(sec.get("augment"), str),
            }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return DetectorConfig(**values)


def _detector_ini_payload(cfg: DetectorConfig) -> dict:
    return {
        "stride": cfg.stride,
        "channels": ",".join(str(c) for c in cfg.channels),
        "conf_thresh": cfg.conf_thresh,
        "nms_iou": cfg.nms_iou,
        "epochs": cfg.epochs,
        "patience": cfg.patience,
        "lr": cfg.lr,
        "batch_size": cfg.batch_size,
        "augment": ",".join(cfg.augment),
    }


# ---------------------------------------------------------------- stages

def cmd_phantom_gen(args, ini) -> int:
    cfg = _effective(
        {"n": 100, "width": 64, "height": 64, "cells": "3,8", "radius": "5,9",
         "noise": 0.02, "seed": 0},
        ini, "phantom-gen",
        {"n": args.n, "width": args.width, "height": args.height,
         "cells": args.cells, "radius": args.radius, "noise": args.noise,
         "seed": args.seed})
    counts = _parse_tuple(cfg["cells"])
    radii = _parse_tuple(cfg["radius"], float)
    pcfg = PhantomConfig(width=int(cfg["width"]), height=int(cfg["height"]),
                         cell_count_range=counts, radius_range=radii,
                         noise_sigma=float(cfg["noise"]), seed=int(cfg["seed"]))
    man = generate_dataset(pcfg, int(cfg["n"]), args.out)
    _write_run_record(args.out, "phantom-gen", cfg,
                      {"images": len(man.records)})
    print(f"phantom-gen: wrote {len(man.records)} image pairs to {args.out}")
    return 0


def cmd_patchify(args, ini) -> int:
    cfg = _effective(
        {"patch_size": 64, "keep": 0, "seed": 0, "dark_thresh": 0.2,
         "area_frac": 0.05},
        ini, "patchify",
        {"patch_size": args.patch_size, "keep": args.keep, "seed": args.seed,
         "dark_thresh": args.dark_thresh, "area_frac": args.area_frac})
    sources = sorted(args.images)
    if not sources:
        raise ConfigurationError("patchify needs at least one source image")
    all_patches = []
    for path in sources:
        img = read_pgm(path)
        sid = os.path.splitext(os.path.basename(path))[0]
        all_patches.extend(extract_patches(img, int(cfg["patch_size"]), sid))
    flagged = flag_patches(all_patches, float(cfg["dark_thresh"]),
                           float(cfg["area_frac"]))
    keep = int(cfg["keep"]) or sum(1 for p in flagged if not p.flag)
    kept = sample_filtered(flagged, keep, int(cfg["seed"]))

    img_dir = os.path.join(args.out, "images")
    os.makedirs(img_dir, exist_ok=True)
    records = []
    for k, p in enumerate(kept):
        ref = f"images/patch_{k:05d}.pgm"
        write_pgm(os.path.join(args.out, ref), p.patch)
        records.append(ManifestRecord(ref, (), "real", "pool"))
    man = DatasetManifest("patches", int(cfg["seed"]), records)
    man.save(os.path.join(args.out, "manifest.txt"))
    _write_run_record(args.out, "patchify", cfg,
                      {"sources": len(sources), "extracted": len(all_patches),
                       "edge_flagged": sum(1 for p in flagged if p.flag),
                       "kept": len(kept)})
    print(f"patchify: kept {len(kept)}/{len(all_patches)} patches in {args.out}")
    return 0


def cmd_train_diffusion(args, ini) -> int:
    cfg = _effective(
        {"manifest": "", "split": "train", "epochs": 50, "batch_size": 4,
         "lr": 1e-4, "ema_decay": 0.9999, "fid_every": 10, "fid_count": 64,
         "fid_steps": 40, "channels": "16,32,64", "tdim": 64, "seed": 0},
        ini, "train-diffusion",
        {"manifest": args.manifest, "split": args.split, "epochs": args.epochs,
         "batch_size": args.batch_size, "lr": args.lr, "fid_every": args.fid_every,
         "channels": args.channels, "seed": args.seed})
    if not cfg["manifest"]:
        raise ConfigurationError("train-diffusion requires --manifest")
    _, recs, images = _load_split_images(cfg["manifest"], str(cfg["split"]))
    if not images:
        raise ConfigurationError(f"no records in split {cfg['split']!r}")

    unet_cfg = UNetConfig(block_channels=_parse_tuple(cfg["channels"]),
                          time_embed_dim=int(cfg["tdim"]))
    tcfg = TrainConfig(lr=float(cfg["lr"]), batch_size=int(cfg["batch_size"]),
                       epochs=int(cfg["epochs"]), ema_decay=float(cfg["ema_decay"]),
                       fid_every_epochs=int(cfg["fid_every"]),
                       fid_sample_count=int(cfg["fid_count"]),
                       fid_sample_steps=int(cfg["fid_steps"]), seed=int(cfg["seed"]))
    stack = np.stack(images)
    checkpoints, fid_curve, loss_curve = train(stack, unet_cfg, tcfg,
                                               list(stack), args.out)
    best = select_model(checkpoints, fid_curve)

    with open(os.path.join(args.out, "loss_curve.csv"), "w", newline="\n") as fh:
        fh.write("step,loss\n")
        fh.writelines(f"{i},{v:.6f}\n" for i, v in enumerate(loss_curve))
    with open(os.path.join(args.out, "fid_curve.csv"), "w", newline="\n") as fh:
        fh.write("epoch,fid\n")
        fh.writelines(f"{e},{v:.6f}\n" for e, v in fid_curve)
    with open(os.path.join(args.out, "selected.txt"), "w", newline="\n") as fh:
        fid_txt = "nan" if best.fid is None else f"{best.fid:.6f}"
        fh.write(f"checkpoint={os.path.basename(best.path)}\n"
                 f"epoch={best.epoch}\nfid={fid_txt}\n")
    _write_ini(os.path.join(args.out, "config.ini"),
               {"unet": {"channels": ",".join(str(c) for c in unet_cfg.block_channels),
                         "tdim": unet_cfg.time_embed_dim}})
    _write_run_record(args.out, "train-diffusion", cfg,
                      {"train_images": len(images),
                       "selected_epoch": best.epoch,
                       "checkpoints": len(checkpoints)})
    print(f"train-diffusion: {len(images)} images, {tcfg.epochs} epochs; "
          f"selected epoch {best.epoch} (fid "
          f"{'n/a' if best.fid is None else f'{best.fid:.4f}'}) in {args.out}")
    return 0


def _load_unet_from(checkpoint_path: str, weights: str,
                    channels, tdim) -> tuple[UNetConfig, dict]:
    sidecar = os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)),
                           "config.ini")
    if channels is None and os.path.exists(sidecar):
        parser = configparser.ConfigParser()
        parser.read(sidecar)
        if parser.has_section("unet"):
            channels = parser["unet"].get("channels")
            tdim = tdim or parser["unet"].getint("tdim")
    if channels is None:
        raise ConfigurationError(
            "cannot infer the network shape: pass --channels or keep "
            "config.ini next to the checkpoint")
    unet_cfg = UNetConfig(block_channels=_parse_tuple(channels),
                          time_embed_dim=int(tdim or 64))
    tensors, _meta = load_checkpoint(checkpoint_path)
    params = split_prefixed(tensors, weights)
    if not params:
        raise ConfigurationError(f"checkpoint holds no {weights!r} weights")
    return unet_cfg, params


def cmd_sample(args, ini) -> int:
    cfg = _effective(
        {"checkpoint": "", "count": 250, "batch": 16, "steps_min": 35,
         "steps_max": 40, "sampler": "euler_ancestral", "eta": 0.0,
         "weights": "ema", "size": 32, "seed": 0, "channels": None, "tdim": None},
        ini, "sample",
        {"checkpoint": args.checkpoint, "count": args.count, "batch": args.batch,
         "steps_min": args.steps_min, "steps_max": args.steps_max,
         "sampler": args.sampler, "weights": args.weights, "size": args.size,
         "seed": args.seed, "channels": args.channels})
    if not cfg["checkpoint"]:
        raise ConfigurationError("sample requires --checkpoint")
    lo, hi = int(cfg["steps_min"]), int(cfg["steps_max"])
    if lo > hi:
        raise ConfigurationError(f"steps_min {lo} exceeds steps_max {hi}")
    unet_cfg, params = _load_unet_from(str(cfg["checkpoint"]), str(cfg["weights"]),
                                       cfg["channels"], cfg["tdim"])
    denoiser = UNetDenoiser(params, unet_cfg)
    schedule = make_schedule()

    count, batch = int(cfg["count"]), int(cfg["batch"])
    side, seed = int(cfg["size"]), int(cfg["seed"])
    rng = np.random.default_rng(seed)
    img_dir = os.path.join(args.out, "images")
    os.makedirs(img_dir, exist_ok=True)
    records, step_rows, written = [], [], 0
    batch_idx = 0
    while written < count:
        n = min(batch, count - written)
        steps = int(rng.integers(lo, hi + 1))
        scfg = SamplerConfig(kind=str(cfg["sampler"]), steps=steps,
                             eta=float(cfg["eta"]), spacing="trailing")
        batch_seed = derive_seed(seed, batch_idx)
        imgs = sample(denoiser, scfg, schedule, (n, side, side), seed=batch_seed)
        for img in imgs:
            ref = f"images/synth_{written:05d}.pgm"
            write_pgm(os.path.join(args.out, ref), img)
            records.append(ManifestRecord(ref, (), "synthetic", "pool"))
            written += 1
        step_rows.append((batch_idx, steps, batch_seed))
        batch_idx += 1

    man = DatasetManifest("samples", seed, records)
    man.save(os.path.join(args.out, "manifest.txt"))
    with open(os.path.join(args.out, "steps.csv"), "w", newline="\n") as fh:
        fh.write("batch,steps,seed\n")
        fh.writelines(f"{b},{s},{sd}\n" for b, s, sd in step_rows)
    _write_run_record(args.out, "sample", cfg,
                      {"batches": batch_idx,
                       "steps_log": ",".join(str(s) for _, s, _ in step_rows)})
    print(f"sample: wrote {written} images in {batch_idx} batches "
          f"(steps per batch: {', '.join(str(s) for _, s, _ in step_rows[:8])}"
          f"{'...' if batch_idx > 8 else ''}) to {args.out}")
    return 0


def cmd_fid(args, ini) -> int:
    cfg = _effective(
        {"ref": "", "gen": "", "ref_split": "all", "gen_split": "all"},
        ini, "fid",
        {"ref": args.ref, "gen": args.gen, "ref_split": args.ref_split,
         "gen_split": args.gen_split})
    if not cfg["ref"] or not cfg["gen"]:
        raise ConfigurationError("fid requires --ref and --gen manifests")
    _, _, ref_imgs = _load_split_images(cfg["ref"], str(cfg["ref_split"]))
    _, _, gen_imgs = _load_split_images(cfg["gen"], str(cfg["gen_split"]))
    value = compute_fid(ref_imgs, gen_imgs)
    print(f"fid={value:.6f} (ref n={len(ref_imgs)}, gen n={len(gen_imgs)})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.csv"), "w", newline="\n") as fh:
            fh.write(f"metric,value\nfid,{value:.6f}\n")
        _write_run_record(args.out, "fid", cfg, {"fid": f"{value:.6f}"})
    return 0


def cmd_autolabel(args, ini) -> int:
    cfg = _effective(
        {"manifest": "", "mode": "fluorescence", "method": "otsu", "tau": None,
         "min_area": 9, "conf": 0.5, "detector": "", "split": "all"},
        ini, "autolabel",
        {"manifest": args.manifest, "mode": args.mode, "method": args.method,
         "tau": args.tau, "min_area": args.min_area, "conf": args.conf,
         "detector": args.detector, "split": args.split})
    if not cfg["manifest"]:
        raise ConfigurationError("autolabel requires --manifest")
    man, recs, images = _load_split_images(cfg["manifest"], str(cfg["split"]))
    base = os.path.dirname(os.path.abspath(cfg["manifest"]))

    if str(cfg["mode"]) == "fluorescence":
        labels = []
        for rec in recs:
            fl = read_pgm(os.path.join(base, fluorescence_ref(rec.image_ref)))
            tau = None if cfg["tau"] in (None, "", "none") else float(cfg["tau"])
            labels.append(label_from_fluorescence(rec.image_ref, fl,
                                                  method=str(cfg["method"]),
                                                  tau=tau,
                                                  min_area=int(cfg["min_area"])))
        review = write_review(labels)
    elif str(cfg["mode"]) == "model":
        if not cfg["detector"]:
            raise ConfigurationError("model mode requires --detector")
        dcfg = _detector_config_from(
            os.path.join(os.path.dirname(os.path.abspath(str(cfg["detector"]))),
                         "config.ini"), {})
        tensors, _ = load_checkpoint(str(cfg["detector"]))
        trained = TrainedDetector(tensors, dcfg)
        pairs = [(rec.image_ref, img) for rec, img in zip(recs, images)]
        labels, review = model_assisted_label(trained, pairs, float(cfg["conf"]))
    else:
        raise ConfigurationError(f"unknown autolabel mode {cfg['mode']!r}")

    os.makedirs(args.out, exist_ok=True)
    by_id = {l.image_id: l for l in labels}
    out_records = [relabel(rec, boxes=by_id[rec.image_ref].boxes)
                   for rec in recs]
    out_records = _rebase_records(out_records, str(cfg["manifest"]), args.out)
    out_man = DatasetManifest(man.name, man.seed, out_records)
    out_man.save(os.path.join(args.out, "manifest.txt"))
    with open(os.path.join(args.out, "review.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(review)
    boxes_total = sum(len(l.boxes) for l in labels)
    _write_run_record(args.out, "autolabel", cfg,
                      {"labeled": len(labels), "boxes": boxes_total})
    print(f"autolabel[{cfg['mode']}]: {boxes_total} boxes over {len(labels)} "
          f"images; manifest and review file in {args.out}")
    return 0


def cmd_mix(args, ini) -> int:
    cfg = _effective(
        {"pool": "", "synthetic": "", "train_n": 500, "val_n": 200,
         "test_n": 300, "seed": 0},
        ini, "mix",
        {"pool": args.pool, "synthetic": args.synthetic, "train_n": args.train_n,
         "val_n": args.val_n, "test_n": args.test_n, "seed": args.seed})
    if not cfg["pool"] or not cfg["synthetic"]:
        raise ConfigurationError("mix requires --pool and --synthetic manifests")
    os.makedirs(args.out, exist_ok=True)
    pool_man = DatasetManifest.load(str(cfg["pool"]))
    synth_man = DatasetManifest.load(str(cfg["synthetic"]))
    pool_man = pool_man.with_records(
        _rebase_records(pool_man.records, str(cfg["pool"]), args.out))
    synth_man = synth_man.with_records(
        _rebase_records(synth_man.records, str(cfg["synthetic"]), args.out))

    base = split(pool_man, int(cfg["train_n"]), int(cfg["val_n"]),
                 int(cfg["test_n"]), seed=int(cfg["seed"]))
    family = standard_mixes(base, synth_man, seed=int(cfg["seed"]))
    for name, man in family.items():
        man.save(os.path.join(args.out, f"{name}.txt"))
    _write_run_record(args.out, "mix", cfg,
                      {"datasets": ",".join(family)})
    print(f"mix: wrote {len(family)} dataset manifests to {args.out}")
    return 0


def cmd_train_detector(args, ini) -> int:
    cfg = _effective(
        {"manifest": "", "stride": 4, "channels": "16,32,64", "conf_thresh": 0.25,
         "nms_iou": 0.5, "epochs": 60, "patience": 35, "lr": 1e-3,
         "batch_size": 8, "augment": "hflip,vflip,intensity_jitter,mosaic",
         "seed": 0},
        ini, "train-detector",
        {"manifest": args.manifest, "stride": args.stride, "channels": args.channels,
         "conf_thresh": args.conf_thresh, "nms_iou": args.nms_iou,
         "epochs": args.epochs, "patience": args.patience, "lr": args.lr,
         "batch_size": args.batch_size, "augment": args.augment, "seed": args.seed})
    if not cfg["manifest"]:
        raise ConfigurationError("train-detector requires --manifest")
    dcfg = DetectorConfig(
        stride=int(cfg["stride"]), channels=_parse_tuple(cfg["channels"]),
        conf_thresh=float(cfg["conf_thresh"]), nms_iou=float(cfg["nms_iou"]),
        epochs=int(cfg["epochs"]), patience=int(cfg["patience"]),
        lr=float(cfg["lr"]), batch_size=int(cfg["batch_size"]),
        augment=_parse_tuple(cfg["augment"], str))
    man = DatasetManifest.load(str(cfg["manifest"]))
    root = os.path.dirname(os.path.abspath(str(cfg["manifest"])))
    params = train_detector(man, dcfg, seed=int(cfg["seed"]), root=root)

    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "detector.ckpt")
    save_checkpoint(ckpt, params, epoch=dcfg.epochs, cfg_hash=config_hash(dcfg))
    _write_ini(os.path.join(args.out, "config.ini"),
               {"detector": _detector_ini_payload(dcfg)})
    _write_run_record(args.out, "train-detector", cfg,
                      {"train_records": len(man.for_split("train")),
                       "val_records": len(man.for_split("val"))})
    print(f"train-detector[{man.name}]: checkpoint at {ckpt}")
    return 0


def _evaluate_checkpoint(manifest_path: str, split_tag: str, ckpt_path: str,
                         overrides: dict):
    dcfg = _detector_config_from(
        os.path.join(os.path.dirname(os.path.abspath(ckpt_path)), "config.ini"),
        overrides)
    tensors, _ = load_checkpoint(ckpt_path)
    man, recs, images = _load_split_images(manifest_path, split_tag)
    if not recs:
        raise ConfigurationError(f"no records in split {split_tag!r}")
    preds, gts = {}, {}
    for start in range(0, len(recs), 64):
        chunk = np.stack(images[start:start + 64])
        for off, pr in enumerate(detect_batch(tensors, chunk, dcfg)):
            rec = recs[start + off]
            preds[rec.image_ref] = list(pr.boxes)
            gts[rec.image_ref] = list(rec.boxes)
    return man, map_suite(preds, gts), len(recs)


def _metrics_table(rows: list) -> str:
    """rows: (name, map50, map75, map5095) -> aligned 4-decimal table."""
    width = max(len("dataset"), *(len(r[0]) for r in rows)) if rows else 7
    head = f"{'dataset':<{width}}  mAP@50  mAP@75  mAP@50:95"
    body = [f"{name:<{width}}  {m50:.4f}  {m75:.4f}  {m5095:>9.4f}"
            for name, m50, m75, m5095 in rows]
    return "\n".join([head] + body)


def cmd_evaluate(args, ini) -> int:
    cfg = _effective(
        {"manifest": "", "checkpoint": "", "split": "test", "name": "",
         "conf_thresh": None, "nms_iou": None},
        ini, "evaluate",
        {"manifest": args.manifest, "checkpoint": args.checkpoint,
         "split": args.split, "name": args.name, "conf_thresh": args.conf_thresh,
         "nms_iou": args.nms_iou})
    if not cfg["manifest"] or not cfg["checkpoint"]:
        raise ConfigurationError("evaluate requires --manifest and --checkpoint")
    overrides = {}
    if cfg["conf_thresh"] is not None:
        overrides["conf_thresh"] = float(cfg["conf_thresh"])
    if cfg["nms_iou"] is not None:
        overrides["nms_iou"] = float(cfg["nms_iou"])
    man, result, n = _evaluate_checkpoint(str(cfg["manifest"]), str(cfg["split"]),
                                          str(cfg["checkpoint"]), overrides)
    name = str(cfg["name"]) or man.name
    print(_metrics_table([(name, result.map50, result.map75, result.map5095)]))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.csv"), "w", newline="\n") as fh:
            fh.write("dataset,map50,map75,map5095\n")
            fh.write(f"{name},{result.map50:.6f},{result.map75:.6f},"
                     f"{result.map5095:.6f}\n")
        _write_run_record(args.out, "evaluate", cfg,
                          {"evaluated": n, "map50": f"{result.map50:.6f}"})
    return 0


def cmd_survey_serve(args, ini) -> int:
    cfg = _effective(
        {"synthetic": "", "real": "", "host": "127.0.0.1", "port": 8765,
         "store": "responses.log"},
        ini, "survey-serve",
        {"synthetic": args.synthetic, "real": args.real, "host": args.host,
         "port": args.port, "store": args.store})
    if not cfg["synthetic"] or not cfg["real"]:
        raise ConfigurationError("survey-serve requires --synthetic and --real")

    def image_paths(source: str) -> list:
        if os.path.isdir(source):
            return sorted(os.path.join(source, f) for f in os.listdir(source)
                          if f.endswith(".pgm"))
        man = DatasetManifest.load(source)
        base = os.path.dirname(os.path.abspath(source))
        return [os.path.join(base, r.image_ref) for r in man.records]

    service = SurveyService(image_paths(str(cfg["synthetic"])),
                            image_paths(str(cfg["real"])),
                            ResponseStore(str(cfg["store"])))
    server = make_server(service, str(cfg["host"]), int(cfg["port"]))
    host, port = server.server_address[:2]
    print(f"survey-serve: listening on http://{host}:{port} "
          f"(responses -> {cfg['store']})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_report(args, ini) -> int:
    pairs = []
    if args.runs:
        for name in SCC_NAMES:
            path = os.path.join(args.runs, name, "metrics.csv")
            if os.path.exists(path):
                pairs.append((name, path))
    for item in args.evaluation or []:
        if "=" not in item:
            raise ConfigurationError(f"--evaluation wants name=metrics.csv, got {item!r}")
        name, path = item.split("=", 1)
        pairs.append((name, path))
    if not pairs:
        raise ConfigurationError("report needs --runs or --evaluation entries")

    rows = []
    for name, path in pairs:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        header = lines[0].split(",")
        values = dict(zip(header, lines[1].split(",")))
        rows.append((name, float(values["map50"]), float(values["map75"]),
                     float(values["map5095"])))

    known = [r for name in SCC_NAMES for r in rows if r[0] == name]
    extra = [r for r in rows if r[0] not in SCC_NAMES]
    rows = known + extra
    print(_metrics_table(rows))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.csv"), "w", newline="\n") as fh:
            fh.write("dataset,map50,map75,map5095\n")
            fh.writelines(f"{n},{a:.6f},{b:.6f},{c:.6f}\n" for n, a, b, c in rows)
        _write_run_record(args.out, "report",
                          {"datasets": ",".join(n for n, *_ in rows)},
                          {"rows": len(rows)})
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellsynth",
        description="Synthetic brightfield pipeline: phantoms, diffusion, "
                    "labeling, dataset mixes, detection, survey.")
    parser.add_argument("--config", help="INI file with one section per stage")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_out=True, out_required=True):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        if needs_out:
            p.add_argument("--out", required=out_required,
                           help="run directory for artifacts")
        p.add_argument("--seed", type=int)
        return p

    p = add("phantom-gen", cmd_phantom_gen)
    p.add_argument("--n", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--cells", help="count range, e.g. 3,8")
    p.add_argument("--radius", help="radius range, e.g. 5,9")
    p.add_argument("--noise", type=float)

    p = add("patchify", cmd_patchify)
    p.add_argument("--images", nargs="+", required=True, help="source PGM files")
    p.add_argument("--patch-size", type=int, dest="patch_size")
    p.add_argument("--keep", type=int)
    p.add_argument("--dark-thresh", type=float, dest="dark_thresh")
    p.add_argument("--area-frac", type=float, dest="area_frac")

    p = add("train-diffusion", cmd_train_diffusion)
    p.add_argument("--manifest")
    p.add_argument("--split")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--fid-every", type=int, dest="fid_every")
    p.add_argument("--channels")

    p = add("sample", cmd_sample)
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--steps-min", type=int, dest="steps_min")
    p.add_argument("--steps-max", type=int, dest="steps_max")
    p.add_argument("--sampler", choices=("ddim", "euler_ancestral"))
    p.add_argument("--weights", choices=("ema", "raw"))
    p.add_argument("--size", type=int)
    p.add_argument("--channels")

    p = add("fid", cmd_fid, out_required=False)
    p.add_argument("--ref")
    p.add_argument("--gen")
    p.add_argument("--ref-split", dest="ref_split")
    p.add_argument("--gen-split", dest="gen_split")

    p = add("autolabel", cmd_autolabel)
    p.add_argument("--manifest")
    p.add_argument("--mode", choices=("fluorescence", "model"))
    p.add_argument("--method", choices=("otsu", "fixed"))
    p.add_argument("--tau", type=float)
    p.add_argument("--min-area", type=int, dest="min_area")
    p.add_argument("--conf", type=float)
    p.add_argument("--detector")
    p.add_argument("--split")

    p = add("mix", cmd_mix)
    p.add_argument("--pool")
    p.add_argument("--synthetic")
    p.add_argument("--train-n", type=int, dest="train_n")
    p.add_argument("--val-n", type=int, dest="val_n")
    p.add_argument("--test-n", type=int, dest="test_n")

    p = add("train-detector", cmd_train_detector)
    p.add_argument("--manifest")
    p.add_argument("--stride", type=int)
    p.add_argument("--channels")
    p.add_argument("--conf-thresh", type=float, dest="conf_thresh")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--augment")

    p = add("evaluate", cmd_evaluate, out_required=False)
    p.add_argument("--manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--split")
    p.add_argument("--name")
    p.add_argument("--conf-thresh", type=float, dest="conf_thresh")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")

    p = add("survey-serve", cmd_survey_serve, needs_out=False)
    p.add_argument("--synthetic")
    p.add_argument("--real")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--store")

    p = add("report", cmd_report, out_required=False)
    p.add_argument("--runs", help="directory holding <dataset>/metrics.csv")
    p.add_argument("--evaluation", action="append",
                   help="name=metrics.csv (repeatable)")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ini = _load_ini(args.config)
    try:
        return args.fn(args, ini)
    except (ConfigurationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

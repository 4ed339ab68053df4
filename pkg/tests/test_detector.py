import math

import numpy as np
import pytest

from cellsynth.boxes import BBox, iou
from cellsynth.detector import (AUGMENT_FLAGS, DetectorConfig, TrainedDetector,
                                blob_baseline, detect, detect_batch,
                                detection_loss, detector_forward,
                                encode_targets, init_detector, local_peaks,
                                nms, train_detector)
from cellsynth.errors import ConfigurationError, ShapeError
from cellsynth.manifest import DatasetManifest, relabel
from cellsynth.phantoms import PhantomConfig, generate_dataset

SMALL = DetectorConfig(stride=2, channels=(4, 8), epochs=2, batch_size=2)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DetectorConfig(stride=3)
    with pytest.raises(ConfigurationError):
        DetectorConfig(channels=())
    with pytest.raises(ConfigurationError):
        DetectorConfig(conf_thresh=1.5)
    with pytest.raises(ConfigurationError):
        DetectorConfig(patience=0)
    with pytest.raises(ConfigurationError):
        DetectorConfig(augment=("hflip", "wiggle"))
    cfg = DetectorConfig(stride=4, channels=(8, 16, 32))
    assert cfg.levels == 3
    assert cfg.min_side == 4 * 2 ** 2


def test_mixup_flag_is_rejected():
    with pytest.raises(ConfigurationError):
        DetectorConfig(augment=("hflip", "mixup"))
    assert "mixup" in AUGMENT_FLAGS  # named, reserved, unusable


def test_encode_targets_hand_values():
    box = BBox(6, 4, 8, 4)  # center (10, 6), min side 4
    heat, sizes = encode_targets([box], 16, 2)
    assert heat.shape == (8, 8) and sizes.shape == (2, 8, 8)
    ci, cj = 3, 5  # (6//2, 10//2)
    assert heat[ci, cj] == 1.0
    # sigma = max(1, 4/(3*2)) = 1: one cell away decays to exp(-1/2)
    assert heat[ci, cj + 1] == pytest.approx(math.exp(-0.5), rel=1e-6)
    assert heat[ci + 1, cj + 1] == pytest.approx(math.exp(-1.0), rel=1e-6)
    assert sizes[0, ci, cj] == pytest.approx(8 / 2)
    assert sizes[1, ci, cj] == pytest.approx(4 / 2)
    assert sizes[0, 0, 0] == 0.0


def test_encode_targets_takes_max_of_overlaps():
    a = BBox(0, 0, 8, 8)
    b = BBox(4, 0, 8, 8)
    heat, _ = encode_targets([a, b], 16, 2)
    ha, _ = encode_targets([a], 16, 2)
    hb, _ = encode_targets([b], 16, 2)
    assert np.allclose(heat, np.maximum(ha, hb))


def test_encode_targets_clips_outside_centers():
    heat, _ = encode_targets([BBox(14, 14, 8, 8)], 16, 2)  # center (18,18)
    assert heat[7, 7] == 1.0  # clamped to last cell


def test_local_peaks_strictness():
    flat = np.full((5, 5), 0.5)
    assert local_peaks(flat).sum() == 0
    single = np.zeros((5, 5))
    single[2, 3] = 1.0
    peaks = local_peaks(single)
    assert peaks[2, 3] and peaks.sum() == 1
    # two equal adjacent maxima: strict comparison kills both
    plateau = np.zeros((5, 5))
    plateau[2, 2] = plateau[2, 3] = 1.0
    assert local_peaks(plateau).sum() == 0
    # a corner can be a peak thanks to -inf padding
    corner = np.zeros((4, 4))
    corner[0, 0] = 2.0
    assert local_peaks(corner)[0, 0]


def test_nms_keeps_best_and_is_idempotent():
    boxes = [BBox(0, 0, 10, 10, score=0.6), BBox(1, 0, 10, 10, score=0.9),
             BBox(30, 30, 5, 5, score=0.2)]
    kept = nms(boxes, 0.5)
    assert [b.score for b in kept] == [0.9, 0.2]
    assert nms(kept, 0.5) == kept
    assert nms([], 0.5) == []


def test_all_zero_params_predict_nothing():
    cfg = SMALL
    params = {k: np.zeros_like(v) for k, v in init_detector(cfg, seed=0).items()}
    img = np.random.default_rng(0).uniform(0, 1, (16, 16))
    pred = detect(params, img, cfg)
    assert pred.boxes == ()


def test_forward_shapes_and_validation():
    cfg = SMALL
    params = init_detector(cfg, seed=1)
    imgs = np.random.default_rng(1).uniform(0, 1, (3, 16, 16)).astype(np.float32)
    heat, sizes = detector_forward(params, imgs, cfg)
    assert heat.data.shape == (3, 8, 8)
    assert sizes.data.shape == (3, 2, 8, 8)
    with pytest.raises(ShapeError):
        detector_forward(params, imgs[:, :8, :], cfg)  # not square
    with pytest.raises(ShapeError):
        detector_forward(params, np.zeros((2, 10, 10)), cfg)  # 10 % 4 != 0
    with pytest.raises(ShapeError):
        detect(params, imgs, cfg)  # detect wants one image


def test_detection_loss_decreases_with_training_signal():
    cfg = SMALL
    params = init_detector(cfg, seed=0)
    rng = np.random.default_rng(2)
    imgs = rng.uniform(0, 1, (2, 16, 16)).astype(np.float32)
    heat_t = np.stack([encode_targets([BBox(4, 4, 6, 6)], 16, 2)[0]] * 2)
    size_t = np.stack([encode_targets([BBox(4, 4, 6, 6)], 16, 2)[1]] * 2)
    loss = detection_loss(params, imgs, heat_t, size_t, cfg)
    assert np.isfinite(loss.item()) and loss.item() > 0


def _phantom_manifest(tmp_path, n_train=6, n_val=2, side=16):
    cfg = PhantomConfig(width=side, height=side, cell_count_range=(1, 2),
                        radius_range=(2.0, 2.8), eccentricity_range=(1.0, 1.2),
                        seed=0)
    man = generate_dataset(cfg, n_train + n_val, tmp_path)
    recs = [relabel(r, split="train") for r in man.records[:n_train]]
    recs += [relabel(r, split="val") for r in man.records[n_train:]]
    return DatasetManifest("toy", 0, recs)


def test_train_detector_is_deterministic(tmp_path):
    man = _phantom_manifest(tmp_path)
    cfg = DetectorConfig(stride=2, channels=(4, 8), epochs=2, batch_size=4,
                         patience=5)
    p1 = train_detector(man, cfg, seed=3, root=str(tmp_path))
    p2 = train_detector(man, cfg, seed=3, root=str(tmp_path))
    assert p1.keys() == p2.keys()
    for k in p1:
        assert np.array_equal(p1[k], p2[k])


def test_train_detector_epochs_zero_returns_init(tmp_path):
    man = _phantom_manifest(tmp_path)
    cfg = DetectorConfig(stride=2, channels=(4, 8), epochs=0, batch_size=4)
    params = train_detector(man, cfg, seed=1, root=str(tmp_path))
    init = init_detector(cfg, seed=1)
    assert all(np.array_equal(params[k], init[k]) for k in init)


def test_train_detector_rejects_empty_train(tmp_path):
    man = DatasetManifest("empty", 0, [])
    cfg = DetectorConfig(stride=2, channels=(4, 8), epochs=1)
    with pytest.raises(ConfigurationError):
        train_detector(man, cfg, root=str(tmp_path))


def test_trained_detector_predict_overrides(tmp_path):
    man = _phantom_manifest(tmp_path)
    cfg = DetectorConfig(stride=2, channels=(4, 8), epochs=1, batch_size=4)
    params = train_detector(man, cfg, seed=0, root=str(tmp_path))
    det = TrainedDetector(params, cfg)
    img = np.random.default_rng(0).uniform(0, 1, (16, 16))
    loose = det.predict(img, conf_thresh=0.0)
    tight = det.predict(img, conf_thresh=0.999)
    assert len(loose.boxes) >= len(tight.boxes)
    batch = detect_batch(params, img[None].astype(np.float32), cfg,
                         conf_thresh=0.0)
    assert batch[0].boxes == loose.boxes


def _disc_image(side=32, cx=16.3, cy=15.7, r=4.0, bg=0.4, fg=0.75):
    # center off the pixel lattice so the response has a unique maximum
    yy, xx = np.mgrid[0:side, 0:side]
    img = np.full((side, side), bg)
    img[(xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 <= r * r] = fg
    return img


def test_blob_baseline_finds_bright_disc():
    img = _disc_image()
    pred = blob_baseline(img, sigmas=(2.0, 2.9, 4.2), thresh=0.3)
    assert len(pred.boxes) == 1
    b = pred.boxes[0]
    assert abs(b.cx - 16.3) < 2.0 and abs(b.cy - 15.7) < 2.0
    truth = BBox(12.3, 11.7, 8, 8)
    assert iou(b, truth) > 0.3
    assert b.score is not None and 0.3 < b.score <= 1.0


def test_blob_baseline_empty_on_flat_and_bright_polarity():
    flat = np.full((32, 32), 0.5)
    assert blob_baseline(flat, sigmas=(2.0, 3.0), thresh=0.3).boxes == ()
    # dark blob: wrong polarity, so nothing should localize the disc itself
    dark = _disc_image(fg=0.1)
    truth = BBox(12.3, 11.7, 8, 8)
    pred = blob_baseline(dark, sigmas=(2.0, 2.9, 4.2), thresh=0.3)
    assert all(iou(b, truth) < 0.3 for b in pred.boxes)


def test_blob_baseline_sigma_validation():
    img = np.zeros((16, 16))
    with pytest.raises(ConfigurationError):
        blob_baseline(img, sigmas=(2.0,), thresh=0.3)
    with pytest.raises(ConfigurationError):
        blob_baseline(img, sigmas=(3.0, 2.0), thresh=0.3)

import numpy as np
import pytest

from cellsynth.checkpoints import (MAGIC, config_hash, load_checkpoint,
                                   save_checkpoint, split_prefixed)


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "a.w": rng.normal(size=(3, 4)).astype(np.float32),
        "a.b": rng.normal(size=(4,)).astype(np.float32),
        "scalar": np.float32(2.5).reshape(()),
    }
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, tensors, epoch=7, cfg_hash="abc123", fid=1.25)
    back, meta = load_checkpoint(path)
    assert set(back) == set(tensors)
    for k in tensors:
        assert np.array_equal(back[k], np.asarray(tensors[k], dtype=np.float32))
        assert back[k].shape == np.asarray(tensors[k]).shape
    assert meta["epoch"] == 7
    assert meta["config_hash"] == "abc123"
    assert meta["fid"] == 1.25


def test_fid_none_round_trips(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"w": np.zeros(2, dtype=np.float32)}, 0, "h")
    _, meta = load_checkpoint(path)
    assert meta["fid"] is None


def test_identical_weights_identical_bytes(tmp_path):
    tensors = {"b": np.ones((2, 2), dtype=np.float32),
               "a": np.zeros(3, dtype=np.float32)}
    p1, p2 = tmp_path / "1.ckpt", tmp_path / "2.ckpt"
    save_checkpoint(p1, tensors, 3, "h", fid=0.5)
    save_checkpoint(p2, dict(reversed(tensors.items())), 3, "h", fid=0.5)
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_enforced(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTCKPT0\n" + b"x" * 20)
    with pytest.raises(ValueError):
        load_checkpoint(bad)
    assert MAGIC.endswith(b"\n")


def test_config_hash_properties():
    h1 = config_hash({"a": 1, "b": "x"})
    h2 = config_hash({"b": "x", "a": 1})
    assert h1 == h2 and len(h1) == 12
    assert config_hash({"a": 2, "b": "x"}) != h1
    # dataclasses hash by field values
    from cellsynth.unet import UNetConfig
    assert config_hash(UNetConfig()) == config_hash(UNetConfig())
    assert config_hash(UNetConfig()) != config_hash(
        UNetConfig(block_channels=(8, 16)))


def test_split_prefixed():
    tensors = {"ema.w": np.zeros(1), "ema.b": np.ones(1), "raw.w": np.ones(1),
               "emanate": np.ones(1)}
    ema = split_prefixed(tensors, "ema")
    assert set(ema) == {"w", "b"}
    raw = split_prefixed(tensors, "raw")
    assert set(raw) == {"w"}
    assert split_prefixed(tensors, "nope") == {}

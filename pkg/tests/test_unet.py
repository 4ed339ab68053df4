import numpy as np
import pytest

from cellsynth.errors import ConfigurationError, ShapeError
from cellsynth.unet import (UNetConfig, UNetDenoiser, sinusoidal_embedding,
                            unet_forward, unet_init)

CFG = UNetConfig(block_channels=(4, 8), time_embed_dim=8)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        UNetConfig(block_channels=())
    with pytest.raises(ConfigurationError):
        UNetConfig(time_embed_dim=7)
    with pytest.raises(ConfigurationError):
        UNetConfig(attention=True)
    assert UNetConfig().levels == 3


def test_sinusoidal_embedding_structure():
    emb = sinusoidal_embedding(np.array([0, 5]), 8)
    assert emb.shape == (2, 8)
    # t=0: all sines are 0, all cosines are 1
    assert np.allclose(emb[0, :4], 0.0)
    assert np.allclose(emb[0, 4:], 1.0)
    # first frequency is 1.0: sin(5), cos(5)
    assert emb[1, 0] == pytest.approx(np.sin(5.0), abs=1e-6)
    assert emb[1, 4] == pytest.approx(np.cos(5.0), abs=1e-6)
    # distinct timesteps embed distinctly
    assert not np.allclose(emb[0], emb[1])


def test_init_is_deterministic_and_float32():
    p1 = unet_init(CFG, seed=3)
    p2 = unet_init(CFG, seed=3)
    assert p1.keys() == p2.keys()
    for k in p1:
        assert p1[k].dtype == np.float32
        assert np.array_equal(p1[k], p2[k])
    p3 = unet_init(CFG, seed=4)
    assert any(not np.array_equal(p1[k], p3[k]) for k in p1)


def test_zero_init_head_outputs_zero():
    params = unet_init(CFG, seed=0)
    x = np.random.default_rng(0).normal(size=(2, 8, 8)).astype(np.float32)
    out = unet_forward(params, x, 100, CFG).numpy()
    assert out.shape == (2, 8, 8)
    assert np.allclose(out, 0.0)


def test_forward_shape_and_batch_consistency():
    params = unet_init(CFG, seed=0)
    # noise the head weights so outputs are nonzero
    rng = np.random.default_rng(1)
    params["head.w"] = (params["head.w"] +
                        rng.normal(0, 0.1, params["head.w"].shape)).astype(np.float32)
    x = rng.normal(size=(3, 8, 8)).astype(np.float32)
    out = unet_forward(params, x, 7, CFG).numpy()
    assert out.shape == (3, 8, 8)
    assert not np.allclose(out, 0.0)
    # per-sample forward equals the batched rows
    one = unet_forward(params, x[1:2], 7, CFG).numpy()
    assert np.allclose(one[0], out[1], atol=1e-5)


def test_per_sample_timesteps():
    params = unet_init(CFG, seed=0)
    rng = np.random.default_rng(2)
    params["head.w"] = rng.normal(0, 0.1, params["head.w"].shape).astype(np.float32)
    x = rng.normal(size=(2, 8, 8)).astype(np.float32)
    both = unet_forward(params, x, np.array([3, 900]), CFG).numpy()
    a = unet_forward(params, x[:1], 3, CFG).numpy()
    b = unet_forward(params, x[1:], 900, CFG).numpy()
    assert np.allclose(both[0], a[0], atol=1e-5)
    assert np.allclose(both[1], b[0], atol=1e-5)
    assert not np.allclose(both[0], both[1])


def test_forward_input_validation():
    params = unet_init(CFG, seed=0)
    with pytest.raises(ShapeError):
        unet_forward(params, np.zeros((2, 8, 6)), 0, CFG)  # not square
    with pytest.raises(ShapeError):
        unet_forward(params, np.zeros((2, 7, 7)), 0, CFG)  # side not divisible
    with pytest.raises(ShapeError):
        unet_forward(params, np.zeros((2, 3, 8, 8)), 0, CFG)  # channel count


def test_denoiser_wrapper_matches_forward():
    params = unet_init(CFG, seed=0)
    den = UNetDenoiser(params, CFG)
    x = np.random.default_rng(3).normal(size=(1, 8, 8)).astype(np.float32)
    assert np.array_equal(den.predict_epsilon(x, 10),
                          unet_forward(params, x, 10, CFG).numpy())

import numpy as np
import pytest

from cellsynth.errors import ShapeError, SizeError
from cellsynth.fid import (FEATURE_DIM, FeatureStats, compute_fid, features,
                           frechet_distance, gaussian_stats)


def stats1d(mu, var):
    return FeatureStats(mu=np.array([float(mu)]),
                        sigma=np.array([[float(var)]]), n=100)


def test_identical_stats_give_zero():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(50, 5))
    cov = np.cov(a, rowvar=False)
    st = FeatureStats(mu=a.mean(axis=0), sigma=cov, n=50)
    assert abs(frechet_distance(st, st)) <= 1e-6


def test_one_dimensional_closed_forms():
    # distance = (mu1-mu2)^2 + (sqrt(v1)-sqrt(v2))^2 in one dimension
    assert frechet_distance(stats1d(0, 1), stats1d(1, 1)) == pytest.approx(1.0, abs=1e-6)
    assert frechet_distance(stats1d(0, 1), stats1d(0, 4)) == pytest.approx(1.0, abs=1e-6)
    assert frechet_distance(stats1d(2, 9), stats1d(-1, 1)) == pytest.approx(
        9.0 + 4.0, abs=1e-6)


def test_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(5):
        m = rng.normal(size=(8, 4))
        c1 = m.T @ m / 8 + 0.1 * np.eye(4)
        m2 = rng.normal(size=(8, 4))
        c2 = m2.T @ m2 / 8 + 0.1 * np.eye(4)
        a = FeatureStats(rng.normal(size=4), c1, 8)
        b = FeatureStats(rng.normal(size=4), c2, 8)
        assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a),
                                                       abs=1e-6)
        assert frechet_distance(a, b) >= 0.0


def test_feature_vector_contract():
    img = np.random.default_rng(2).uniform(0, 1, (32, 32))
    f = features(img)
    assert f.shape == (FEATURE_DIM,)
    assert np.all(np.isfinite(f))
    assert np.array_equal(f, features(img))  # deterministic
    # mean/std slots carry the image moments
    assert f[64] == pytest.approx(img.mean())
    assert f[65] == pytest.approx(img.std())
    with pytest.raises(ShapeError):
        features(np.zeros((2, 2, 2)))


def test_features_separate_flat_from_textured():
    flat = np.full((16, 16), 0.5)
    noisy = np.random.default_rng(3).uniform(0, 1, (16, 16))
    d = np.abs(features(flat) - features(noisy))
    assert d.max() > 0.1


def test_gaussian_stats_and_compute_fid():
    rng = np.random.default_rng(4)
    bright = [rng.uniform(0.7, 1.0, (16, 16)) for _ in range(12)]
    dark = [rng.uniform(0.0, 0.3, (16, 16)) for _ in range(12)]
    st = gaussian_stats(bright)
    assert st.mu.shape == (FEATURE_DIM,)
    assert st.sigma.shape == (FEATURE_DIM, FEATURE_DIM)
    assert st.n == 12
    same = compute_fid(bright, bright)
    cross = compute_fid(bright, dark)
    assert same == pytest.approx(0.0, abs=1e-6)
    assert cross > same + 0.1
    with pytest.raises(SizeError):
        gaussian_stats([bright[0]])

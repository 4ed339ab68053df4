import numpy as np
import pytest

from cellsynth.images import clamp01, from_u8, read_pgm, to_u8, write_pgm


def test_round_trip_quantization(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, size=(17, 23))
    path = tmp_path / "t.pgm"
    write_pgm(path, img)
    back = read_pgm(path)
    assert back.shape == img.shape
    assert back.dtype == np.float64 or back.dtype == np.float32
    # one 8-bit quantization step of error at most
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-9


def test_u8_round_trip_is_exact_on_grid():
    grid = np.arange(256, dtype=np.uint8).reshape(16, 16)
    assert np.array_equal(to_u8(from_u8(grid)), grid)


def test_header_layout(tmp_path):
    img = np.array([[0.0, 1.0], [0.5, 0.25]])
    path = tmp_path / "h.pgm"
    write_pgm(path, img)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert raw.endswith(bytes([0, 255, 128, 64]))  # row-major, round-half-up


def test_read_rejects_non_pgm(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(ValueError):
        read_pgm(bad)
    trunc = tmp_path / "t.pgm"
    trunc.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(ValueError):
        read_pgm(trunc)


def test_comments_and_whitespace_in_header(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5 # comment\n# another\n 2\n2 \n255\n" + bytes([0, 64, 128, 255]))
    img = read_pgm(p)
    assert img.shape == (2, 2)
    assert img[0, 0] == 0.0 and img[1, 1] == 1.0


def test_clamp01():
    x = np.array([-0.5, 0.0, 0.4, 1.0, 2.0])
    assert np.array_equal(clamp01(x), np.array([0.0, 0.0, 0.4, 1.0, 1.0]))


def test_write_rejects_bad_shape(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 3)))

"""Grayscale image helpers and binary PGM (P5) input/output.

Images are numpy float arrays of shape (H, W) with values in [0, 1].
On disk they are 8-bit binary portable graymaps with maxval 255.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["clamp01", "to_u8", "from_u8", "write_pgm", "read_pgm"]


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def to_u8(img: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] float image to uint8 (round-half-away via +0.5 floor)."""
    return np.floor(clamp01(img) * 255.0 + 0.5).astype(np.uint8)


def from_u8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write a [0,1] float image as a binary P5 graymap with maxval 255."""
    arr = to_u8(np.asarray(img))
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def _read_token(fh) -> bytes:
    # Tokens are separated by whitespace; '#' starts a comment to end of line.
    tok = b""
    while True:
        c = fh.read(1)
        if not c:
            break
        if c == b"#":
            while c and c != b"\n":
                c = fh.read(1)
            continue
        if c.isspace():
            if tok:
                break
            continue
        tok += c
    if not tok:
        raise ValueError("truncated PGM header")
    return tok


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary P5 graymap into a [0,1] float image."""
    with open(path, "rb") as fh:
        magic = _read_token(fh)
        if magic != b"P5":
            raise ValueError(f"not a binary PGM (magic {magic!r}): {path}")
        w = int(_read_token(fh))
        h = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if not (0 < maxval < 256):
            raise ValueError(f"unsupported PGM maxval {maxval}: {path}")
        data = fh.read(w * h)
        if len(data) != w * h:
            raise ValueError(f"truncated PGM pixel data: {path}")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
    return raw.astype(np.float64) / float(maxval)

"""Versioned binary checkpoint files with named tensors.

Layout: a magic line, text metadata header (key=value lines ended by a
blank line), then per tensor one text line "name dim0 dim1 ..." followed
by the raw little-endian float32 data.  Tensor names are written in
sorted order so identical weights produce identical bytes.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

MAGIC = b"CSCKPT01\n"


def config_hash(obj) -> str:
    """Stable short hash of a configuration object's public fields."""
    if hasattr(obj, "__dataclass_fields__"):
        items = sorted((k, getattr(obj, k)) for k in obj.__dataclass_fields__)
    elif isinstance(obj, dict):
        items = sorted(obj.items())
    else:
        items = [("value", obj)]
    text = ";".join(f"{k}={v!r}" for k, v in items)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def save_checkpoint(path, tensors: dict, epoch: int, cfg_hash: str,
                    fid: float | None = None) -> None:
    path = Path(path)
    chunks = [MAGIC]
    chunks.append(f"epoch={int(epoch)}\n".encode())
    chunks.append(f"config_hash={cfg_hash}\n".encode())
    chunks.append(f"fid={'nan' if fid is None else repr(float(fid))}\n".encode())
    chunks.append(f"tensors={len(tensors)}\n".encode())
    chunks.append(b"\n")
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f4", order="C")
        dims = " ".join(str(d) for d in arr.shape)
        chunks.append(f"{name} {dims}".rstrip().encode() + b"\n")
        chunks.append(arr.tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (tensors, metadata); metadata values are strings except fid/epoch."""
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    meta: dict = {}
    while True:
        end = blob.index(b"\n", pos)
        line = blob[pos:end].decode()
        pos = end + 1
        if not line:
            break
        key, _, value = line.partition("=")
        meta[key] = value
    meta["epoch"] = int(meta.get("epoch", 0))
    fid_text = meta.get("fid", "nan")
    meta["fid"] = None if fid_text == "nan" else float(fid_text)
    count = int(meta.pop("tensors"))

    tensors: dict = {}
    for _ in range(count):
        end = blob.index(b"\n", pos)
        head = blob[pos:end].decode().split()
        pos = end + 1
        name, shape = head[0], tuple(int(d) for d in head[1:])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 4
        flat = np.frombuffer(blob[pos:pos + nbytes], dtype="<f4")
        pos += nbytes
        tensors[name] = flat.reshape(shape).copy()
    return tensors, meta


def split_prefixed(tensors: dict, prefix: str) -> dict:
    """Extract tensors under "prefix." with the prefix stripped."""
    dot = prefix + "."
    return {k[len(dot):]: v for k, v in tensors.items() if k.startswith(dot)}

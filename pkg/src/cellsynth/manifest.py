"""Line-delimited dataset manifests.

One record per line, tab-separated:

    <image_ref> <source> <split> <box> <box> ...

where each box is ``x,y,w,h`` or ``x,y,w,h,score`` with shortest-repr
floats. Header lines start with ``#`` and carry name/seed and a counts
summary. The record serialization is canonical so identical datasets
are byte-identical on disk; image refs are stored relative to the
manifest's directory.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field, replace

from .boxes import BBox

__all__ = ["ManifestRecord", "DatasetManifest", "format_box", "parse_box"]

SOURCES = ("real", "synthetic")
SPLITS = ("train", "val", "test", "pool")


def format_box(b: BBox) -> str:
    parts = [repr(float(b.x)), repr(float(b.y)), repr(float(b.w)), repr(float(b.h))]
    if b.score is not None:
        parts.append(repr(float(b.score)))
    return ",".join(parts)


def parse_box(text: str) -> BBox:
    vals = [float(v) for v in text.split(",")]
    if len(vals) == 4:
        return BBox(*vals)
    if len(vals) == 5:
        return BBox(vals[0], vals[1], vals[2], vals[3], vals[4])
    raise ValueError(f"malformed box tuple: {text!r}")


@dataclass(frozen=True)
class ManifestRecord:
    image_ref: str
    boxes: tuple[BBox, ...]
    source: str
    split: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split tag {self.split!r}")

    def to_line(self) -> str:
        cols = [self.image_ref, self.source, self.split]
        cols.extend(format_box(b) for b in self.boxes)
        return "\t".join(cols)

    @classmethod
    def from_line(cls, line: str) -> "ManifestRecord":
        cols = line.rstrip("\n").split("\t")
        if len(cols) < 3:
            raise ValueError(f"malformed manifest line: {line!r}")
        boxes = tuple(parse_box(c) for c in cols[3:] if c)
        return cls(cols[0], boxes, cols[1], cols[2])


@dataclass
class DatasetManifest:
    name: str
    seed: int
    records: list[ManifestRecord] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        c: Counter = Counter()
        for r in self.records:
            c[r.split] += 1
            c[r.source] += 1
        return {k: c.get(k, 0) for k in SPLITS + SOURCES}

    def for_split(self, split: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == split]

    def for_source(self, source: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.source == source]

    def validate(self) -> None:
        """Check manifest invariants: val/test are real-only, refs unique per split set."""
        for r in self.records:
            if r.split in ("val", "test") and r.source != "real":
                raise ValueError(f"{r.image_ref}: split {r.split} must be real-only")
        by_split: dict[str, set[str]] = {}
        for r in self.records:
            by_split.setdefault(r.split, set()).add(r.image_ref)
        for a in ("train", "val", "test"):
            for b in ("train", "val", "test"):
                if a < b and by_split.get(a, set()) & by_split.get(b, set()):
                    raise ValueError(f"splits {a} and {b} share image refs")

    def to_text(self) -> str:
        counts = self.counts()
        lines = [
            "# cellsynth-manifest v1",
            f"# name={self.name}",
            f"# seed={self.seed}",
            "# counts " + " ".join(f"{k}={counts[k]}" for k in SPLITS + SOURCES),
        ]
        lines.extend(r.to_line() for r in self.records)
        return "\n".join(lines) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str, name: str = "", seed: int = 0) -> "DatasetManifest":
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                stripped = line[1:].strip()
                if stripped.startswith("name="):
                    name = stripped[5:]
                elif stripped.startswith("seed="):
                    seed = int(stripped[5:])
                continue
            records.append(ManifestRecord.from_line(line))
        return cls(name=name, seed=seed, records=records)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def resolve(self, manifest_path: str | os.PathLike, ref: str) -> str:
        """Absolute path of an image ref relative to the manifest location."""
        return os.path.normpath(os.path.join(os.path.dirname(os.fspath(manifest_path)), ref))

    def with_records(self, records: list[ManifestRecord], name: str | None = None,
                     seed: int | None = None) -> "DatasetManifest":
        return DatasetManifest(
            name=self.name if name is None else name,
            seed=self.seed if seed is None else seed,
            records=list(records),
        )


def relabel(record: ManifestRecord, **kwargs) -> ManifestRecord:
    return replace(record, **kwargs)

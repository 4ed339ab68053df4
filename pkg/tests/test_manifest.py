import pytest

from cellsynth.boxes import BBox
from cellsynth.manifest import (DatasetManifest, ManifestRecord, format_box,
                                parse_box, relabel)


def rec(ref, split="train", source="real", boxes=()):
    return ManifestRecord(ref, tuple(boxes), source, split)


def test_box_text_round_trip():
    b = BBox(1.5, 2.0, 3.25, 4.0)
    back = parse_box(format_box(b))
    assert (back.x, back.y, back.w, back.h) == (1.5, 2.0, 3.25, 4.0)


def test_manifest_text_round_trip(tmp_path):
    records = [
        rec("images/a.pgm", boxes=[BBox(1, 2, 3, 4), BBox(5, 6, 7, 8)]),
        rec("images/b.pgm", split="val"),
        rec("images/c.pgm", split="test"),
        rec("images/d.pgm", split="train", source="synthetic"),
    ]
    man = DatasetManifest("demo", 7, records)
    path = tmp_path / "manifest.txt"
    man.save(path)
    back = DatasetManifest.load(path)
    assert back.name == "demo" and back.seed == 7
    assert [r.image_ref for r in back.records] == [r.image_ref for r in records]
    assert back.records[0].boxes == records[0].boxes
    assert back.to_text() == man.to_text()


def test_validate_rejects_synthetic_eval_records():
    bad = DatasetManifest("x", 0, [rec("a.pgm", split="val", source="synthetic")])
    with pytest.raises(ValueError):
        bad.validate()
    bad2 = DatasetManifest("x", 0, [rec("a.pgm", split="test", source="synthetic")])
    with pytest.raises(ValueError):
        bad2.validate()


def test_validate_rejects_cross_split_duplicates():
    bad = DatasetManifest("x", 0, [rec("a.pgm", split="train"),
                                   rec("a.pgm", split="val")])
    with pytest.raises(ValueError):
        bad.validate()
    ok = DatasetManifest("x", 0, [rec("a.pgm"), rec("b.pgm", split="val")])
    ok.validate()


def test_record_field_validation():
    with pytest.raises(ValueError):
        rec("a.pgm", split="nope")
    with pytest.raises(ValueError):
        rec("a.pgm", source="martian")


def test_counts_and_filters():
    man = DatasetManifest("x", 0, [rec("a.pgm"), rec("b.pgm", split="val"),
                                   rec("c.pgm", source="synthetic")])
    assert man.counts()["train"] == 2
    assert [r.image_ref for r in man.for_split("val")] == ["b.pgm"]
    assert [r.image_ref for r in man.for_source("synthetic")] == ["c.pgm"]


def test_relabel_replaces_fields_only():
    r = rec("a.pgm", boxes=[BBox(0, 0, 1, 1)])
    r2 = relabel(r, split="val")
    assert r2.split == "val" and r2.boxes == r.boxes and r.split == "train"


def test_resolve_is_relative_to_manifest(tmp_path):
    import os

    sub = tmp_path / "runs"
    sub.mkdir()
    man = DatasetManifest("x", 0, [rec("images/a.pgm")])
    direct = man.resolve(sub / "manifest.txt", "images/a.pgm")
    assert os.path.normpath(direct) == os.path.normpath(
        os.path.join(str(sub), "images", "a.pgm"))

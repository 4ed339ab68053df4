import pytest

from cellsynth.boxes import BBox
from cellsynth.dataset_mix import (SCC_NAMES, MixSpec, make_addition,
                                   make_replacement, split, standard_mixes)
from cellsynth.errors import ConfigurationError, SizeError
from cellsynth.manifest import DatasetManifest, ManifestRecord


def _pool(n, prefix="real", source="real"):
    recs = [ManifestRecord(f"{prefix}_{i:03d}.pgm", (BBox(1, 1, 4, 4),),
                           source, "pool") for i in range(n)]
    return DatasetManifest(prefix, 0, recs)


def test_split_sizes_and_disjointness():
    base = split(_pool(20), 10, 4, 3, seed=5)
    counts = base.counts()
    assert (counts["train"], counts["val"], counts["test"]) == (10, 4, 3)
    assert len(base.records) == 17  # surplus pool records are dropped
    refs = [r.image_ref for r in base.records]
    assert len(set(refs)) == 17
    assert all(r.source == "real" for r in base.records)
    base.validate()


def test_split_validation():
    with pytest.raises(SizeError):
        split(_pool(5), 4, 1, 1)
    with pytest.raises(ConfigurationError):
        split(_pool(5), -1, 1, 1)


def test_split_seed_behavior():
    a = split(_pool(20), 10, 4, 3, seed=7)
    b = split(_pool(20), 10, 4, 3, seed=7)
    assert a.records == b.records
    c = split(_pool(20), 10, 4, 3, seed=8)
    assert a.records != c.records


def test_replacement_arithmetic_and_order():
    base = split(_pool(16), 10, 3, 3, seed=0)
    synth = _pool(8, prefix="synth", source="synthetic")
    mixed = make_replacement(base, synth, MixSpec("replace", 0.30, seed=1))

    train = mixed.for_split("train")
    assert len(train) == 10  # cardinality preserved
    real_train = [r for r in train if r.source == "real"]
    synth_train = [r for r in train if r.source == "synthetic"]
    assert (len(real_train), len(synth_train)) == (7, 3)

    # surviving real records keep their base order; synthetic appended
    base_refs = [r.image_ref for r in base.for_split("train")]
    kept = [r.image_ref for r in real_train]
    assert kept == [ref for ref in base_refs if ref in set(kept)]
    assert all(r.image_ref.startswith("synth") for r in synth_train)

    assert mixed.for_split("val") == base.for_split("val")
    assert mixed.for_split("test") == base.for_split("test")
    assert mixed.name == "scc_30"


def test_addition_appends_without_removal():
    base = split(_pool(16), 10, 3, 3, seed=0)
    synth = _pool(8, prefix="synth", source="synthetic")
    mixed = make_addition(base, synth, MixSpec("add", 0.30, seed=1))
    assert mixed.records[:len(base.records)] == base.records
    extra = mixed.records[len(base.records):]
    assert len(extra) == 3
    assert all(r.source == "synthetic" and r.split == "train" for r in extra)
    assert len(mixed.for_split("train")) == 13
    assert mixed.name == "scc_add_30"


def test_mode_mismatch_and_small_pool():
    base = split(_pool(16), 10, 3, 3, seed=0)
    synth = _pool(2, prefix="synth", source="synthetic")
    with pytest.raises(ConfigurationError):
        make_replacement(base, synth, MixSpec("add", 0.30))
    with pytest.raises(ConfigurationError):
        make_addition(base, synth, MixSpec("replace", 0.30))
    with pytest.raises(SizeError):
        make_replacement(base, synth, MixSpec("replace", 0.30))  # needs 3, has 2


def test_mixspec_validation_and_tag():
    with pytest.raises(ConfigurationError):
        MixSpec("blend", 0.3)
    with pytest.raises(ConfigurationError):
        MixSpec("replace", 0.0)
    with pytest.raises(ConfigurationError):
        MixSpec("add", 1.0)
    assert MixSpec("replace", 0.10).percent_tag == "10"
    assert MixSpec("add", 0.50).percent_tag == "50"


def test_standard_mixes_family():
    base = split(_pool(30), 12, 4, 5, seed=0)
    synth = _pool(10, prefix="synth", source="synthetic")
    mixes = standard_mixes(base, synth, seed=3)
    assert tuple(mixes) == SCC_NAMES
    assert mixes["scc_real"] is base

    val_lines = {"\n".join(r.to_line() for r in m.for_split("val"))
                 for m in mixes.values()}
    test_lines = {"\n".join(r.to_line() for r in m.for_split("test"))
                  for m in mixes.values()}
    assert len(val_lines) == 1 and len(test_lines) == 1  # byte-identical held-out

    # replacement keeps train size; addition grows it by round(frac * n)
    assert all(len(mixes[f"scc_{p}"].for_split("train")) == 12 for p in (10, 30, 50))
    for p, extra in ((10, 1), (30, 4), (50, 6)):
        assert len(mixes[f"scc_add_{p}"].for_split("train")) == 12 + extra
    for m in mixes.values():
        m.validate()

    again = standard_mixes(base, synth, seed=3)
    assert all(again[k].records == mixes[k].records for k in SCC_NAMES)

"""Builders for the seven dataset variants used in the mixing experiments.

Starting from one real image pool, `split` fixes train/val/test once;
`make_replacement` swaps a fraction of real training records for
synthetic ones (train size unchanged) and `make_addition` appends
synthetic records on top of the full real training set.  Validation and
test records are never touched, so every variant is evaluated against
byte-identical held-out splits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SizeError
from .manifest import DatasetManifest, ManifestRecord, relabel
from .phantoms import derive_seed

# Canonical variant names: the real baseline, replacement mixes, and
# addition mixes at 10/30/50 percent.
SCC_NAMES = ("scc_real", "scc_10", "scc_30", "scc_50",
             "scc_add_10", "scc_add_30", "scc_add_50")

STANDARD_FRACTIONS = (0.10, 0.30, 0.50)


@dataclass(frozen=True)
class MixSpec:
    """How to derive one mixed dataset: replace or add, and how much."""

    mode: str
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("replace", "add"):
            raise ConfigurationError(f"mode must be 'replace' or 'add', got {self.mode!r}")
        if not 0.0 < self.fraction < 1.0:
            raise ConfigurationError("fraction must lie strictly inside (0, 1)")

    @property
    def percent_tag(self) -> str:
        return str(int(round(self.fraction * 100)))


def split(real_manifest: DatasetManifest, train_n: int, val_n: int, test_n: int,
          seed: int = 0) -> DatasetManifest:
    """Deterministically assign pool records to train/val/test.

    Records are shuffled with the seed and dealt out in order; records
    beyond train_n+val_n+test_n are dropped.  Desk-scale default shape
    is 500/200/300.
    """
    for name, n in (("train_n", train_n), ("val_n", val_n), ("test_n", test_n)):
        if n < 0:
            raise ConfigurationError(f"{name} must be >= 0")
    records = list(real_manifest.records)
    need = train_n + val_n + test_n
    if need > len(records):
        raise SizeError(f"need {need} records, pool has {len(records)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    out = []
    for pos, idx in enumerate(order[:need]):
        split_tag = ("train" if pos < train_n
                     else "val" if pos < train_n + val_n else "test")
        out.append(relabel(records[int(idx)], split=split_tag, source="real"))
    result = DatasetManifest("scc_real", seed, out)
    result.validate()
    return result


def _pick_synthetic(pool, count: int, rng) -> list[ManifestRecord]:
    records = list(pool.records) if isinstance(pool, DatasetManifest) else list(pool)
    if count > len(records):
        raise SizeError(f"need {count} synthetic records, pool has {len(records)}")
    chosen = rng.choice(len(records), size=count, replace=False)
    return [relabel(records[int(i)], split="train", source="synthetic")
            for i in sorted(chosen)]


def make_replacement(base: DatasetManifest, synth_pool, spec: MixSpec) -> DatasetManifest:
    """Replace round(fraction * train_n) real train records with synthetic.

    The removed records are chosen uniformly without replacement; train
    cardinality is preserved and val/test records pass through in their
    original order.
    """
    if spec.mode != "replace":
        raise ConfigurationError(f"replacement build got mode {spec.mode!r}")
    train = base.for_split("train")
    n_swap = int(round(spec.fraction * len(train)))
    rng = np.random.default_rng(spec.seed)
    drop = set(int(i) for i in rng.choice(len(train), size=n_swap, replace=False))
    synthetic = _pick_synthetic(synth_pool, n_swap, rng)

    out, seen_train = [], 0
    for rec in base.records:
        if rec.split == "train":
            if seen_train not in drop:
                out.append(rec)
            seen_train += 1
        else:
            out.append(rec)
    out.extend(synthetic)
    result = DatasetManifest(f"scc_{spec.percent_tag}", spec.seed, out)
    result.validate()
    return result


def make_addition(base: DatasetManifest, synth_pool, spec: MixSpec) -> DatasetManifest:
    """Append round(fraction * train_n) synthetic records to the train set.

    Every real record of the base manifest is retained unchanged, so the
    result's train size is train_n * (1 + fraction) up to rounding.
    """
    if spec.mode != "add":
        raise ConfigurationError(f"addition build got mode {spec.mode!r}")
    train = base.for_split("train")
    n_add = int(round(spec.fraction * len(train)))
    rng = np.random.default_rng(spec.seed)
    synthetic = _pick_synthetic(synth_pool, n_add, rng)
    out = list(base.records) + synthetic
    result = DatasetManifest(f"scc_add_{spec.percent_tag}", spec.seed, out)
    result.validate()
    return result


def standard_mixes(base: DatasetManifest, synth_pool, seed: int = 0) -> dict:
    """Build all seven canonical variants, keyed by SCC_NAMES.

    Each mix draws its own selection seed from the master seed, so the
    whole family is reproducible from one integer.
    """
    out = {"scc_real": base}
    for k, frac in enumerate(STANDARD_FRACTIONS):
        spec = MixSpec("replace", frac, derive_seed(seed, k))
        out[f"scc_{spec.percent_tag}"] = make_replacement(base, synth_pool, spec)
    for k, frac in enumerate(STANDARD_FRACTIONS):
        spec = MixSpec("add", frac, derive_seed(seed, 100 + k))
        out[f"scc_add_{spec.percent_tag}"] = make_addition(base, synth_pool, spec)
    return out

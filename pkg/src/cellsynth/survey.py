"""Realism survey: sessions, response log, and accuracy analytics.

A session shows a participant 30 shuffled images (20 synthetic, 10 real)
without revealing the ratio.  Responses carry a real/synthetic guess, a
1-5 confidence, and a textual explanation that is mandatory exactly when
the guess is "synthetic".  The report aggregates overall and per-class
accuracy, a row-normalized confusion matrix, and a term-frequency
summary of the explanations.

Ground truth lives only in SurveySession objects server-side; the
client-facing view carries image ids alone.
"""

from __future__ import annotations

import json
import string
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import SizeError

SYNTHETIC_PER_SESSION = 20
REAL_PER_SESSION = 10

GUESSES = ("real", "synthetic")

# Fixed stopword list for explanation mining: English function words plus
# filler verbs common in free-text image judgments.  Domain vocabulary
# (cell, background, edge, halo, contrast, ...) is deliberately absent.
STOPWORDS = frozenset("""
a about after again all also am an and any are as at be because been being
both but by can could did do does doing down each few for from further had
has have having he her here hers him his how i if in into is it its itself
just like look looked looking looks may me might more most must my no nor
not now of off on once only or other our out over own quite really same
seem seemed seems she should so some such than that the their theirs them
then there these they this those through to too under until up very was we
were what when where which while who whom why will with would you your
image images picture pictures bit slightly somewhat thing things
""".split())


@dataclass(frozen=True)
class SurveySession:
    """An ordered 30-image presentation with hidden per-image truth."""

    session_id: str
    entries: tuple  # ((image_id, truth), ...) in presentation order
    seed: int

    def __post_init__(self):
        truths = [t for _, t in self.entries]
        if (truths.count("synthetic") != SYNTHETIC_PER_SESSION
                or truths.count("real") != REAL_PER_SESSION):
            raise SizeError("session must hold exactly 20 synthetic and 10 real images")

    @property
    def image_ids(self) -> tuple:
        return tuple(i for i, _ in self.entries)

    def truth_of(self, image_id: str) -> str | None:
        for i, t in self.entries:
            if i == image_id:
                return t
        return None

    def client_view(self) -> dict:
        """Serializable participant-facing form; carries no truth."""
        return {"session_id": self.session_id, "image_ids": list(self.image_ids)}


class ResponseRejected(ValueError):
    """Validation failure; `errors` maps field name to message."""

    def __init__(self, errors: dict):
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(errors.items())))
        self.errors = dict(errors)


@dataclass(frozen=True)
class SurveyResponse:
    participant_id: str
    image_id: str
    guess: str
    confidence: int
    explanation: str = ""
    timestamp: float = 0.0


def validate_response(resp: SurveyResponse, session: SurveySession | None = None) -> dict:
    """Field-level validation; returns {field: message} (empty when valid)."""
    errors: dict = {}
    if not isinstance(resp.participant_id, str) or not resp.participant_id.strip():
        errors["participant_id"] = "must be a nonempty string"
    if not isinstance(resp.image_id, str) or not resp.image_id.strip():
        errors["image_id"] = "must be a nonempty string"
    elif session is not None and session.truth_of(resp.image_id) is None:
        errors["image_id"] = "not part of this session"
    if resp.guess not in GUESSES:
        errors["guess"] = "must be 'real' or 'synthetic'"
    if isinstance(resp.confidence, bool) or not isinstance(resp.confidence, int):
        errors["confidence"] = "must be an integer"
    elif not 1 <= resp.confidence <= 5:
        errors["confidence"] = "must lie in [1, 5]"
    if not isinstance(resp.explanation, str):
        errors["explanation"] = "must be a string"
    elif resp.guess == "synthetic" and not resp.explanation.strip():
        errors["explanation"] = "required when the guess is 'synthetic'"
    ts = resp.timestamp
    if not isinstance(ts, (int, float)) or isinstance(ts, bool) or not np.isfinite(ts) or ts < 0:
        errors["timestamp"] = "must be a finite non-negative number"
    return errors


def create_session(synthetic_pool, real_pool, seed: int = 0) -> SurveySession:
    """Sample 20 synthetic + 10 real image ids and shuffle them.

    Deterministic for a fixed (pools, seed); pools are sequences of
    image id strings.
    """
    synth = list(synthetic_pool)
    real = list(real_pool)
    if len(synth) < SYNTHETIC_PER_SESSION:
        raise SizeError(f"synthetic pool holds {len(synth)}, need {SYNTHETIC_PER_SESSION}")
    if len(real) < REAL_PER_SESSION:
        raise SizeError(f"real pool holds {len(real)}, need {REAL_PER_SESSION}")
    rng = np.random.default_rng(seed)
    pick_s = rng.choice(len(synth), size=SYNTHETIC_PER_SESSION, replace=False)
    pick_r = rng.choice(len(real), size=REAL_PER_SESSION, replace=False)
    entries = ([(synth[int(i)], "synthetic") for i in pick_s]
               + [(real[int(i)], "real") for i in pick_r])
    order = rng.permutation(len(entries))
    entries = tuple(entries[int(i)] for i in order)
    return SurveySession(f"svy{seed}", entries, seed)


def _format_line(r: SurveyResponse) -> str:
    cols = [r.participant_id, r.image_id, r.guess, str(int(r.confidence)),
            json.dumps(r.explanation), repr(float(r.timestamp))]
    return "\t".join(cols)


def _parse_line(line: str) -> SurveyResponse:
    cols = line.rstrip("\n").split("\t")
    if len(cols) != 6:
        raise ValueError(f"malformed response line: {line!r}")
    return SurveyResponse(cols[0], cols[1], cols[2], int(cols[3]),
                          json.loads(cols[4]), float(cols[5]))


class ResponseStore:
    """Append-only response log, optionally file-backed.

    Every accepted response is appended; reads resolve duplicates per
    (participant, image) by keeping the latest timestamp.  Appends are
    serialized through a lock so concurrent HTTP handlers stay safe.
    """

    def __init__(self, path=None):
        self.path = path
        self._lock = threading.Lock()
        self._responses: list = []
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    self._responses = [_parse_line(ln) for ln in fh if ln.strip()]
            except FileNotFoundError:
                pass

    def record(self, resp: SurveyResponse, session: SurveySession | None = None) -> None:
        errors = validate_response(resp, session)
        if errors:
            raise ResponseRejected(errors)
        with self._lock:
            self._responses.append(resp)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(_format_line(resp) + "\n")

    def responses(self) -> list:
        with self._lock:
            return list(self._responses)

    def __len__(self) -> int:
        return len(self._responses)


def record_response(store: ResponseStore, resp: SurveyResponse,
                    session: SurveySession | None = None) -> dict:
    """Validate and persist one response; returns an ack mapping."""
    store.record(resp, session)
    return {"ok": True, "participant_id": resp.participant_id,
            "image_id": resp.image_id}


@dataclass(frozen=True)
class SurveyReport:
    """Aggregated survey analytics.

    `confusion` rows are truth classes (real, synthetic) and columns are
    guesses in the same order; each row with responses sums to 1.
    `per_image_stats` rows are (image_id, truth, responses, correct).
    """

    overall_accuracy: float
    accuracy_real: float
    accuracy_synthetic: float
    per_image_accuracy: dict
    confusion: tuple
    term_frequency: tuple
    per_image_stats: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "accuracy_real": self.accuracy_real,
            "accuracy_synthetic": self.accuracy_synthetic,
            "per_image_accuracy": dict(self.per_image_accuracy),
            "confusion": [list(row) for row in self.confusion],
            "term_frequency": [[t, c] for t, c in self.term_frequency],
        }


def _dedupe(responses) -> list:
    """Latest response per (participant, image); order-independent.

    Ties on timestamp fall back to comparing the remaining fields so the
    winner never depends on arrival order.
    """
    best: dict = {}
    for r in responses:
        key = (r.participant_id, r.image_id)
        rank = (r.timestamp, r.guess, r.confidence, r.explanation)
        if key not in best or rank > best[key][0]:
            best[key] = (rank, r)
    return [v[1] for v in best.values()]


def term_frequency(texts) -> tuple:
    """Count non-stopword tokens: lowercase, strip punctuation, split.

    Returns ((term, count), ...) sorted by descending count, then
    alphabetically.
    """
    counts: dict = {}
    for text in texts:
        for token in text.lower().split():
            token = token.strip(string.punctuation)
            if token and token not in STOPWORDS:
                counts[token] = counts.get(token, 0) + 1
    return tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def report(responses, sessions) -> SurveyReport:
    """Aggregate deduplicated responses against session ground truth.

    `responses` is an iterable of SurveyResponse or a ResponseStore;
    `sessions` one SurveySession or an iterable of them.  Responses for
    images absent from every session are ignored.
    """
    if isinstance(responses, ResponseStore):
        responses = responses.responses()
    if isinstance(sessions, SurveySession):
        sessions = [sessions]
    truth: dict = {}
    for s in sessions:
        for image_id, t in s.entries:
            truth[image_id] = t

    scored = [r for r in _dedupe(responses) if r.image_id in truth]
    if not scored:
        raise SizeError("no scoreable responses")

    idx = {"real": 0, "synthetic": 1}
    raw = np.zeros((2, 2), np.float64)
    per_image: dict = {}
    for r in scored:
        t = truth[r.image_id]
        raw[idx[t], idx[r.guess]] += 1
        n, c = per_image.get(r.image_id, (0, 0))
        per_image[r.image_id] = (n + 1, c + (1 if r.guess == t else 0))

    correct = raw[0, 0] + raw[1, 1]
    total = raw.sum()
    row_sums = raw.sum(axis=1)
    per_class = [raw[k, k] / row_sums[k] if row_sums[k] else 0.0 for k in (0, 1)]
    confusion = tuple(
        tuple(raw[k] / row_sums[k]) if row_sums[k] else (0.0, 0.0) for k in (0, 1))
    stats = tuple(sorted((img, truth[img], n, c)
                         for img, (n, c) in per_image.items()))
    return SurveyReport(
        overall_accuracy=float(correct / total),
        accuracy_real=float(per_class[0]),
        accuracy_synthetic=float(per_class[1]),
        per_image_accuracy={img: c / n for img, _, n, c in stats},
        confusion=confusion,
        term_frequency=term_frequency(r.explanation for r in scored
                                      if r.explanation.strip()),
        per_image_stats=stats,
    )


def report_csv(rep: SurveyReport) -> str:
    """Per-image CSV rows: image_id, truth, responses, correct, accuracy."""
    lines = ["image_id,truth,responses,correct,accuracy"]
    for img, t, n, c in rep.per_image_stats:
        lines.append(f"{img},{t},{n},{c},{c / n:.4f}")
    return "\n".join(lines) + "\n"

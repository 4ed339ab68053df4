"""Run a complete survey round-trip in memory and print the report.

Builds a 30-image session (20 synthetic ids, 10 real ids), simulates
three participants with different error patterns, and prints the
accuracy breakdown, the row-normalized confusion matrix, and the most
frequent explanation terms.
"""

import tempfile
from pathlib import Path

from cellsynth.survey import (
    ResponseStore,
    SurveyResponse,
    SurveySession,
    report,
    term_frequency,
)

SYNTH = tuple(f"synth{i:02d}" for i in range(20))
REAL = tuple(f"real{i:02d}" for i in range(10))


def answers(pid: str, wrong_synth: int, wrong_real: int, note: str):
    out = []
    for k, img in enumerate(SYNTH):
        guess = "real" if k < wrong_synth else "synthetic"
        expl = "" if guess == "real" else note
        out.append(SurveyResponse(pid, img, guess, 3, expl, timestamp=float(k)))
    for k, img in enumerate(REAL):
        guess = "synthetic" if k < wrong_real else "real"
        expl = note if guess == "synthetic" else ""
        out.append(SurveyResponse(pid, img, guess, 4, expl,
                                  timestamp=float(20 + k)))
    return out


def main() -> None:
    entries = tuple((i, "synthetic") for i in SYNTH) + \
        tuple((i, "real") for i in REAL)
    session = SurveySession(session_id="demo", entries=entries, seed=0)
    store = ResponseStore(Path(tempfile.mkdtemp()) / "responses.tsv")

    for resp in answers("p1", 4, 1, "edges look too smooth"):
        store.record(resp, session)
    for resp in answers("p2", 7, 2, "halo looks painted on"):
        store.record(resp, session)
    for resp in answers("p3", 2, 0, "background texture is too even"):
        store.record(resp, session)

    rep = report(store.responses(), [session])
    print(f"overall accuracy: {rep.overall_accuracy:.3f}")
    print(f"real accuracy:    {rep.accuracy_real:.3f}")
    print(f"synthetic acc.:   {rep.accuracy_synthetic:.3f}")
    print("confusion (rows truth real/synthetic, cols guess real/synthetic):")
    for row in rep.confusion:
        print("  " + "  ".join(f"{v:.3f}" for v in row))
    texts = [r.explanation for r in store.responses() if r.explanation]
    print("top explanation terms:", term_frequency(texts)[:5])


if __name__ == "__main__":
    main()

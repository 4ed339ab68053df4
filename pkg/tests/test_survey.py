import pytest

from cellsynth.errors import SizeError
from cellsynth.survey import (GUESSES, ResponseRejected, ResponseStore,
                              SurveyResponse, SurveySession, create_session,
                              record_response, report, report_csv,
                              term_frequency, validate_response)

SYNTH_IDS = tuple(f"s{i:02d}" for i in range(20))
REAL_IDS = tuple(f"r{i:02d}" for i in range(10))


def _session():
    entries = tuple((i, "synthetic") for i in SYNTH_IDS)
    entries += tuple((i, "real") for i in REAL_IDS)
    return SurveySession("svy0", entries, 0)


def _answers(wrong_synth=5, wrong_real=2, pid="p1", t0=0.0):
    """One participant, full session: first k of each class guessed wrong."""
    out = []
    for k, img in enumerate(SYNTH_IDS):
        guess = "real" if k < wrong_synth else "synthetic"
        expl = "" if guess == "real" else "texture too clean"
        out.append(SurveyResponse(pid, img, guess, 3, expl, t0 + k))
    for k, img in enumerate(REAL_IDS):
        guess = "synthetic" if k < wrong_real else "real"
        expl = "odd halo" if guess == "synthetic" else ""
        out.append(SurveyResponse(pid, img, guess, 3, expl, t0 + 20 + k))
    return out


def test_create_session_composition_and_determinism():
    synth_pool = [f"g{i}" for i in range(40)]
    real_pool = [f"h{i}" for i in range(15)]
    a = create_session(synth_pool, real_pool, seed=4)
    b = create_session(synth_pool, real_pool, seed=4)
    assert a == b
    assert len(a.entries) == 30 and len(set(a.image_ids)) == 30
    truths = [t for _, t in a.entries]
    assert truths.count("synthetic") == 20 and truths.count("real") == 10
    c = create_session(synth_pool, real_pool, seed=5)
    assert c.entries != a.entries


def test_create_session_pool_sizes():
    with pytest.raises(SizeError):
        create_session([f"g{i}" for i in range(19)], [f"h{i}" for i in range(10)])
    with pytest.raises(SizeError):
        create_session([f"g{i}" for i in range(20)], [f"h{i}" for i in range(9)])


def test_session_enforces_composition():
    entries = tuple((f"x{i}", "synthetic") for i in range(30))
    with pytest.raises(SizeError):
        SurveySession("bad", entries, 0)


def test_client_view_carries_no_truth():
    view = _session().client_view()
    assert set(view) == {"session_id", "image_ids"}
    assert len(view["image_ids"]) == 30
    assert "synthetic" not in repr(view) and "real" not in repr(view)


def test_validate_response_field_errors():
    ses = _session()
    ok = SurveyResponse("p1", "s00", "synthetic", 4, "looks painted", 1.0)
    assert validate_response(ok, ses) == {}

    cases = {
        "participant_id": SurveyResponse("  ", "s00", "real", 3),
        "image_id": SurveyResponse("p1", "nope", "real", 3),
        "guess": SurveyResponse("p1", "s00", "fake", 3),
        "confidence": SurveyResponse("p1", "s00", "real", 9),
        "explanation": SurveyResponse("p1", "s00", "synthetic", 3, "   "),
        "timestamp": SurveyResponse("p1", "s00", "real", 3, "", -5.0),
    }
    for field, resp in cases.items():
        assert field in validate_response(resp, ses), field


def test_validate_response_rejects_bool_confidence():
    ses = _session()
    resp = SurveyResponse("p1", "s00", "real", True)
    assert "confidence" in validate_response(resp, ses)
    assert "timestamp" in validate_response(
        SurveyResponse("p1", "s00", "real", 3, "", float("nan")), ses)


def test_explanation_only_required_for_synthetic():
    ses = _session()
    real_blank = SurveyResponse("p1", "r00", "real", 2, "")
    assert validate_response(real_blank, ses) == {}
    synth_blank = SurveyResponse("p1", "s01", "synthetic", 2, "")
    assert "explanation" in validate_response(synth_blank, ses)


def test_store_persistence_roundtrip(tmp_path):
    path = tmp_path / "responses.tsv"
    store = ResponseStore(path)
    ses = _session()
    r1 = SurveyResponse("p1", "s00", "synthetic", 5, 'quoted "weird"\tstuff', 1.5)
    r2 = SurveyResponse("p1", "r00", "real", 1, "", 2.0)
    ack = record_response(store, r1, ses)
    assert ack == {"ok": True, "participant_id": "p1", "image_id": "s00"}
    store.record(r2, ses)
    assert len(store) == 2

    reloaded = ResponseStore(path)
    assert reloaded.responses() == [r1, r2]

    with pytest.raises(ResponseRejected) as exc:
        store.record(SurveyResponse("p1", "s01", "synthetic", 3, ""), ses)
    assert "explanation" in exc.value.errors
    assert len(store) == 2  # rejected response not appended


def test_report_hand_computed_accuracies():
    ses = _session()
    rep = report(_answers(wrong_synth=5, wrong_real=2), ses)
    assert rep.overall_accuracy == pytest.approx(23 / 30, abs=1e-12)
    assert rep.accuracy_real == pytest.approx(8 / 10, abs=1e-12)
    assert rep.accuracy_synthetic == pytest.approx(15 / 20, abs=1e-12)
    # rows: truth real then truth synthetic; cols: guess real, guess synthetic
    assert rep.confusion[0] == pytest.approx((0.8, 0.2), abs=1e-12)
    assert rep.confusion[1] == pytest.approx((0.25, 0.75), abs=1e-12)
    for row in rep.confusion:
        assert abs(sum(row) - 1.0) < 1e-9
    assert rep.per_image_accuracy["s00"] == 0.0  # first five synth guessed real
    assert rep.per_image_accuracy["s19"] == 1.0


def test_report_all_real_degenerate():
    ses = _session()
    answers = [SurveyResponse("p1", img, "real", 3, "", float(k))
               for k, (img, _) in enumerate(ses.entries)]
    rep = report(answers, ses)
    assert rep.overall_accuracy == pytest.approx(10 / 30, abs=1e-12)
    assert rep.accuracy_real == 1.0
    assert rep.accuracy_synthetic == 0.0
    assert rep.confusion == ((1.0, 0.0), (1.0, 0.0))


def test_report_dedupes_last_write_wins():
    ses = _session()
    answers = _answers(wrong_synth=5, wrong_real=2)
    # participant corrects their first answer later: s00 real -> synthetic
    answers.append(SurveyResponse("p1", "s00", "synthetic", 5, "second look", 99.0))
    rep = report(answers, ses)
    assert rep.overall_accuracy == pytest.approx(24 / 30, abs=1e-12)
    # order independence: reversed arrival gives the same result
    rep2 = report(list(reversed(answers)), ses)
    assert rep2.overall_accuracy == rep.overall_accuracy


def test_report_timestamp_tie_is_order_independent():
    ses = _session()
    base = _answers()
    a = SurveyResponse("p1", "s00", "real", 2, "", 500.0)
    b = SurveyResponse("p1", "s00", "synthetic", 2, "dup tie", 500.0)
    r_ab = report(base + [a, b], ses)
    r_ba = report(base + [b, a], ses)
    assert r_ab.overall_accuracy == r_ba.overall_accuracy
    assert r_ab.per_image_accuracy["s00"] == r_ba.per_image_accuracy["s00"]


def test_report_ignores_unknown_images_and_empty():
    ses = _session()
    stray = SurveyResponse("p1", "zzz", "real", 3, "", 1.0)
    rep = report(_answers() + [stray], ses)
    assert sum(n for _, _, n, _ in rep.per_image_stats) == 30
    with pytest.raises(SizeError):
        report([stray], ses)


def test_term_frequency_rules():
    texts = ["The edges look blurry, blurry!", "Blurry halo edges."]
    tf = term_frequency(texts)
    assert tf == (("blurry", 3), ("edges", 2), ("halo", 1))
    # domain cue words are counted even when generic fillers are dropped
    assert term_frequency(["a very perfect cell"]) == (("cell", 1), ("perfect", 1))


def test_report_csv_format():
    ses = _session()
    rep = report(_answers(), ses)
    lines = report_csv(rep).splitlines()
    assert lines[0] == "image_id,truth,responses,correct,accuracy"
    assert len(lines) == 31
    assert lines[1] == "r00,real,1,0,0.0000"  # sorted by image id; r00 guessed wrong


def test_guesses_constant():
    assert GUESSES == ("real", "synthetic")

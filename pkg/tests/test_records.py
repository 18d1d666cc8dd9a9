import json

import numpy as np
import pytest

from llm_jury.errors import DuplicateRecordError, EmptySampleError, RecordParseError, ScoreValidationError
from llm_jury.records import (
    AnswerBundle,
    EvaluationRecord,
    EvaluatorId,
    ScoreDimension,
    ScoreVector,
    Split,
    collapse_scores,
    ingest_records,
    join_pairs,
    read_answers,
    safety_from_risk,
    validate_records,
    write_records,
)

PRIMARY = EvaluatorId.primary()
JUDGE = EvaluatorId.judge("m1", "acme")


def rec(case, agent, ev=PRIMARY, scores=(4, 3, 5, 5), **kw):
    return EvaluationRecord(case, agent, ev, ScoreVector(*scores), **kw)


def test_safety_from_risk():
    assert [safety_from_risk(r) for r in range(1, 6)] == [5, 4, 3, 2, 1]
    for bad in (0, 6, 2.5, True, "3"):
        with pytest.raises(ScoreValidationError):
            safety_from_risk(bad)


def test_dimension_parse_accepts_values_and_labels():
    assert ScoreDimension.parse("DDx") is ScoreDimension.DDX
    assert ScoreDimension.parse("safety") is ScoreDimension.SAFETY
    with pytest.raises(ValueError):
        ScoreDimension.parse("tone")


def test_evaluator_id_invariants():
    assert JUDGE.name == "m1"
    with pytest.raises(ValueError):
        EvaluatorId("JudgeModel")
    with pytest.raises(ValueError):
        EvaluatorId("PrimaryPanel", "m", "p")


def test_record_requires_scores_xor_error():
    with pytest.raises(ValueError):
        EvaluationRecord("c", "a", JUDGE, None)
    with pytest.raises(ValueError):
        EvaluationRecord("c", "a", JUDGE, ScoreVector(1, 1, 1, 1), error="boom")
    assert not EvaluationRecord("c", "a", JUDGE, None, error="boom").ok


def test_ward_agreement_only_on_primary_panel():
    with pytest.raises(ValueError):
        rec("c", "ward", ev=JUDGE, ward_agreement=True)


def test_round_trip_and_ingest(tmp_path):
    records = [
        rec("c1", "a", agent_provider="acme", ward_agreement=None),
        rec("c1", "a", ev=JUDGE, scores=(2, 3, None, 1), repetition=1),
        rec("c2", "a", ev=JUDGE, scores=(2.5, 3.0, None, 1.25), derived=True, split=Split.EVALUATION),
        EvaluationRecord("c3", "a", JUDGE, None, error="parse: no block"),
    ]
    path = tmp_path / "r.jsonl"
    write_records(records, path)
    assert ingest_records(path) == records


def test_ingest_rejects_raw_fractional_scores(tmp_path):
    path = tmp_path / "r.jsonl"
    write_records([rec("c1", "a", scores=(2.5, 3, 3, 3), derived=True)], path)
    text = path.read_text().replace('"derived": true', '"derived": false')
    path.write_text(text)
    with pytest.raises(ScoreValidationError, match="integer"):
        ingest_records(path)


def test_ingest_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "r.jsonl"
    good = json.dumps(rec("c1", "a").to_dict())
    path.write_text(good + "\n{not json\n")
    with pytest.raises(RecordParseError, match="line 2"):
        ingest_records(path)
    path.write_text(good + "\n" + good + "\n")
    with pytest.raises(DuplicateRecordError, match="line 2"):
        ingest_records(path)
    path.write_text(json.dumps({**rec("c1", "a").to_dict(), "schema_version": "9"}) + "\n")
    with pytest.raises(RecordParseError, match="schema_version"):
        ingest_records(path)


def test_out_of_range_score_rejected():
    with pytest.raises(ScoreValidationError, match="outside"):
        validate_records([rec("c1", "a", scores=(6, 1, 1, 1))])
    with pytest.raises(ScoreValidationError, match="missing"):
        validate_records([EvaluationRecord("c1", "a", PRIMARY, ScoreVector(1, 1, 1, None))])


def test_collapse_averages_repetitions_and_join_pairs():
    records = [
        rec("c1", "a", scores=(4, 4, 4, 4)),
        rec("c2", "a", scores=(2, 2, 2, 2)),
        rec("c1", "a", ev=JUDGE, scores=(3, 3, 3, 3), repetition=0),
        rec("c1", "a", ev=JUDGE, scores=(4, 4, 4, 4), repetition=1),
        EvaluationRecord("c2", "a", JUDGE, None, error="timeout"),
    ]
    assert collapse_scores(records, JUDGE, "dx") == {("c1", "a"): 3.5}
    pairs = join_pairs(records, PRIMARY, JUDGE, ScoreDimension.DX)
    assert pairs.case_ids == ("c1",)
    np.testing.assert_array_equal(pairs.ref, [4.0])
    np.testing.assert_array_equal(pairs.other, [3.5])
    with pytest.raises(EmptySampleError):
        join_pairs(records, PRIMARY, EvaluatorId.rescore(), "dx")


def test_read_answers(tmp_path):
    bundles = [
        AnswerBundle("c1", "panel", "flu", ("dehydration",), ("cold",), "fever and cough"),
        AnswerBundle("c1", "ward", "cold", agent_provider="hospital"),
    ]
    path = tmp_path / "a.jsonl"
    path.write_text("".join(json.dumps(b.to_dict()) + "\n" for b in bundles))
    assert read_answers(path) == bundles
    with pytest.raises(ValueError):
        AnswerBundle("c1", "x", "  ")

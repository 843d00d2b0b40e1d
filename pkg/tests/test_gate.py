import base64
import itertools
import json

import pytest

from rvos_harness.core import ReferringExpression, VideoSequence
from rvos_harness.gate import (
    GateOutcome,
    HttpJudge,
    JudgeVerdict,
    MockJudge,
    Verdict,
    build_request,
    decide,
    parse_reply,
    verify,
)

from httpstub import serve
from oracles import all_vote_combos, unanimous_reference

EXPR = ReferringExpression("v/0", "v", "the red ball rolling left")
VIDEO = VideoSequence.blank("v", 12)


def v(outcome, judge="j"):
    return JudgeVerdict(judge, outcome, raw_response="diag" if outcome == "error" else None)


def test_decide_examples():
    assert decide([v("absent"), v("absent")]) is GateOutcome.NULL_TARGET
    assert decide([v("absent"), v("present")]) is GateOutcome.PROCEED
    assert decide([v("absent"), v("error")]) is GateOutcome.PROCEED


def test_decide_two_judge_truth_table():
    for a, b in itertools.product(("present", "absent", "error"), repeat=2):
        want = "null_target" if (a, b) == ("absent", "absent") else "proceed"
        assert decide([a, b]).value == want, (a, b)


@pytest.mark.parametrize("combo", list(all_vote_combos(3)))
def test_decide_matches_reference(combo):
    assert decide(list(combo)).value == unanimous_reference(combo)
    assert decide(list(combo), fail_open=False).value == unanimous_reference(combo, fail_open=False)


def test_single_absent_never_nulls_under_unanimous():
    assert decide(["absent"]) is GateOutcome.PROCEED


def test_majority_and_single_policies():
    assert decide(["absent", "absent", "present"], "majority") is GateOutcome.NULL_TARGET
    assert decide(["absent", "present"], "majority") is GateOutcome.PROCEED
    assert decide(["absent", "present"], "single") is GateOutcome.NULL_TARGET
    assert decide(["present", "absent"], "single") is GateOutcome.PROCEED


def test_decide_empty():
    with pytest.raises(ValueError):
        decide([])


@pytest.mark.parametrize("combo", [c for c in all_vote_combos(3) if len(c) < 3])
@pytest.mark.parametrize("extra", ["present", "error"])
def test_monotone_safety(combo, extra):
    before = decide(list(combo))
    after = decide(list(combo) + [extra])
    assert not (before is GateOutcome.PROCEED and after is GateOutcome.NULL_TARGET)


def test_error_verdict_needs_diagnostic():
    with pytest.raises(ValueError):
        JudgeVerdict("j", Verdict.ERROR)


@pytest.mark.parametrize("text, want", [
    ("PRESENT", "present"), ("absent.", "absent"), ("The object is Absent", "absent"),
    ("maybe", "error"), ("present or absent", "error"), ("", "error"),
])
def test_parse_reply(text, want):
    assert parse_reply(text).value == want


def test_build_request_sampling():
    v100 = VideoSequence.blank("v", 100)
    assert build_request(v100, EXPR, 100).frame_indices == tuple(range(100))
    assert build_request(v100, EXPR, 10).frame_indices == tuple(range(0, 100, 10))
    assert build_request(VideoSequence.blank("v", 3), EXPR, 10).frame_indices == (0, 1, 2)
    req = build_request(v100, EXPR, 4)
    assert len(req.frames) == 4
    assert EXPR.text in req.prompt


def test_verify_both_absent():
    judges = [MockJudge("a", {"v/0": "absent"}), MockJudge("b", {"v/0": "absent"})]
    d = verify(VIDEO, EXPR, judges)
    assert d.is_null_target
    assert [x.judge_id for x in d.verdicts] == ["a", "b"]


def test_verify_both_present():
    judges = [MockJudge("a", {"v/0": "present"}), MockJudge("b", {"v/0": "present"})]
    assert verify(VIDEO, EXPR, judges).outcome is GateOutcome.PROCEED


def test_verify_timeout_fails_open():
    judges = [MockJudge("slow", {"v/0": {"verdict": "absent", "latency_ms": 400}}),
              MockJudge("b", {"v/0": "absent"})]
    d = verify(VIDEO, EXPR, judges, timeout_ms=50)
    assert d.outcome is GateOutcome.PROCEED
    assert d.verdicts[0].outcome is Verdict.ERROR and "timeout" in d.verdicts[0].raw_response


def test_verify_scripted_error_and_exception():
    class Boom:
        judge_id = "boom"

        def judge(self, request):
            raise RuntimeError("network down")

    d = verify(VIDEO, EXPR, [MockJudge("a", {"v/0": "absent"}), Boom()])
    assert d.outcome is GateOutcome.PROCEED and "network down" in d.verdicts[1].raw_response
    d = verify(VIDEO, EXPR, [MockJudge("a", {"v/0": "error"}), MockJudge("b", {})])
    assert all(x.outcome is Verdict.ERROR for x in d.verdicts)
    assert d.outcome is GateOutcome.PROCEED


def test_verify_needs_two_judges_unless_overridden():
    one = [MockJudge("a", {"v/0": "absent"})]
    with pytest.raises(ValueError):
        verify(VIDEO, EXPR, one)
    assert verify(VIDEO, EXPR, one, allow_single_judge=True).outcome is GateOutcome.PROCEED
    assert verify(VIDEO, EXPR, one, consensus="single").outcome is GateOutcome.NULL_TARGET


def test_verify_is_deterministic_and_permutation_invariant():
    a, b, c = (MockJudge(n, {"v/0": s}) for n, s in (("a", "absent"), ("b", "absent"), ("c", "present")))
    outcomes = {verify(VIDEO, EXPR, list(p)).outcome for p in itertools.permutations([a, b, c])}
    assert outcomes == {GateOutcome.PROCEED}
    outcomes = {verify(VIDEO, EXPR, list(p)).outcome for p in itertools.permutations([a, b])}
    assert outcomes == {GateOutcome.NULL_TARGET}


def test_mock_judge_from_file(tmp_path):
    p = tmp_path / "j.json"
    p.write_text(json.dumps({"verdicts": {"v/0": "absent"}}))
    j = MockJudge.from_file("j", p)
    assert j.judge(build_request(VIDEO, EXPR, 2)).outcome is Verdict.ABSENT
    assert j.calls == 1


# ---- HTTP wire protocol

def test_http_judge_round_trip(monkeypatch):
    monkeypatch.setenv("JUDGE_KEY", "s3cret")
    with serve(lambda payload: (200, {"verdict": "absent", "confidence": 0.9})) as (url, got):
        j = HttpJudge("gem", url, api_key_env="JUDGE_KEY")
        out = j.judge(build_request(VIDEO, EXPR, 3))
    assert out.outcome is Verdict.ABSENT
    payload = got[0]["payload"]
    assert set(payload) == {"expression", "frames", "prompt"}
    assert payload["expression"] == EXPR.text and len(payload["frames"]) == 3
    assert base64.b64decode(payload["frames"][0])[:8] == b"\x89PNG\r\n\x1a\n"
    assert got[0]["headers"]["Authorization"] == "Bearer s3cret"


@pytest.mark.parametrize("status, body", [
    (500, {"error": "boom"}),
    (200, "not json"),
    (200, {"verdict": "maybe"}),
    (200, {"answer": "absent"}),
    (200, {"verdict": "absent", "confidence": "high"}),
    (200, ["absent"]),
])
def test_http_judge_bad_replies_are_errors(status, body):
    with serve(lambda payload: (status, body)) as (url, _):
        out = HttpJudge("j", url).judge(build_request(VIDEO, EXPR, 1))
    assert out.outcome is Verdict.ERROR and out.raw_response


def test_http_judge_unreachable():
    out = HttpJudge("j", "http://127.0.0.1:9/", timeout_ms=500).judge(build_request(VIDEO, EXPR, 1))
    assert out.outcome is Verdict.ERROR


def test_http_judges_in_verify():
    with serve(lambda p: (200, {"verdict": "ABSENT"})) as (url, got):
        d = verify(VIDEO, EXPR, [HttpJudge("a", url), HttpJudge("b", url)])
    assert d.is_null_target and len(got) == 2

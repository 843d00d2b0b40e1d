"""Target-existence gate.

Two or more judges look at a (video, expression) pair and vote ``present``
or ``absent``. Under the default unanimous policy the expression is declared
null-target only when at least two judges are asked and every one of them
answers ``absent``. Judge failures count as ``present`` (fail-open).
"""
from __future__ import annotations

import base64
import concurrent.futures as cf
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol, Sequence

import requests

from .core import ReferringExpression, VideoSequence

log = logging.getLogger(__name__)

DEFAULT_PROMPT = (
    "You are shown frames sampled in temporal order from one video. "
    'Does the video contain the object referred to by "{expression}"? '
    "Answer with a single word: PRESENT or ABSENT."
)
DEFAULT_MAX_FRAMES = 32
DEFAULT_TIMEOUT_MS = 30_000


class Verdict(str, Enum):
    PRESENT = "present"
    ABSENT = "absent"
    ERROR = "error"


class GateOutcome(str, Enum):
    PROCEED = "proceed"
    NULL_TARGET = "null_target"


class Consensus(str, Enum):
    UNANIMOUS = "unanimous"
    MAJORITY = "majority"
    SINGLE = "single"


@dataclass(frozen=True)
class JudgeVerdict:
    judge_id: str
    outcome: Verdict
    latency_ms: float = 0.0
    raw_response: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "outcome", Verdict(self.outcome))
        if self.outcome is Verdict.ERROR and not self.raw_response:
            raise ValueError("an error verdict must carry a diagnostic in raw_response")

    def to_dict(self) -> dict:
        return {
            "judge_id": self.judge_id,
            "outcome": self.outcome.value,
            "latency_ms": round(self.latency_ms, 3),
            "raw_response": self.raw_response,
        }


@dataclass(frozen=True)
class GateDecision:
    expression_id: str
    verdicts: tuple[JudgeVerdict, ...]
    outcome: GateOutcome

    @property
    def is_null_target(self) -> bool:
        return self.outcome is GateOutcome.NULL_TARGET

    def to_dict(self) -> dict:
        return {
            "expression_id": self.expression_id,
            "outcome": self.outcome.value,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }


@dataclass(frozen=True)
class JudgeRequest:
    expression: str
    frames: tuple[bytes, ...]
    prompt_template: str = DEFAULT_PROMPT
    expression_id: Optional[str] = None
    frame_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a judge request needs at least one frame")

    @property
    def prompt(self) -> str:
        return self.prompt_template.format(expression=self.expression)

    def to_wire(self) -> dict:
        return {
            "expression": self.expression,
            "frames": [base64.b64encode(f).decode("ascii") for f in self.frames],
            "prompt": self.prompt,
        }


class JudgeClient(Protocol):
    judge_id: str

    def judge(self, request: JudgeRequest) -> JudgeVerdict: ...


def decide(verdicts: Sequence[JudgeVerdict | Verdict | str],
           consensus: Consensus | str = Consensus.UNANIMOUS,
           fail_open: bool = True) -> GateOutcome:
    """Apply the consensus policy to a set of verdicts.

    With ``fail_open`` an error vote counts as ``present``; without it, as
    ``absent``. ``single`` trusts the first verdict alone.
    """
    if not verdicts:
        raise ValueError("decide() needs at least one verdict")
    votes = [Verdict(v.outcome if isinstance(v, JudgeVerdict) else v) for v in verdicts]
    error_vote = Verdict.PRESENT if fail_open else Verdict.ABSENT
    votes = [error_vote if v is Verdict.ERROR else v for v in votes]
    n_absent = votes.count(Verdict.ABSENT)
    consensus = Consensus(consensus)
    if consensus is Consensus.UNANIMOUS:
        null = len(votes) >= 2 and n_absent == len(votes)
    elif consensus is Consensus.MAJORITY:
        null = len(votes) >= 2 and 2 * n_absent > len(votes)
    else:
        null = votes[0] is Verdict.ABSENT
    return GateOutcome.NULL_TARGET if null else GateOutcome.PROCEED


def parse_reply(text: str) -> Verdict:
    """Map a free-text judge reply to a verdict; anything ambiguous is an error."""
    words = set(re.findall(r"[a-z]+", (text or "").lower()))
    hits = words & {"present", "absent"}
    if len(hits) != 1:
        return Verdict.ERROR
    return Verdict(hits.pop())


def sample_frame_indices(length: int, max_frames: int) -> list[int]:
    if max_frames < 1:
        raise ValueError("max_frames must be >= 1")
    if length <= max_frames:
        return list(range(length))
    return [i * length // max_frames for i in range(max_frames)]


def build_request(video: VideoSequence, expr: ReferringExpression,
                  max_frames: int = DEFAULT_MAX_FRAMES,
                  prompt_template: str = DEFAULT_PROMPT) -> JudgeRequest:
    idx = sample_frame_indices(len(video), max_frames)
    return JudgeRequest(
        expression=expr.text,
        frames=tuple(video.frames[i].encoded() for i in idx),
        prompt_template=prompt_template,
        expression_id=expr.expression_id,
        frame_indices=tuple(idx),
    )


def _error(judge_id: str, msg: str, latency_ms: float = 0.0) -> JudgeVerdict:
    return JudgeVerdict(judge_id, Verdict.ERROR, latency_ms, msg)


def verify(video: VideoSequence, expr: ReferringExpression, judges: Sequence[JudgeClient],
           *, consensus: Consensus | str = Consensus.UNANIMOUS,
           max_frames: int = DEFAULT_MAX_FRAMES,
           timeout_ms: float = DEFAULT_TIMEOUT_MS,
           fail_open: bool = True,
           allow_single_judge: bool = False,
           prompt_template: str = DEFAULT_PROMPT) -> GateDecision:
    """Query every judge concurrently and fold the verdicts into a decision."""
    if not judges:
        raise ValueError("verify() needs at least one judge")
    if len(judges) < 2 and Consensus(consensus) is not Consensus.SINGLE and not allow_single_judge:
        raise ValueError("consensus gating needs >= 2 judges; pass allow_single_judge to override")
    request = build_request(video, expr, max_frames, prompt_template)
    pool = cf.ThreadPoolExecutor(max_workers=len(judges), thread_name_prefix="judge")
    try:
        start = time.monotonic()
        futures = [pool.submit(j.judge, request) for j in judges]
        deadline = start + timeout_ms / 1000.0
        verdicts = []
        for judge, fut in zip(judges, futures):
            try:
                verdicts.append(fut.result(timeout=max(0.0, deadline - time.monotonic())))
            except cf.TimeoutError:
                verdicts.append(_error(judge.judge_id, f"timeout after {timeout_ms:g} ms", timeout_ms))
            except Exception as exc:  # judge clients must not take the run down
                verdicts.append(_error(judge.judge_id, f"{type(exc).__name__}: {exc}"))
    finally:
        pool.shutdown(wait=False, cancel_futures=True)
    if all(v.outcome is Verdict.ERROR for v in verdicts):
        log.warning("all judges failed for %s; proceeding", expr.expression_id)
    if len(judges) < 2 and Consensus(consensus) is not Consensus.SINGLE:
        outcome = GateOutcome.PROCEED
    else:
        outcome = decide(verdicts, consensus, fail_open)
    return GateDecision(expr.expression_id, tuple(verdicts), outcome)


class MockJudge:
    """Scripted judge backed by a JSON file ``{expression_id: script}``.

    A script is ``"present"``, ``"absent"``, ``"error"`` or an object
    ``{"verdict": ..., "latency_ms": ..., "error": "message"}``. Unknown
    expressions get ``default`` (an error unless set).
    """

    def __init__(self, judge_id: str, script: dict, default: Optional[str] = None):
        self.judge_id = judge_id
        self.script = dict(script)
        self.default = default
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, judge_id: str, path: str | Path, default: Optional[str] = None) -> "MockJudge":
        data = json.loads(Path(path).read_text())
        verdicts = data.get("verdicts", data) if isinstance(data, dict) else None
        if not isinstance(verdicts, dict):
            raise ValueError(f"{path}: expected an object mapping expression ids to verdicts")
        return cls(judge_id, verdicts, default)

    def judge(self, request: JudgeRequest) -> JudgeVerdict:
        with self._lock:
            self.calls += 1
        entry = self.script.get(request.expression_id, self.default)
        if entry is None:
            return _error(self.judge_id, f"no scripted verdict for {request.expression_id!r}")
        if isinstance(entry, str):
            entry = {"verdict": entry}
        latency = float(entry.get("latency_ms", 0.0))
        if latency:
            time.sleep(latency / 1000.0)
        verdict = entry.get("verdict", "error")
        if entry.get("error") or verdict == "error":
            return _error(self.judge_id, entry.get("error") or "scripted error", latency)
        return JudgeVerdict(self.judge_id, Verdict(verdict), latency, verdict)


class HttpJudge:
    """Judge reached over the JSON wire protocol.

    POST ``{expression, frames: [base64], prompt}``; the reply must be
    ``{"verdict": "present"|"absent", "confidence"?: number}``. Anything else,
    including non-200 status, becomes an error verdict. An API key is read
    from ``api_key_env`` if set and sent as a bearer token.
    """

    def __init__(self, judge_id: str, url: str, timeout_ms: float = DEFAULT_TIMEOUT_MS,
                 api_key_env: Optional[str] = None, session: Optional[requests.Session] = None):
        self.judge_id = judge_id
        self.url = url
        self.timeout_ms = timeout_ms
        self.api_key_env = api_key_env
        self.session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env) if self.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def judge(self, request: JudgeRequest) -> JudgeVerdict:
        start = time.monotonic()
        try:
            resp = self.session.post(self.url, json=request.to_wire(), headers=self._headers(),
                                     timeout=self.timeout_ms / 1000.0)
        except requests.RequestException as exc:
            return _error(self.judge_id, f"{type(exc).__name__}: {exc}",
                          (time.monotonic() - start) * 1000)
        latency = (time.monotonic() - start) * 1000
        body = resp.text
        if resp.status_code != 200:
            return _error(self.judge_id, f"HTTP {resp.status_code}: {body[:200]}", latency)
        try:
            payload = resp.json()
        except ValueError:
            return _error(self.judge_id, f"invalid JSON: {body[:200]}", latency)
        verdict = payload.get("verdict") if isinstance(payload, dict) else None
        conf = payload.get("confidence") if isinstance(payload, dict) else None
        if not isinstance(verdict, str) or (conf is not None and not isinstance(conf, (int, float))):
            return _error(self.judge_id, f"schema violation: {body[:200]}", latency)
        parsed = parse_reply(verdict)
        if parsed is Verdict.ERROR or verdict.strip().lower() != parsed.value:
            return _error(self.judge_id, f"unrecognised verdict {verdict!r}", latency)
        return JudgeVerdict(self.judge_id, parsed, latency, body)

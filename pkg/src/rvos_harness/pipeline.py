"""End-to-end run: gate, plan, compress, segment, assemble, persist, evaluate.

Expressions are processed by a bounded thread pool. Each worker writes only
its own prediction directory, and results are joined in manifest order so
output files do not depend on scheduling.
"""
from __future__ import annotations

import concurrent.futures as cf
import configparser
import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backend import (
    BackendError,
    ForcedMappingBackend,
    HttpBackend,
    OracleBackend,
    SegmentationBackend,
    SegmentRequest,
    ZeroBackend,
    assemble_masklet,
)
from .core import DEFAULT_TAU, Masklet, ReferringExpression, VideoSequence, masklet_null
from .dataset_io import (
    PREDICTIONS_INDEX,
    SCHEMA_VERSION,
    DatasetManifest,
    frame_names,
    load_gt_masklet,
    write_expression,
)
from .gate import (
    DEFAULT_MAX_FRAMES,
    DEFAULT_PROMPT,
    DEFAULT_TIMEOUT_MS,
    Consensus,
    GateDecision,
    HttpJudge,
    JudgeClient,
    MockJudge,
    verify,
)
from .kfc import compress_clip
from .metrics import MetricsReport, aggregate, score_expression
from .scheduler import SchedulerConfig, plan

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GateConfig:
    enabled: bool = True
    judges: tuple[str, ...] = ()
    consensus: Consensus = Consensus.UNANIMOUS
    max_frames: int = DEFAULT_MAX_FRAMES
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    fail_open: bool = True
    allow_single_judge: bool = False
    prompt_template: str = DEFAULT_PROMPT


@dataclass(frozen=True)
class RunConfig:
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    backend: str = "oracle"
    tau: float = DEFAULT_TAU
    parallelism: int = 4
    root: Optional[Path] = None
    split: str = "valid"
    out: Optional[Path] = None
    base_dir: Path = Path(".")

    def validate(self, n_judges: Optional[int] = None) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        n = len(self.gate.judges) if n_judges is None else n_judges
        if self.gate.enabled:
            if n == 0:
                raise ConfigError("the gate is enabled but no judges are configured")
            if (self.gate.consensus is not Consensus.SINGLE and n < 2
                    and not self.gate.allow_single_judge):
                raise ConfigError(f"{self.gate.consensus.value} consensus needs >= 2 judges")


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def load_config(path: str | Path) -> RunConfig:
    """Read an INI run configuration (see README for the keys)."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        run = cp["run"] if cp.has_section("run") else {}
        sch = cp["scheduler"] if cp.has_section("scheduler") else {}
        g = cp["gate"] if cp.has_section("gate") else {}
        judges = tuple(j.strip() for j in g.get("judges", "").split(",") if j.strip())
        gate = GateConfig(
            enabled=_bool(g.get("enabled", "true")),
            judges=judges,
            consensus=Consensus(g.get("consensus", "unanimous").strip()),
            max_frames=int(g.get("max_frames", DEFAULT_MAX_FRAMES)),
            timeout_ms=float(g.get("timeout_ms", DEFAULT_TIMEOUT_MS)),
            fail_open=_bool(g.get("fail_open", "true")),
            allow_single_judge=_bool(g.get("allow_single_judge", "false")),
            prompt_template=g.get("prompt_template", DEFAULT_PROMPT),
        )
        scheduler = SchedulerConfig(int(sch.get("t_target", 100)), int(sch.get("n_clips", 10)))
        cfg = RunConfig(
            scheduler=scheduler,
            gate=gate,
            backend=(cp.get("backend", "spec", fallback="oracle")).strip(),
            tau=float(run.get("tau", DEFAULT_TAU)),
            parallelism=int(run.get("parallelism", 4)),
            root=Path(run["root"]) if "root" in run else None,
            split=run.get("split", "valid"),
            out=Path(run["out"]) if "out" in run else None,
            base_dir=path.parent,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg.root is None:
        cfg = replace(cfg, root=path.parent)
    return cfg


def _resolve(cfg: RunConfig, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else Path(cfg.base_dir) / q


def build_judges(cfg: RunConfig, manifest: DatasetManifest) -> list[JudgeClient]:
    """Judge specs: ``name=mock:<file>``, ``name=oracle`` or ``name=http(s)://...``.

    HTTP judges read a bearer token from ``RVOS_JUDGE_<NAME>_API_KEY``.
    """
    judges = []
    for i, spec in enumerate(cfg.gate.judges):
        name, sep, target = spec.partition("=")
        if not sep:
            name, target = f"judge{i}", spec
        name, target = name.strip(), target.strip()
        if target.startswith("mock:"):
            judges.append(MockJudge.from_file(name, _resolve(cfg, target[5:])))
        elif target == "oracle":
            if not manifest.has_ground_truth:
                raise ConfigError("oracle judges need ground-truth annotations")
            script = {e.expression_id: "present" if e.gt_target_present else "absent"
                      for e in manifest.expressions}
            judges.append(MockJudge(name, script))
        elif target.startswith(("http://", "https://")):
            env = f"RVOS_JUDGE_{name.upper()}_API_KEY"
            judges.append(HttpJudge(name, target, cfg.gate.timeout_ms, api_key_env=env))
        else:
            raise ConfigError(f"unrecognised judge spec {spec!r}")
    return judges


def build_backend(cfg: RunConfig, manifest: DatasetManifest) -> SegmentationBackend:
    spec = cfg.backend
    if spec == "oracle":
        if not manifest.has_ground_truth:
            raise ConfigError("the oracle backend needs ground-truth annotations")
        cache: dict[str, Optional[Masklet]] = {}
        lock = threading.Lock()

        def lookup(expression_id: str) -> Optional[Masklet]:
            with lock:
                if expression_id not in cache:
                    cache[expression_id] = load_gt_masklet(manifest, manifest.expression(expression_id))
                return cache[expression_id]

        return OracleBackend(lookup)
    if spec == "forced":
        return ForcedMappingBackend()
    if spec == "zero":
        return ZeroBackend()
    if spec.startswith(("http://", "https://")):
        return HttpBackend(spec)
    raise ConfigError(f"unrecognised backend spec {spec!r}")


class JsonlLog:
    """Thread-safe JSON-lines event sink; a no-op without a path."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, event: str, **fields) -> None:
        if not self.path:
            return
        line = json.dumps({"event": event, "t": round(time.time(), 3), **fields}, sort_keys=True)
        with self._lock, self.path.open("a") as fh:
            fh.write(line + "\n")


class _FrameCache:
    def __init__(self):
        self._frames: dict[tuple[str, int], np.ndarray] = {}
        self._lock = threading.Lock()

    def get(self, video: VideoSequence, index: int) -> np.ndarray:
        key = (video.video_id, index)
        with self._lock:
            hit = self._frames.get(key)
        if hit is None:
            hit = video.frames[index].load()
            with self._lock:
                self._frames.setdefault(key, hit)
        return hit


@dataclass
class RunResult:
    predictions: dict[str, Masklet]
    decisions: dict[str, GateDecision]
    failures: dict[str, str]
    report: Optional[MetricsReport] = None

    @property
    def ok(self) -> bool:
        return not self.failures


def segment_expression(video: VideoSequence, expr: ReferringExpression, cfg: RunConfig,
                       backend: SegmentationBackend, frames: Optional[_FrameCache] = None,
                       events: Optional[JsonlLog] = None) -> Masklet:
    """Plan, compress and segment one expression, then assemble its masklet."""
    frames = frames or _FrameCache()
    events = events or JsonlLog()
    p = plan(video, cfg.scheduler)
    g = cfg.scheduler.grid
    requests = []
    for k, clip in enumerate(p.clips):
        composite = compress_clip([frames.get(video, i) for i in clip.slots], g, clip_index=k)
        governed = p.governed_frames(k)
        requests.append(SegmentRequest(
            expression=expr.text, clip_index=k, token_id=k, composite=composite,
            frame_indices=governed,
            original_frames=tuple(frames.get(video, i) for i in governed),
            frame_shape=video.shape, expression_id=expr.expression_id,
        ))

    def call(req: SegmentRequest):
        start = time.monotonic()
        try:
            resp = backend.segment(req)
        except Exception as exc:
            events.write("backend_call", expression_id=expr.expression_id, token_id=req.token_id,
                         status="error", error=str(exc))
            raise
        events.write("backend_call", expression_id=expr.expression_id, token_id=req.token_id,
                     status="ok", n_frames=len(req.frame_indices),
                     latency_ms=round((time.monotonic() - start) * 1000, 3))
        return resp

    with cf.ThreadPoolExecutor(max_workers=min(len(requests), 8), thread_name_prefix="seg") as pool:
        responses = list(pool.map(call, requests))
    return assemble_masklet(p, responses, expr.expression_id, video.shape, cfg.tau)


def evaluate(manifest: DatasetManifest, predictions: dict[str, Masklet]) -> MetricsReport:
    scores = []
    for expr in manifest.expressions:
        gt = load_gt_masklet(manifest, expr)
        scores.append(score_expression(predictions[expr.expression_id], gt))
    return aggregate(scores)


def gate_all(manifest: DatasetManifest, cfg: RunConfig,
             judges: Optional[Sequence[JudgeClient]] = None,
             events: Optional[JsonlLog] = None) -> dict[str, GateDecision]:
    judges = build_judges(cfg, manifest) if judges is None else list(judges)
    cfg.validate(len(judges))
    events = events or JsonlLog()
    out = {}

    def one(expr):
        return verify(manifest.video(expr.video_id), expr, judges,
                      consensus=cfg.gate.consensus, max_frames=cfg.gate.max_frames,
                      timeout_ms=cfg.gate.timeout_ms, fail_open=cfg.gate.fail_open,
                      allow_single_judge=cfg.gate.allow_single_judge,
                      prompt_template=cfg.gate.prompt_template)

    with cf.ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        for expr, decision in zip(manifest.expressions, pool.map(one, manifest.expressions)):
            events.write("gate", **decision.to_dict())
            out[expr.expression_id] = decision
    return out


def run(manifest: DatasetManifest, cfg: RunConfig, out_dir: Optional[Path] = None,
        judges: Optional[Sequence[JudgeClient]] = None,
        backend: Optional[SegmentationBackend] = None,
        evaluate_gt: bool = True, log_path: Optional[Path] = None) -> RunResult:
    """Run every expression of ``manifest``.

    With ``out_dir`` set, masks go to ``out_dir/predictions`` and the report
    to ``out_dir/report.json`` and ``report.txt``.
    """
    if cfg.gate.enabled:
        judges = build_judges(cfg, manifest) if judges is None else list(judges)
    else:
        judges = []
    cfg.validate(len(judges) if cfg.gate.enabled else 0)
    backend = build_backend(cfg, manifest) if backend is None else backend
    if log_path is None and out_dir is not None:
        log_path = Path(out_dir) / "run_log.jsonl"
    events = JsonlLog(log_path)
    pred_dir = Path(out_dir) / "predictions" if out_dir is not None else None
    frames = _FrameCache()

    def work(expr: ReferringExpression):
        video = manifest.video(expr.video_id)
        decision = None
        if cfg.gate.enabled:
            decision = verify(video, expr, judges, consensus=cfg.gate.consensus,
                              max_frames=cfg.gate.max_frames, timeout_ms=cfg.gate.timeout_ms,
                              fail_open=cfg.gate.fail_open,
                              allow_single_judge=cfg.gate.allow_single_judge,
                              prompt_template=cfg.gate.prompt_template)
            events.write("gate", **decision.to_dict())
        if decision is not None and decision.is_null_target:
            masklet = masklet_null(video, expr.expression_id)
        else:
            masklet = segment_expression(video, expr, cfg, backend, frames, events)
        if pred_dir is not None:
            write_expression(pred_dir, expr.expression_id, masklet, frame_names(video))
        return decision, masklet

    predictions, decisions, failures = {}, {}, {}
    with cf.ThreadPoolExecutor(max_workers=cfg.parallelism, thread_name_prefix="expr") as pool:
        futures = [(e, pool.submit(work, e)) for e in manifest.expressions]
        for expr, fut in futures:
            try:
                decision, masklet = fut.result()
            except (BackendError, ValueError, OSError) as exc:
                failures[expr.expression_id] = f"{type(exc).__name__}: {exc}"
                events.write("failure", expression_id=expr.expression_id, error=failures[expr.expression_id])
                log.error("expression %s failed: %s", expr.expression_id, exc)
                continue
            predictions[expr.expression_id] = masklet
            if decision is not None:
                decisions[expr.expression_id] = decision

    if pred_dir is not None:
        _write_index(manifest, predictions, failures, pred_dir)
    report = None
    if evaluate_gt and not failures and manifest.has_ground_truth:
        report = evaluate(manifest, predictions)
        if out_dir is not None:
            write_report(report, Path(out_dir))
    return RunResult(predictions, decisions, failures, report)


def _write_index(manifest: DatasetManifest, predictions: dict, failures: dict, pred_dir: Path) -> None:
    pred_dir.mkdir(parents=True, exist_ok=True)
    index = {"schema_version": SCHEMA_VERSION, "split": manifest.split, "expressions": {}}
    for expr in manifest.expressions:
        m = predictions.get(expr.expression_id)
        if m is None:
            continue
        index["expressions"][expr.expression_id] = {
            "video_id": expr.video_id,
            "frames": frame_names(manifest.video(expr.video_id)),
            "null": m.is_null(),
        }
    if failures:
        index["failed"] = dict(sorted(failures.items()))
    (pred_dir / PREDICTIONS_INDEX).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


def write_report(report: MetricsReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.txt").write_text(report.table())

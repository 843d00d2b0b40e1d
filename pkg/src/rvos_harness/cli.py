"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 some expressions failed,
3 configuration or dataset error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from .core import VideoSequence
from .dataset_io import DatasetError, load_manifest, read_predictions
from .fixture import generate_fixture
from .gate import Consensus
from .kfc import compress_clip
from .metrics import ExpressionScore, aggregate, final_score
from .pipeline import ConfigError, RunConfig, evaluate, gate_all, load_config, run, write_report
from .scheduler import SchedulerConfig, plan

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--root", type=Path, help="dataset root (defaults to the config's directory)")
    p.add_argument("--split", help="dataset split")
    p.add_argument("--out", type=Path, help="output path")
    p.add_argument("--gate", choices=("on", "off"))
    p.add_argument("--consensus", choices=[c.value for c in Consensus])
    p.add_argument("--judge", action="append", dest="judges", metavar="SPEC",
                   help="judge spec (repeatable): name=mock:FILE | name=oracle | name=URL")
    p.add_argument("--backend", help="oracle | forced | zero | URL")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--t-target", type=int)
    p.add_argument("--n-clips", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rvos-harness", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fixture", help="generate the synthetic dataset")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lengths", help="comma-separated video lengths")

    p = sub.add_parser("plan", help="emit the clip plan JSON for one video")
    _common(p)
    p.add_argument("--video", help="video id from the dataset")
    p.add_argument("--length", type=int, help="plan a bare video length instead")

    for name, text in (("gate", "run the existence gate only (JSONL)"),
                       ("infer", "predict masks without evaluating"),
                       ("run", "predict and evaluate")):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("eval", help="score predictions or a scores file")
    _common(p)
    p.add_argument("--predictions", type=Path, help="prediction directory")
    p.add_argument("--scores", type=Path,
                   help="JSON list of per-expression scores or an object {jf, n_acc, t_acc}")

    p = sub.add_parser("render", help="write KFC composites and mask overlays as PNG")
    _common(p)
    p.add_argument("--video", required=True)
    p.add_argument("--predictions", type=Path, help="prediction directory for overlays")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    updates = {}
    if args.root is not None:
        updates["root"] = args.root
    if args.split:
        updates["split"] = args.split
    if args.backend:
        updates["backend"] = args.backend
    if args.parallelism is not None:
        updates["parallelism"] = args.parallelism
    if args.tau is not None:
        updates["tau"] = args.tau
    if args.t_target is not None or args.n_clips is not None:
        updates["scheduler"] = SchedulerConfig(
            args.t_target if args.t_target is not None else cfg.scheduler.t_target,
            args.n_clips if args.n_clips is not None else cfg.scheduler.n_clips,
        )
    gate = {}
    if args.gate:
        gate["enabled"] = args.gate == "on"
    if args.consensus:
        gate["consensus"] = Consensus(args.consensus)
    if args.judges:
        gate["judges"] = tuple(args.judges)
        if not args.config:
            updates["base_dir"] = Path.cwd()
    if gate:
        updates["gate"] = replace(cfg.gate, **gate)
    cfg = replace(cfg, **updates)
    if cfg.root is None:
        cfg = replace(cfg, root=Path.cwd())
    return cfg


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def cmd_fixture(args, cfg: RunConfig) -> int:
    root = args.root or args.out
    if root is None:
        raise ConfigError("fixture needs --root")
    kwargs = {}
    if args.lengths:
        kwargs["lengths"] = tuple(int(v) for v in args.lengths.split(","))
    generate_fixture(root, split=cfg.split, seed=args.seed, **kwargs)
    print(f"wrote fixture to {root}")
    return EXIT_OK


def cmd_plan(args, cfg: RunConfig) -> int:
    if args.length is not None:
        target = args.length
    elif args.video:
        target = load_manifest(cfg.root, cfg.split).video(args.video)
    else:
        raise ConfigError("plan needs --video or --length")
    _emit(plan(target, cfg.scheduler).to_json(indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_gate(args, cfg: RunConfig) -> int:
    manifest = load_manifest(cfg.root, cfg.split)
    cfg = replace(cfg, gate=replace(cfg.gate, enabled=True))
    decisions = gate_all(manifest, cfg)
    lines = [json.dumps(decisions[e.expression_id].to_dict(), sort_keys=True) for e in manifest.expressions]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _run(args, cfg: RunConfig, evaluate_gt: bool) -> int:
    manifest = load_manifest(cfg.root, cfg.split)
    out = args.out or cfg.out
    if out is None:
        raise ConfigError("--out is required")
    if not out.is_absolute() and args.out is None:
        out = cfg.base_dir / out
    result = run(manifest, cfg, out_dir=out, evaluate_gt=evaluate_gt)
    n_null = sum(d.is_null_target for d in result.decisions.values())
    print(f"{len(result.predictions)} expressions predicted ({n_null} gated null-target), "
          f"{len(result.failures)} failed")
    for eid, err in sorted(result.failures.items()):
        print(f"  FAILED {eid}: {err}", file=sys.stderr)
    if result.report is not None:
        print(result.report.table(), end="")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def _scores_report(path: Path):
    data = json.loads(path.read_text())
    if isinstance(data, dict) and {"jf", "n_acc", "t_acc"} <= set(data):
        jf, n, t = float(data["jf"]), float(data["n_acc"]), float(data["t_acc"])
        return {"J&F": jf, "N-acc": n, "T-acc": t, "Final": final_score(jf, n, t)}
    entries = data["per_expression"] if isinstance(data, dict) else data
    return aggregate([ExpressionScore.from_dict(d) for d in entries])


def cmd_eval(args, cfg: RunConfig) -> int:
    if args.scores:
        result = _scores_report(args.scores)
        if isinstance(result, dict):
            print(" | ".join(f"{k:>7}" for k in result))
            print(" | ".join(f"{v:>7.2f}" for v in result.values()))
            if args.out:
                _emit(json.dumps(result, indent=2) + "\n", args.out)
            return EXIT_OK
        report = result
    else:
        manifest = load_manifest(cfg.root, cfg.split)
        pred = args.predictions
        if pred is None:
            raise ConfigError("eval needs --predictions or --scores")
        report = evaluate(manifest, read_predictions(manifest, pred))
    print(report.table(), end="")
    if args.out:
        write_report(report, args.out)
    return EXIT_OK


def _overlay(frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = frame.astype(np.float64)
    out[mask] = 0.5 * out[mask] + 0.5 * np.array([255.0, 0.0, 255.0])
    return out.astype(np.uint8)


def cmd_render(args, cfg: RunConfig) -> int:
    manifest = load_manifest(cfg.root, cfg.split)
    video: VideoSequence = manifest.video(args.video)
    out = args.out
    if out is None:
        raise ConfigError("render needs --out")
    out.mkdir(parents=True, exist_ok=True)
    p = plan(video, cfg.scheduler)
    for k, clip in enumerate(p.clips):
        comp = compress_clip([video.frames[i].load() for i in clip.slots], cfg.scheduler.grid, k)
        Image.fromarray(comp.key_image).save(out / f"clip{k:02d}_key.png")
        Image.fromarray(comp.mosaic).save(out / f"clip{k:02d}_mosaic.png")
    if args.predictions:
        preds = read_predictions(manifest, args.predictions)
        for expr in manifest.expressions:
            if expr.video_id != video.video_id:
                continue
            edir = out / "overlays" / expr.expression_id
            edir.mkdir(parents=True, exist_ok=True)
            for i, m in enumerate(preds[expr.expression_id].masks):
                Image.fromarray(_overlay(video.frames[i].load(), m.data)).save(edir / f"{i:05d}.png")
    print(f"rendered {len(p.clips)} clips of {video.video_id} to {out}")
    return EXIT_OK


COMMANDS = {
    "fixture": cmd_fixture,
    "plan": cmd_plan,
    "gate": cmd_gate,
    "infer": lambda a, c: _run(a, c, evaluate_gt=False),
    "run": lambda a, c: _run(a, c, evaluate_gt=True),
    "eval": cmd_eval,
    "render": cmd_render,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, DatasetError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"rvos-harness: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"rvos-harness: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

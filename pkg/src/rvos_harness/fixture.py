"""Synthetic MeViS-style dataset of moving shapes with exact annotations.

Each video carries two objects moving along straight lines (the second one
can enter late), one expression per object, one expression covering both,
and one no-target expression naming a shape that never appears. Two judge
scripts that match the ground truth and one that answers ``absent`` to
everything are written next to the split.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .dataset_io import SCHEMA_VERSION

SHAPES = ("circle", "square", "triangle")
COLORS = {
    "red": (220, 40, 40),
    "green": (40, 190, 60),
    "blue": (40, 80, 220),
    "yellow": (230, 210, 40),
}
DEFAULT_LENGTHS = (120, 55, 100, 8)


def shape_mask(kind: str, cy: float, cx: float, r: float, h: int, w: int) -> np.ndarray:
    y, x = np.mgrid[:h, :w]
    if kind == "circle":
        return (y - cy) ** 2 + (x - cx) ** 2 <= r * r
    if kind == "square":
        return (np.abs(y - cy) <= r) & (np.abs(x - cx) <= r)
    if kind == "triangle":
        return (y <= cy + r) & (y - (cy - r) >= 2 * np.abs(x - cx))
    raise ValueError(f"unknown shape {kind!r}")


def _direction(dx: float, dy: float) -> str:
    if abs(dx) >= abs(dy):
        return "right" if dx > 0 else "left"
    return "down" if dy > 0 else "up"


def generate_fixture(root: str | Path, split: str = "valid", seed: int = 0,
                     lengths: Sequence[int] = DEFAULT_LENGTHS,
                     size: tuple[int, int] = (64, 48)) -> Path:
    """Write the dataset under ``root/split`` and return ``root``.

    ``size`` is ``(width, height)``. Output depends only on the arguments.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    w, h = size
    sdir = root / split
    meta = {"schema_version": SCHEMA_VERSION, "videos": {}}
    judge_truth: dict[str, str] = {}
    palette = [0, 0, 0, 255, 255, 255, 128, 128, 128] + [0] * (256 * 3 - 9)

    for v, length in enumerate(lengths):
        vid = f"vid{v:03d}"
        img_dir = sdir / "JPEGImages" / vid
        ann_dir = sdir / "Annotations" / vid
        img_dir.mkdir(parents=True, exist_ok=True)
        ann_dir.mkdir(parents=True, exist_ok=True)

        kinds = rng.choice(SHAPES, size=2, replace=False)
        colors = rng.choice(list(COLORS), size=2, replace=False)
        objs = []
        for k in range(2):
            r = float(rng.uniform(0.12, 0.2) * min(h, w))
            start = rng.uniform([r, r], [h - r, w - r])
            end = rng.uniform([r, r], [h - r, w - r])
            enter = 0 if k == 0 else int(rng.integers(0, max(1, length // 3)))
            objs.append(dict(id=k + 1, kind=str(kinds[k]), color=str(colors[k]), r=r,
                             start=start, end=end, enter=enter))
        background = np.full((h, w, 3), int(rng.integers(20, 90)), np.uint8)

        names = []
        for t in range(length):
            frame = background.copy()
            ann = np.zeros((h, w), np.uint8)
            a = t / max(1, length - 1)
            for o in objs:
                if t < o["enter"]:
                    continue
                cy, cx = (1 - a) * o["start"] + a * o["end"]
                m = shape_mask(o["kind"], cy, cx, o["r"], h, w)
                frame[m] = COLORS[o["color"]]
                ann[m] = o["id"]
            name = f"{t:05d}"
            names.append(name)
            Image.fromarray(frame).save(img_dir / f"{name}.jpg", quality=95)
            pim = Image.fromarray(ann, mode="P")
            pim.putpalette(palette)
            pim.save(ann_dir / f"{name}.png")

        exps = {}
        for o in objs:
            dy, dx = o["end"] - o["start"]
            exps[str(len(exps))] = {"exp": f"the {o['color']} {o['kind']} moving {_direction(dx, dy)}",
                                    "obj_id": [o["id"]]}
        exps[str(len(exps))] = {"exp": f"the {objs[0]['kind']} and the {objs[1]['kind']}",
                                "obj_id": [1, 2]}
        unused_color = next(c for c in COLORS if c not in {o["color"] for o in objs})
        unused_kind = next(s for s in SHAPES if s not in {o["kind"] for o in objs})
        exps[str(len(exps))] = {"exp": f"the {unused_color} {unused_kind} bouncing around",
                                "obj_id": []}
        meta["videos"][vid] = {"frames": names, "expressions": exps}
        for key, e in exps.items():
            judge_truth[f"{vid}/{key}"] = "present" if e["obj_id"] else "absent"

    sdir.mkdir(parents=True, exist_ok=True)
    (sdir / "meta_expressions.json").write_text(json.dumps(meta, indent=2) + "\n")
    jdir = root / "judges"
    jdir.mkdir(parents=True, exist_ok=True)
    for name in ("judge_a", "judge_b"):
        _write_json(jdir / f"{name}.json", {"verdicts": judge_truth})
    _write_json(jdir / "judge_contrarian.json", {"verdicts": {k: "absent" for k in judge_truth}})
    (root / "rvos.ini").write_text(DEFAULT_CONFIG.format(split=split))
    return root


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


DEFAULT_CONFIG = """\
# rvos-harness run configuration. Relative paths resolve against this file.
[run]
split = {split}
tau = 0.5
parallelism = 4

[scheduler]
t_target = 100
n_clips = 10

[gate]
enabled = true
consensus = unanimous
judges = a=mock:judges/judge_a.json, b=mock:judges/judge_b.json
max_frames = 32
timeout_ms = 30000
fail_open = true

[backend]
spec = oracle
"""


"""Region similarity J, boundary F, and the challenge aggregates.

Per-frame conventions: when both masks are empty, J = F = 1. Boundaries are
foreground pixels with at least one 4-neighbour outside the foreground;
pixels beyond the image edge count as background.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .core import BinaryMask, Masklet

BOUNDARY_FRACTION = 0.008

_CROSS = ndimage.generate_binary_structure(2, 1)


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    return p, g


def jaccard(pred: BinaryMask | np.ndarray, gt: BinaryMask | np.ndarray) -> float:
    p, g = _pair(pred, gt)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def boundary_map(mask: BinaryMask | np.ndarray) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(m, structure=_CROSS, border_value=0)
    return m & ~interior


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def default_tolerance(shape: tuple[int, int]) -> int:
    return int(math.ceil(BOUNDARY_FRACTION * math.hypot(*shape)))


def boundary_f(pred: BinaryMask | np.ndarray, gt: BinaryMask | np.ndarray,
               tolerance_px: Optional[int] = None) -> float:
    """Boundary F-measure with matching inside a disk of ``tolerance_px``."""
    p, g = _pair(pred, gt)
    if tolerance_px is None:
        tolerance_px = default_tolerance(p.shape)
    if tolerance_px < 0:
        raise ValueError("tolerance_px must be >= 0")
    pb, gb = boundary_map(p), boundary_map(g)
    n_p, n_g = np.count_nonzero(pb), np.count_nonzero(gb)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    se = disk(tolerance_px)
    g_dil = ndimage.binary_dilation(gb, structure=se)
    p_dil = ndimage.binary_dilation(pb, structure=se)
    precision = np.count_nonzero(pb & g_dil) / n_p
    recall = np.count_nonzero(gb & p_dil) / n_g
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ExpressionScore:
    expression_id: str
    j: Optional[float]
    f: Optional[float]
    predicted_nonempty: bool
    gt_target_present: bool

    def __post_init__(self):
        has = self.j is not None and self.f is not None
        if has != self.gt_target_present or (self.j is None) != (self.f is None):
            raise ValueError(f"{self.expression_id}: j/f must be set iff the target is present")

    def to_dict(self) -> dict:
        return {
            "expression_id": self.expression_id,
            "j": self.j,
            "f": self.f,
            "predicted_nonempty": self.predicted_nonempty,
            "gt_target_present": self.gt_target_present,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpressionScore":
        return cls(d["expression_id"], d.get("j"), d.get("f"),
                   bool(d["predicted_nonempty"]), bool(d["gt_target_present"]))


def score_expression(pred: Masklet, gt: Optional[Masklet],
                     tolerance_px: Optional[int] = None) -> ExpressionScore:
    """Score one expression. ``gt`` is None for a no-target expression."""
    nonempty = not pred.is_null()
    if gt is None:
        return ExpressionScore(pred.expression_id, None, None, nonempty, False)
    if len(pred) != len(gt) or pred.shape != gt.shape:
        raise ValueError(
            f"{pred.expression_id}: prediction {len(pred)}x{pred.shape} vs ground truth {len(gt)}x{gt.shape}"
        )
    js = [jaccard(p, g) for p, g in zip(pred.masks, gt.masks)]
    fs = [boundary_f(p, g, tolerance_px) for p, g in zip(pred.masks, gt.masks)]
    return ExpressionScore(pred.expression_id, float(np.mean(js)), float(np.mean(fs)), nonempty, True)


def round_half_up(x: float, places: int = 2) -> float:
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


def final_score(jf: float, n_acc: float, t_acc: float) -> float:
    return round_half_up((jf + n_acc + t_acc) / 3.0)


@dataclass(frozen=True)
class MetricsReport:
    per_expression: tuple[ExpressionScore, ...]
    jf: Optional[float]
    n_acc: Optional[float]
    t_acc: Optional[float]
    final: Optional[float]
    counts: dict = field(default_factory=dict)
    j: Optional[float] = None
    f: Optional[float] = None

    def to_dict(self) -> dict:
        r = lambda v: None if v is None else round_half_up(v)  # noqa: E731
        return {
            "schema_version": 1,
            "J&F": r(self.jf),
            "J": r(self.j),
            "F": r(self.f),
            "N-acc": r(self.n_acc),
            "T-acc": r(self.t_acc),
            "Final": self.final,
            "counts": dict(self.counts),
            "per_expression": [s.to_dict() for s in self.per_expression],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        fmt = lambda v: "n/a" if v is None else f"{v:.2f}"  # noqa: E731
        cols = [("J&F", self.jf), ("J", self.j), ("F", self.f),
                ("N-acc", self.n_acc), ("T-acc", self.t_acc), ("Final", self.final)]
        head = " | ".join(f"{k:>7}" for k, _ in cols)
        row = " | ".join(f"{fmt(v):>7}" for _, v in cols)
        counts = f"targets: {self.counts.get('n_target', 0)}  no-targets: {self.counts.get('n_notarget', 0)}"
        return f"{head}\n{'-' * len(head)}\n{row}\n{counts}\n"


def aggregate(scores: Sequence[ExpressionScore]) -> MetricsReport:
    if not scores:
        raise ValueError("aggregate() needs at least one expression score")
    targets = [s for s in scores if s.gt_target_present]
    blanks = [s for s in scores if not s.gt_target_present]
    jf = j = f = t_acc = n_acc = None
    if targets:
        j = 100.0 * float(np.mean([s.j for s in targets]))
        f = 100.0 * float(np.mean([s.f for s in targets]))
        jf = 100.0 * float(np.mean([(s.j + s.f) / 2 for s in targets]))
        t_acc = 100.0 * sum(s.predicted_nonempty for s in targets) / len(targets)
    if blanks:
        n_acc = 100.0 * sum(not s.predicted_nonempty for s in blanks) / len(blanks)
    final = None if None in (jf, n_acc, t_acc) else final_score(jf, n_acc, t_acc)
    return MetricsReport(tuple(scores), jf, n_acc, t_acc, final,
                         {"n_target": len(targets), "n_notarget": len(blanks)}, j, f)

"""Existence-aware orchestration and evaluation for referring video object
segmentation: clip scheduling, key frame compression, consensus gating of
no-target expressions, multi-token mask assembly and challenge metrics."""

from .core import (
    BinaryMask,
    FrameRef,
    Masklet,
    ReferringExpression,
    SoftMask,
    VideoSequence,
    masklet_null,
    threshold,
)
from .scheduler import ClipPlan, SchedulerConfig, governing_tokens, plan
from .kfc import CompositeFrame, compress_clip, mosaic_tile_rect
from .gate import GateDecision, GateOutcome, JudgeVerdict, Verdict, build_request, decide, verify
from .backend import SegmentRequest, SegmentResponse, assemble_masklet
from .metrics import ExpressionScore, MetricsReport, aggregate, boundary_f, jaccard, score_expression
from .dataset_io import (
    DatasetManifest,
    RleMask,
    load_manifest,
    read_predictions,
    rle_decode,
    rle_encode,
    write_predictions,
)
from .pipeline import RunConfig, run

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "FrameRef",
    "Masklet",
    "ReferringExpression",
    "SoftMask",
    "VideoSequence",
    "masklet_null",
    "threshold",
    "ClipPlan",
    "SchedulerConfig",
    "governing_tokens",
    "plan",
    "CompositeFrame",
    "compress_clip",
    "mosaic_tile_rect",
    "GateDecision",
    "GateOutcome",
    "JudgeVerdict",
    "Verdict",
    "build_request",
    "decide",
    "verify",
    "SegmentRequest",
    "SegmentResponse",
    "assemble_masklet",
    "ExpressionScore",
    "MetricsReport",
    "aggregate",
    "boundary_f",
    "jaccard",
    "score_expression",
    "DatasetManifest",
    "RleMask",
    "load_manifest",
    "read_predictions",
    "rle_decode",
    "rle_encode",
    "write_predictions",
    "RunConfig",
    "run",
]

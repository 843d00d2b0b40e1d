"""Segmentation backends and masklet assembly.

A backend answers one request per [SEG] token with a soft mask for every
frame the token governs. Only mocks and an HTTP client ship here; the
decoding and temporal propagation live behind the backend boundary.
"""
from __future__ import annotations

import base64
import io
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Protocol, Sequence

import numpy as np
import requests
from PIL import Image

from .core import DEFAULT_TAU, Masklet, SoftMask, threshold
from .dataset_io import decode_soft_rle
from .kfc import CompositeFrame
from .scheduler import ClipPlan


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SegmentRequest:
    expression: str
    clip_index: int
    token_id: int
    composite: CompositeFrame
    frame_indices: tuple[int, ...]
    original_frames: tuple[np.ndarray, ...]
    frame_shape: tuple[int, int]
    expression_id: Optional[str] = None

    def __post_init__(self):
        if self.token_id != self.clip_index:
            raise ValueError(f"token {self.token_id} does not belong to clip {self.clip_index}")
        if len(self.frame_indices) != len(self.original_frames):
            raise ValueError("frame_indices and original_frames differ in length")


@dataclass(frozen=True)
class SegmentResponse:
    token_id: int
    masks: Mapping[int, SoftMask]


class SegmentationBackend(Protocol):
    def segment(self, request: SegmentRequest) -> SegmentResponse: ...


def _png_b64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class _Counting:
    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def _count(self):
        with self._lock:
            self.calls += 1


class OracleBackend(_Counting):
    """Returns ground truth as soft masks of 0/1. ``lookup`` maps an
    expression id to its GT masklet, or None for a no-target expression."""

    def __init__(self, lookup: Callable[[str], Optional[Masklet]]):
        super().__init__()
        self.lookup = lookup

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        self._count()
        gt = self.lookup(request.expression_id)
        h, w = request.frame_shape
        zero = SoftMask(np.zeros((h, w)))
        masks = {
            f: zero if gt is None else SoftMask.from_binary(gt.masks[f]) for f in request.frame_indices
        }
        return SegmentResponse(request.token_id, masks)


class ForcedMappingBackend(_Counting):
    """Emits the same centred disk on every frame, whatever the expression."""

    def __init__(self, radius_fraction: float = 0.25):
        super().__init__()
        self.radius_fraction = radius_fraction

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        self._count()
        h, w = request.frame_shape
        y, x = np.ogrid[:h, :w]
        r = max(1.0, self.radius_fraction * min(h, w))
        blob = SoftMask(((y - (h - 1) / 2) ** 2 + (x - (w - 1) / 2) ** 2 <= r * r).astype(float))
        return SegmentResponse(request.token_id, {f: blob for f in request.frame_indices})


class ZeroBackend(_Counting):
    def segment(self, request: SegmentRequest) -> SegmentResponse:
        self._count()
        zero = SoftMask(np.zeros(request.frame_shape))
        return SegmentResponse(request.token_id, {f: zero for f in request.frame_indices})


class HttpBackend(_Counting):
    """Backend reached over HTTP.

    Request: ``{expression, token_id, clip_index, composite: {key, mosaic},
    frames: [base64 PNG], frame_indices}``. Response: ``{token_id, masks:
    {frame_index: soft RLE}}`` where soft masks are 8-bit quantized.
    """

    def __init__(self, url: str, timeout_ms: float = 120_000, session: Optional[requests.Session] = None):
        super().__init__()
        self.url = url
        self.timeout_ms = timeout_ms
        self.session = session or requests.Session()

    @staticmethod
    def to_wire(request: SegmentRequest) -> dict:
        return {
            "expression": request.expression,
            "token_id": request.token_id,
            "clip_index": request.clip_index,
            "composite": {
                "key": _png_b64(request.composite.key_image),
                "mosaic": _png_b64(request.composite.mosaic),
            },
            "frames": [_png_b64(f) for f in request.original_frames],
            "frame_indices": list(request.frame_indices),
        }

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        self._count()
        try:
            resp = self.session.post(self.url, json=self.to_wire(request), timeout=self.timeout_ms / 1000)
        except requests.RequestException as exc:
            raise BackendError(f"backend unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"backend returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
            token = int(payload["token_id"])
            masks = {int(k): decode_soft_rle(v) for k, v in payload["masks"].items()}
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        if token != request.token_id:
            raise BackendError(f"asked for token {request.token_id}, got {token}")
        return SegmentResponse(token, masks)


def assemble_masklet(plan: ClipPlan, responses: Sequence[SegmentResponse], expression_id: str,
                     frame_shape: tuple[int, int], tau: float = DEFAULT_TAU) -> Masklet:
    """Threshold each frame's soft mask; frames governed by several tokens
    are thresholded after a pointwise mean of their soft masks."""
    by_token = {}
    for r in responses:
        if r.token_id in by_token:
            raise BackendError(f"duplicate response for token {r.token_id}")
        by_token[r.token_id] = r
    missing = sorted(set(plan.token_ids) - set(by_token))
    if missing:
        raise BackendError(f"missing responses for tokens {missing}")
    masks = []
    for f in range(plan.video_length):
        softs = []
        for t in plan.token_assignments[f]:
            soft = by_token[t].masks.get(f)
            if soft is None:
                raise BackendError(f"token {t} returned no mask for frame {f}")
            if soft.values.shape != tuple(frame_shape):
                raise BackendError(
                    f"token {t}, frame {f}: mask is {soft.values.shape}, expected {tuple(frame_shape)}"
                )
            softs.append(soft.values)
        mean = softs[0] if len(softs) == 1 else np.mean(softs, axis=0)
        masks.append(threshold(SoftMask(mean), tau))
    return Masklet(expression_id, tuple(masks))

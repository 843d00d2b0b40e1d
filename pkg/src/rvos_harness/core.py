"""Domain types shared across the harness.

Masks are numpy arrays wrapped in small frozen dataclasses. The wrapped
arrays are marked read-only on construction so instances can be shared
between worker threads without copying.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image

DEFAULT_TAU = 0.5

FrameSource = Union[str, Path, bytes, np.ndarray]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FrameRef:
    """One frame of a video. ``source`` is a file path, encoded image bytes
    or an already decoded HxWx3 uint8 array."""

    index: int
    source: FrameSource = field(repr=False)

    def load(self) -> np.ndarray:
        if isinstance(self.source, np.ndarray):
            return self.source
        if isinstance(self.source, bytes):
            img = Image.open(io.BytesIO(self.source))
        else:
            img = Image.open(self.source)
        return np.asarray(img.convert("RGB"))

    def encoded(self) -> bytes:
        """Encoded image bytes, suitable for shipping to a remote service."""
        if isinstance(self.source, bytes):
            return self.source
        if isinstance(self.source, np.ndarray):
            buf = io.BytesIO()
            Image.fromarray(self.source).save(buf, format="PNG")
            return buf.getvalue()
        return Path(self.source).read_bytes()


@dataclass(frozen=True)
class VideoSequence:
    video_id: str
    frames: tuple[FrameRef, ...]
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError(f"video {self.video_id!r} has no frames")
        for i, ref in enumerate(self.frames):
            if ref.index != i:
                raise ValueError(
                    f"video {self.video_id!r}: frame {i} carries index {ref.index}"
                )
        if self.width < 1 or self.height < 1:
            raise ValueError(f"video {self.video_id!r}: bad size {self.width}x{self.height}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @classmethod
    def from_arrays(cls, video_id: str, frames: Sequence[np.ndarray]) -> "VideoSequence":
        if not len(frames):
            raise ValueError(f"video {video_id!r} has no frames")
        h, w = frames[0].shape[:2]
        for i, f in enumerate(frames):
            if f.shape[:2] != (h, w):
                raise ValueError(f"video {video_id!r}: frame {i} is {f.shape[:2]}, expected {(h, w)}")
        refs = tuple(FrameRef(i, np.asarray(f)) for i, f in enumerate(frames))
        return cls(video_id, refs, w, h)

    @classmethod
    def blank(cls, video_id: str, length: int, width: int = 4, height: int = 4) -> "VideoSequence":
        """A video of black frames, handy when only the geometry matters."""
        black = np.zeros((height, width, 3), np.uint8)
        black.setflags(write=False)
        return cls(video_id, tuple(FrameRef(i, black) for i in range(length)), width, height)


@dataclass(frozen=True)
class ReferringExpression:
    expression_id: str
    video_id: str
    text: str
    gt_target_present: Optional[bool] = None
    gt_object_ids: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"expression {self.expression_id!r} has empty text")
        if self.gt_object_ids is not None:
            object.__setattr__(self, "gt_object_ids", tuple(self.gt_object_ids))
        if self.gt_target_present is not None and self.gt_object_ids is not None:
            if bool(self.gt_object_ids) != self.gt_target_present:
                raise ValueError(
                    f"expression {self.expression_id!r}: object ids {self.gt_object_ids} "
                    f"disagree with gt_target_present={self.gt_target_present}"
                )


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """HxW boolean mask, row-major with (0, 0) at the top-left."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen(arr.astype(bool, copy=False)))

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), bool))

    @classmethod
    def from_bits(cls, bits: Sequence[int], width: int, height: int) -> "BinaryMask":
        bits = np.asarray(bits)
        if bits.size != width * height:
            raise ValueError(f"{bits.size} bits for a {width}x{height} mask")
        return cls(bits.reshape(height, width))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bits(self) -> np.ndarray:
        return self.data.ravel()

    def is_empty(self) -> bool:
        return not self.data.any()

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))


@dataclass(frozen=True, eq=False)
class SoftMask:
    """HxW mask of scores in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"soft mask must be 2-D, got shape {arr.shape}")
        if arr.size and (np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("soft mask values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(arr))

    @classmethod
    def from_binary(cls, mask: BinaryMask) -> "SoftMask":
        return cls(mask.data.astype(np.float64))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class Masklet:
    """One binary mask per video frame for a single expression."""

    expression_id: str
    masks: tuple[BinaryMask, ...]

    def __post_init__(self):
        object.__setattr__(self, "masks", tuple(self.masks))
        if not self.masks:
            raise ValueError(f"masklet {self.expression_id!r} has no frames")
        shape = self.masks[0].data.shape
        for i, m in enumerate(self.masks):
            if m.data.shape != shape:
                raise ValueError(
                    f"masklet {self.expression_id!r}: frame {i} is {m.data.shape}, expected {shape}"
                )

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks[0].data.shape

    def is_null(self) -> bool:
        return all(m.is_empty() for m in self.masks)

    def check_aligned(self, video: VideoSequence) -> None:
        if len(self.masks) != len(video):
            raise ValueError(
                f"masklet {self.expression_id!r} has {len(self.masks)} masks, "
                f"video {video.video_id!r} has {len(video)} frames"
            )
        if self.shape != video.shape:
            raise ValueError(
                f"masklet {self.expression_id!r} is {self.shape}, video is {video.shape}"
            )

    def to_array(self) -> np.ndarray:
        return np.stack([m.data for m in self.masks])

    @classmethod
    def from_array(cls, expression_id: str, arr: np.ndarray) -> "Masklet":
        return cls(expression_id, tuple(BinaryMask(a) for a in np.asarray(arr)))


def masklet_null(video: VideoSequence, expression_id: str) -> Masklet:
    """All-empty masklet aligned to ``video``."""
    empty = BinaryMask.zeros(video.height, video.width)
    return Masklet(expression_id, (empty,) * len(video))


def threshold(soft: SoftMask, tau: float = DEFAULT_TAU) -> BinaryMask:
    """Binarize with an inclusive cut: bit = value >= tau."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    return BinaryMask(np.asarray(soft.values) >= tau)

"""Uniform+ frame sampling and clip planning.

A video is covered by ``n_clips`` clips of ``c = g*g + 1`` slots each, for a
total budget of ``t_target`` sampled slots. Every clip is routed to one
[SEG] token, whose id is the clip index.

Long videos (``len >= t_target``) are sampled at a uniform stride and each
sampled frame belongs to exactly one clip; frames between samples are
governed by the nearest sampled frame (ties go to the earlier one).

Short videos are cut into ``n_clips`` contiguous spans whose end frames are
shared with the next span. Each clip lists its span in order and pads the
tail by repeating the span's last frame, so the shared frame occupies the
last slot of clip ``k`` and the first slot of clip ``k + 1`` and carries both
token ids. Spans longer than ``c`` are thinned with both endpoints kept.
When ``len <= n_clips`` spans collapse onto single frames and a frame may be
shared by more than two consecutive clips.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

from .core import VideoSequence


@dataclass(frozen=True)
class SchedulerConfig:
    t_target: int = 100
    n_clips: int = 10

    def __post_init__(self):
        if self.t_target < 1 or self.n_clips < 1:
            raise ValueError("t_target and n_clips must be positive")
        if self.t_target % self.n_clips:
            raise ValueError(f"t_target={self.t_target} is not divisible by n_clips={self.n_clips}")
        c = self.t_target // self.n_clips
        g = math.isqrt(c - 1)
        if c < 2 or g * g != c - 1:
            raise ValueError(f"clip length c={c} is not g*g+1 for an integer g >= 1")

    @property
    def clip_len(self) -> int:
        return self.t_target // self.n_clips

    @property
    def grid(self) -> int:
        return math.isqrt(self.clip_len - 1)


@dataclass(frozen=True)
class Clip:
    key_frame: int
    members: tuple[int, ...]

    @property
    def slots(self) -> tuple[int, ...]:
        return (self.key_frame,) + self.members


@dataclass(frozen=True)
class ClipPlan:
    video_length: int
    config: SchedulerConfig
    sampled: tuple[int, ...]
    clips: tuple[Clip, ...]
    token_assignments: Mapping[int, tuple[int, ...]]

    @property
    def is_short(self) -> bool:
        return self.video_length < self.config.t_target

    @property
    def token_ids(self) -> tuple[int, ...]:
        return tuple(range(len(self.clips)))

    def governed_frames(self, token_id: int) -> tuple[int, ...]:
        """Original frames whose masks are decoded from ``token_id``."""
        if not 0 <= token_id < len(self.clips):
            raise IndexError(f"token id {token_id} out of range")
        return tuple(f for f in range(self.video_length) if token_id in self.token_assignments[f])

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "video_length": self.video_length,
            "t_target": self.config.t_target,
            "n_clips": self.config.n_clips,
            "c": self.config.clip_len,
            "g": self.config.grid,
            "sampled": list(self.sampled),
            "clips": [{"key_frame": c.key_frame, "members": list(c.members)} for c in self.clips],
            "token_assignments": {
                str(f): list(t) for f, t in sorted(self.token_assignments.items())
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _uniform_indices(length: int, count: int) -> list[int]:
    return [i * length // count for i in range(count)]


def _span_boundaries(length: int, n_clips: int) -> list[int]:
    # round-half-up of k * (length - 1) / n_clips, in integers
    return [(2 * k * (length - 1) + n_clips) // (2 * n_clips) for k in range(n_clips + 1)]


def _span_slots(start: int, stop: int, c: int) -> list[int]:
    span = stop - start + 1
    if span <= c:
        return list(range(start, stop + 1)) + [stop] * (c - span)
    d = stop - start
    return [start + (2 * j * d + (c - 1)) // (2 * (c - 1)) for j in range(c)]


def _plan_long(length: int, cfg: SchedulerConfig):
    c = cfg.clip_len
    sampled = _uniform_indices(length, cfg.t_target)
    clip_of = {f: pos // c for pos, f in enumerate(sampled)}
    tokens: dict[int, tuple[int, ...]] = {}
    nxt = 0
    for f in range(length):
        while nxt + 1 < len(sampled) and sampled[nxt + 1] <= f:
            nxt += 1
        lo = sampled[nxt]
        hi = sampled[nxt + 1] if nxt + 1 < len(sampled) else None
        nearest = hi if hi is not None and hi - f < f - lo else lo
        tokens[f] = (clip_of[nearest],)
    return sampled, tokens


def _plan_short(length: int, cfg: SchedulerConfig):
    c = cfg.clip_len
    bounds = _span_boundaries(length, cfg.n_clips)
    sampled: list[int] = []
    tokens: dict[int, list[int]] = {f: [] for f in range(length)}
    for k in range(cfg.n_clips):
        sampled.extend(_span_slots(bounds[k], bounds[k + 1], c))
        for f in range(bounds[k], bounds[k + 1] + 1):
            tokens[f].append(k)
    return sampled, {f: tuple(t) for f, t in tokens.items()}


def plan(video: VideoSequence | int, cfg: SchedulerConfig = SchedulerConfig()) -> ClipPlan:
    """Build the clip plan for a video (or a bare video length)."""
    length = video if isinstance(video, int) else len(video)
    if length < 1:
        raise ValueError("cannot plan an empty video")
    if length >= cfg.t_target:
        sampled, tokens = _plan_long(length, cfg)
    else:
        sampled, tokens = _plan_short(length, cfg)
    c = cfg.clip_len
    clips = tuple(
        Clip(sampled[k * c], tuple(sampled[k * c + 1:(k + 1) * c])) for k in range(cfg.n_clips)
    )
    return ClipPlan(length, cfg, tuple(sampled), clips, tokens)


def governing_tokens(plan: ClipPlan, frame_index: int) -> tuple[int, ...]:
    if not 0 <= frame_index < plan.video_length:
        raise IndexError(f"frame {frame_index} outside a {plan.video_length}-frame video")
    return plan.token_assignments[frame_index]

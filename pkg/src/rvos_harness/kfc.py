"""Key Frame Compression: a clip of ``g*g + 1`` frames becomes its key frame
plus one mosaic holding the other ``g*g`` frames as a row-major grid.

The mosaic has the frame's own size. Tiles are ``(H // g, W // g)`` and are
produced by exact area-average resampling; any leftover right/bottom strip
is zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class CompositeFrame:
    clip_index: int
    key_image: np.ndarray
    mosaic: np.ndarray
    tile_size: tuple[int, int]  # (tile_w, tile_h)
    grid: int


def _area_weights(n_out: int, n_in: int) -> np.ndarray:
    """(n_out, n_in) matrix whose rows average the covered input cells."""
    scale = n_in / n_out
    edges_in = np.arange(n_in + 1, dtype=np.float64)
    lo = np.arange(n_out, dtype=np.float64)[:, None] * scale
    hi = lo + scale
    overlap = np.minimum(hi, edges_in[None, 1:]) - np.maximum(lo, edges_in[None, :-1])
    return np.clip(overlap, 0.0, None) / scale


def area_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Downscale an HxW[xC] uint8 image by area averaging."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"cannot resize to {out_w}x{out_h}")
    img = np.asarray(image)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    rows = _area_weights(out_h, h)
    cols = _area_weights(out_w, w)
    flat = img.reshape(h, w, -1).astype(np.float64)
    out = np.tensordot(rows, flat, axes=(1, 0))          # (out_h, w, c)
    out = np.tensordot(cols, out, axes=(1, 1)).swapaxes(0, 1)  # (out_h, out_w, c)
    out = np.clip(np.rint(out), 0, 255).astype(img.dtype)
    return out.reshape((out_h, out_w) + img.shape[2:])


def mosaic_tile_rect(g: int, tile_index: int, mosaic_dims: tuple[int, int]) -> tuple[int, int, int, int]:
    """Return ``(x, y, w, h)`` of a tile; ``mosaic_dims`` is ``(width, height)``."""
    if g < 1:
        raise ValueError(f"grid size must be >= 1, got {g}")
    if not 0 <= tile_index < g * g:
        raise IndexError(f"tile {tile_index} outside a {g}x{g} grid")
    width, height = mosaic_dims
    tw, th = width // g, height // g
    row, col = divmod(tile_index, g)
    return col * tw, row * th, tw, th


def compress_clip(frames: Sequence[np.ndarray], g: int, clip_index: int = 0) -> CompositeFrame:
    if len(frames) != g * g + 1:
        raise ValueError(f"clip has {len(frames)} frames, expected {g * g + 1} for g={g}")
    key = np.asarray(frames[0])
    h, w = key.shape[:2]
    for i, f in enumerate(frames):
        if np.asarray(f).shape != key.shape:
            raise ValueError(f"frame {i} has shape {np.asarray(f).shape}, key frame {key.shape}")
    tw, th = w // g, h // g
    if tw < 1 or th < 1:
        raise ValueError(f"{w}x{h} frames are too small for a {g}x{g} mosaic")
    mosaic = np.zeros_like(key)
    for t, frame in enumerate(frames[1:]):
        x, y, _, _ = mosaic_tile_rect(g, t, (w, h))
        mosaic[y:y + th, x:x + tw] = area_resize(frame, th, tw)
    return CompositeFrame(clip_index, key, mosaic, (tw, th), g)

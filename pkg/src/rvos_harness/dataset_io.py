"""Dataset layout, mask codecs and prediction persistence.

Layout under ``<root>/<split>/``::

    meta_expressions.json
    JPEGImages/<video_id>/<frame>.jpg      (.png also accepted)
    Annotations/<video_id>/<frame>.png     palette-indexed, pixel = object id

``meta_expressions.json`` follows the public MeViS shape::

    {"schema_version": 1,
     "videos": {<video_id>: {"frames": [...],
                             "expressions": {<exp_key>: {"exp": str, "obj_id": [int]}}}}}

Expression ids are ``"<video_id>/<exp_key>"`` so they are unique across the
split and double as the prediction sub-directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from PIL import Image

from .core import BinaryMask, FrameRef, Masklet, ReferringExpression, SoftMask, VideoSequence

SCHEMA_VERSION = 1
FRAME_EXTS = (".jpg", ".jpeg", ".png")
PREDICTIONS_INDEX = "predictions.json"


class DatasetError(Exception):
    pass


# ---------------------------------------------------------------- RLE codec

@dataclass(frozen=True)
class RleMask:
    """Column-major run lengths, alternating 0-runs and 1-runs, 0-run first."""

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        arr = np.asarray(self.runs, dtype=np.int64).ravel()
        object.__setattr__(self, "runs", tuple(arr.tolist()))
        if arr.size and arr.min() < 0:
            raise ValueError("negative run length")
        total = int(arr.sum())
        if total != self.width * self.height:
            raise ValueError(f"runs sum to {total}, expected {self.width * self.height}")

    def to_string(self) -> str:
        return f"{self.height}x{self.width}:" + ",".join(map(str, self.runs))

    @classmethod
    def from_string(cls, text: str) -> "RleMask":
        try:
            size, runs = text.split(":", 1)
            h, w = (int(v) for v in size.split("x"))
            return cls(w, h, tuple(int(r) for r in runs.split(",") if r))
        except ValueError as exc:
            raise ValueError(f"malformed RLE string {text[:40]!r}: {exc}") from None


def _runs(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and lengths of the maximal runs of a 1-D array."""
    if flat.size == 0:
        return flat[:0], np.zeros(0, np.int64)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [flat.size])))
    return flat[starts], lengths


def rle_encode(mask: BinaryMask | np.ndarray) -> RleMask:
    arr = np.asarray(mask, dtype=bool)
    h, w = arr.shape
    values, lengths = _runs(arr.ravel(order="F"))
    if not values.size or values[0]:
        lengths = np.concatenate(([0], lengths))
    return RleMask(w, h, lengths)


def rle_decode(rle: RleMask) -> BinaryMask:
    total = rle.width * rle.height
    runs = np.fromiter(rle.runs, dtype=np.int64, count=len(rle.runs))
    if runs.sum() != total:
        raise ValueError(f"runs sum to {runs.sum()}, expected {total}")
    values = np.arange(runs.size) % 2 == 1
    flat = np.repeat(values, runs)
    return BinaryMask(flat.reshape((rle.height, rle.width), order="F"))


def quantize_soft(soft: SoftMask) -> np.ndarray:
    return np.rint(np.asarray(soft.values) * 255.0).astype(np.uint8)


def encode_soft_rle(soft: SoftMask) -> str:
    """8-bit quantized soft mask as ``"HxW:v*n,v*n,..."`` in column-major order."""
    q = quantize_soft(soft)
    values, lengths = _runs(q.ravel(order="F"))
    body = ",".join(f"{v}*{n}" for v, n in zip(values.tolist(), lengths.tolist()))
    return f"{soft.height}x{soft.width}:{body}"


def decode_soft_rle(text: str) -> SoftMask:
    try:
        size, body = text.split(":", 1)
        h, w = (int(v) for v in size.split("x"))
        pairs = [p.split("*") for p in body.split(",") if p]
        values = np.array([int(v) for v, _ in pairs], np.int64)
        lengths = np.array([int(n) for _, n in pairs], np.int64)
    except ValueError as exc:
        raise ValueError(f"malformed soft RLE {text[:40]!r}: {exc}") from None
    if lengths.sum() != h * w or (values < 0).any() or (values > 255).any() or (lengths < 0).any():
        raise ValueError(f"soft RLE does not describe a {h}x{w} 8-bit mask")
    flat = np.repeat(values, lengths).astype(np.float64) / 255.0
    return SoftMask(flat.reshape((h, w), order="F"))


# ---------------------------------------------------------------- manifest

@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    split: str
    videos: tuple[VideoSequence, ...]
    expressions: tuple[ReferringExpression, ...]

    def __post_init__(self):
        ids = [v.video_id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate video ids")
        known = set(ids)
        seen = set()
        for e in self.expressions:
            if e.video_id not in known:
                raise DatasetError(f"expression {e.expression_id!r} references unknown video {e.video_id!r}")
            if e.expression_id in seen:
                raise DatasetError(f"duplicate expression id {e.expression_id!r}")
            seen.add(e.expression_id)

    @property
    def split_dir(self) -> Path:
        return Path(self.root) / self.split

    @property
    def has_ground_truth(self) -> bool:
        return all(e.gt_target_present is not None for e in self.expressions)

    def video(self, video_id: str) -> VideoSequence:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)

    def expression(self, expression_id: str) -> ReferringExpression:
        for e in self.expressions:
            if e.expression_id == expression_id:
                return e
        raise KeyError(expression_id)

    def counts(self) -> dict:
        return {
            "n_target": sum(1 for e in self.expressions if e.gt_target_present),
            "n_notarget": sum(1 for e in self.expressions if e.gt_target_present is False),
        }


def _find_frame(directory: Path, name: str) -> Path:
    for ext in FRAME_EXTS:
        p = directory / f"{name}{ext}"
        if p.is_file():
            return p
    p = directory / name
    if p.is_file():
        return p
    raise DatasetError(f"missing frame {name!r} in {directory}")


def load_manifest(root: str | Path, split: str) -> DatasetManifest:
    root = Path(root)
    split_dir = root / split
    meta_path = split_dir / "meta_expressions.json"
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise DatasetError(f"missing {meta_path}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{meta_path}: {exc}") from None
    version = meta.get("schema_version", SCHEMA_VERSION) if isinstance(meta, dict) else None
    if version != SCHEMA_VERSION:
        raise DatasetError(f"{meta_path}: unsupported schema_version {version!r}")
    vids = meta.get("videos")
    if not isinstance(vids, dict):
        raise DatasetError(f"{meta_path}: 'videos' must be an object")
    has_gt = (split_dir / "Annotations").is_dir()

    videos, expressions = [], []
    for video_id, entry in vids.items():
        vdir = split_dir / "JPEGImages" / video_id
        if not vdir.is_dir():
            raise DatasetError(f"video {video_id!r}: missing frame directory {vdir}")
        try:
            names = list(entry["frames"])
            exps = entry["expressions"]
        except (KeyError, TypeError):
            raise DatasetError(f"video {video_id!r}: needs 'frames' and 'expressions'") from None
        if not names:
            raise DatasetError(f"video {video_id!r} has no frames")
        paths = [_find_frame(vdir, str(n)) for n in names]
        sizes = set()
        for p in paths:
            with Image.open(p) as im:
                sizes.add(im.size)
        if len(sizes) != 1:
            raise DatasetError(f"video {video_id!r}: frames differ in size {sorted(sizes)}")
        (w, h), = sizes
        videos.append(VideoSequence(video_id, tuple(FrameRef(i, p) for i, p in enumerate(paths)), w, h))
        for key, e in exps.items():
            try:
                text = e["exp"]
                obj_ids = tuple(int(o) for o in e.get("obj_id", []))
            except (KeyError, TypeError, ValueError):
                raise DatasetError(f"expression {video_id}/{key}: ill-formed entry") from None
            try:
                expressions.append(ReferringExpression(
                    expression_id=f"{video_id}/{key}",
                    video_id=video_id,
                    text=text,
                    gt_target_present=bool(obj_ids) if has_gt else None,
                    gt_object_ids=obj_ids if has_gt else None,
                ))
            except ValueError as exc:
                raise DatasetError(str(exc)) from None
    return DatasetManifest(root, split, tuple(videos), tuple(expressions))


def frame_names(video: VideoSequence) -> list[str]:
    out = []
    for ref in video.frames:
        out.append(Path(ref.source).stem if isinstance(ref.source, (str, Path)) else f"{ref.index:05d}")
    return out


def load_annotation(path: str | Path) -> np.ndarray:
    """Object-id map from a palette PNG (the palette index is the id)."""
    with Image.open(path) as im:
        if im.mode not in ("P", "L"):
            raise DatasetError(f"{path}: expected a palette-indexed PNG, got mode {im.mode}")
        return np.asarray(im)


def load_gt_masklet(manifest: DatasetManifest, expr: ReferringExpression) -> Optional[Masklet]:
    """Union of the expression's objects per frame; None for no-target expressions."""
    if expr.gt_target_present is None:
        raise DatasetError(f"{manifest.split_dir} has no annotations")
    if not expr.gt_target_present:
        return None
    video = manifest.video(expr.video_id)
    adir = manifest.split_dir / "Annotations" / video.video_id
    ids = np.array(expr.gt_object_ids)
    masks = []
    for name in frame_names(video):
        p = adir / f"{name}.png"
        if not p.is_file():
            masks.append(BinaryMask.zeros(video.height, video.width))
            continue
        ann = load_annotation(p)
        if ann.shape != video.shape:
            raise DatasetError(f"{p}: annotation is {ann.shape}, frames are {video.shape}")
        masks.append(BinaryMask(np.isin(ann, ids)))
    return Masklet(expr.expression_id, tuple(masks))


# ---------------------------------------------------------------- predictions

def write_mask_png(path: Path, mask: BinaryMask) -> None:
    Image.fromarray(np.where(mask.data, 255, 0).astype(np.uint8), mode="L").save(path, optimize=False)


def read_mask_png(path: Path) -> BinaryMask:
    with Image.open(path) as im:
        return BinaryMask(np.asarray(im.convert("L")) > 127)


def write_predictions(manifest: DatasetManifest, masklets: Mapping[str, Masklet] | Iterable[Masklet],
                      out_dir: str | Path) -> Path:
    """Write one PNG per frame under ``out_dir/<video_id>/<exp_key>/`` plus an index."""
    if not isinstance(masklets, Mapping):
        masklets = {m.expression_id: m for m in masklets}
    out_dir = Path(out_dir)
    missing = [e.expression_id for e in manifest.expressions if e.expression_id not in masklets]
    if missing:
        raise DatasetError(f"no prediction for {missing}")
    index = {"schema_version": SCHEMA_VERSION, "split": manifest.split, "expressions": {}}
    for expr in manifest.expressions:
        video = manifest.video(expr.video_id)
        m = masklets[expr.expression_id]
        m.check_aligned(video)
        names = frame_names(video)
        write_expression(out_dir, expr.expression_id, m, names)
        index["expressions"][expr.expression_id] = {
            "video_id": expr.video_id,
            "frames": names,
            "null": m.is_null(),
        }
    (out_dir / PREDICTIONS_INDEX).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return out_dir


def write_expression(out_dir: Path, expression_id: str, masklet: Masklet, names: Sequence[str]) -> None:
    edir = Path(out_dir) / expression_id
    edir.mkdir(parents=True, exist_ok=True)
    for name, mask in zip(names, masklet.masks):
        write_mask_png(edir / f"{name}.png", mask)


def read_predictions(manifest: DatasetManifest, out_dir: str | Path) -> dict[str, Masklet]:
    out_dir = Path(out_dir)
    try:
        index = json.loads((out_dir / PREDICTIONS_INDEX).read_text())
    except FileNotFoundError:
        raise DatasetError(f"missing {out_dir / PREDICTIONS_INDEX}") from None
    if index.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"unsupported predictions schema {index.get('schema_version')!r}")
    entries = index.get("expressions", {})
    result = {}
    for expr in manifest.expressions:
        if expr.expression_id not in entries:
            raise DatasetError(f"predictions lack expression {expr.expression_id!r}")
        video = manifest.video(expr.video_id)
        edir = out_dir / expr.expression_id
        masks = []
        for name in frame_names(video):
            p = edir / f"{name}.png"
            if not p.is_file():
                raise DatasetError(f"missing prediction frame {p}")
            m = read_mask_png(p)
            if m.data.shape != video.shape:
                raise DatasetError(f"{p}: mask is {m.data.shape}, video is {video.shape}")
            masks.append(m)
        result[expr.expression_id] = Masklet(expr.expression_id, tuple(masks))
    return result

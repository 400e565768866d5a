"""RGBA frame sequences and TASD-style manifests.

A clip lives on disk as ``frame_0000.png, frame_0001.png, ...`` (8-bit RGBA).
A manifest is a UTF-8 JSON array of sample records.
"""

from __future__ import annotations

import json
import os
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    EmptyInputError,
    FormatError,
    GapError,
    ILDiffError,
    ManifestValidationError,
    ShapeError,
)

FRAME_PATTERN = re.compile(r"^frame_(\d{4,})\.png$")


@dataclass
class FrameClip:
    """N RGBA frames with channel values in [0, 1].

    ``frames`` has shape (N, H, W, 4). Alpha-only clips keep RGB at 1.0 so
    that the stored PNGs are a white matte with the real transparency.
    """

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 4 or frames.shape[-1] != 4:
            raise ShapeError(f"expected (N, H, W, 4) frames, got {frames.shape}")
        if frames.shape[0] < 1:
            raise ShapeError("a clip needs at least one frame")
        if not np.all(np.isfinite(frames)):
            raise ShapeError("frame values must be finite")
        if frames.min() < 0.0 or frames.max() > 1.0:
            raise ShapeError("frame values must lie in [0, 1]")
        self.frames = frames

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def rgb(self) -> np.ndarray:
        return self.frames[..., :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.frames[..., 3]

    @classmethod
    def from_rgb(cls, rgb) -> "FrameClip":
        rgb = np.asarray(rgb, dtype=np.float32)
        ones = np.ones(rgb.shape[:-1] + (1,), dtype=np.float32)
        return cls(np.concatenate([rgb, ones], axis=-1))

    @classmethod
    def from_alpha(cls, alpha) -> "FrameClip":
        alpha = np.asarray(alpha, dtype=np.float32)
        if alpha.ndim == 4 and alpha.shape[-1] == 1:
            alpha = alpha[..., 0]
        white = np.ones(alpha.shape + (3,), dtype=np.float32)
        return cls(np.concatenate([white, alpha[..., None]], axis=-1))


def _frame_files(path: Path) -> list[Path]:
    indexed = {}
    for entry in path.iterdir():
        m = FRAME_PATTERN.match(entry.name)
        if m:
            indexed[int(m.group(1))] = entry
    if not indexed:
        raise GapError(f"{path}: no frame_XXXX.png files")
    missing = sorted(set(range(max(indexed) + 1)) - set(indexed))
    if missing:
        raise GapError(f"{path}: frame sequence has gaps at indices {missing}")
    return [indexed[i] for i in range(len(indexed))]


def load_clip(path) -> FrameClip:
    path = Path(path)
    frames = []
    for f in _frame_files(path):
        with Image.open(f) as img:
            if img.mode != "RGBA":
                raise FormatError(f"{f}: expected RGBA, got {img.mode}")
            arr = np.asarray(img, dtype=np.uint8)
        if frames and arr.shape != frames[0].shape:
            raise ShapeError(f"{f}: size {arr.shape[:2]} differs from {frames[0].shape[:2]}")
        frames.append(arr)
    return FrameClip(np.stack(frames).astype(np.float32) / 255.0)


def quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_clip(clip: FrameClip, path) -> None:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(quantize(clip.frames)):
            Image.fromarray(frame, mode="RGBA").save(path / f"frame_{i:04d}.png")
    except OSError as exc:
        raise ILDiffError(f"cannot write clip to {path}: {exc}") from exc


@dataclass
class ManifestRecord:
    id: str
    frames_dir: str
    frame_count: int
    caption_en: str
    trigger_words: list[str]
    keyframe_index: int
    caption_cn: str = ""

    def validate(self, root: Path | None = None, check_files: bool = False) -> None:
        def fail(msg):
            raise ManifestValidationError(f"record {self.id!r}: {msg}")

        if not isinstance(self.id, str) or not self.id:
            fail("id must be a non-empty string")
        if not isinstance(self.frame_count, int) or self.frame_count < 1:
            fail(f"frame_count must be a positive integer, got {self.frame_count!r}")
        if not isinstance(self.keyframe_index, int) or self.keyframe_index < 0:
            fail(f"keyframe_index must be a non-negative integer, got {self.keyframe_index!r}")
        if self.keyframe_index >= self.frame_count:
            fail(f"keyframe_index {self.keyframe_index} >= frame_count {self.frame_count}")
        if not isinstance(self.trigger_words, list) or not self.trigger_words:
            fail("trigger_words must be a non-empty list")
        if not all(isinstance(w, str) and w for w in self.trigger_words):
            fail("trigger_words must be non-empty strings")
        if not isinstance(self.caption_en, str) or not isinstance(self.caption_cn, str):
            fail("captions must be strings")
        if check_files:
            frames_dir = Path(self.frames_dir)
            if root is not None and not frames_dir.is_absolute():
                frames_dir = root / frames_dir
            try:
                n = len(_frame_files(frames_dir))
            except (GapError, OSError) as exc:
                fail(f"frames_dir unreadable: {exc}")
            if n != self.frame_count:
                fail(f"frame_count {self.frame_count} but {n} frame files in {frames_dir}")


_RECORD_FIELDS = ("id", "frames_dir", "frame_count", "caption_en", "caption_cn",
                  "trigger_words", "keyframe_index")


def load_manifest(path, check_files: bool = False) -> list[ManifestRecord]:
    """Read and validate a manifest.

    With ``check_files`` the frame count of every record is compared against
    the files in its ``frames_dir`` (relative paths resolve against the
    manifest's directory).
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestValidationError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ManifestValidationError(f"{path}: manifest must be a JSON array")
    records = []
    for i, obj in enumerate(raw):
        if not isinstance(obj, dict):
            raise ManifestValidationError(f"{path}: entry {i} is not an object")
        rid = obj.get("id", f"#{i}")
        missing = [k for k in _RECORD_FIELDS if k not in obj and k != "caption_cn"]
        if missing:
            raise ManifestValidationError(f"record {rid!r}: missing fields {missing}")
        extra = set(obj) - set(_RECORD_FIELDS)
        if extra:
            raise ManifestValidationError(f"record {rid!r}: unknown fields {sorted(extra)}")
        rec = ManifestRecord(**obj)
        rec.validate(root=path.parent, check_files=check_files)
        records.append(rec)
    return records


def save_manifest(records: list[ManifestRecord], path) -> None:
    path = Path(path)
    data = [asdict(r) for r in records]
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(data, fh, ensure_ascii=False, indent=1)
    os.replace(tmp, path)


@dataclass
class ManifestStats:
    sample_count: int
    avg_description_length: float
    avg_frame_count: float
    trigger_word_frequencies: dict[str, int] = field(default_factory=dict)

    def top_trigger_words(self, k: int = 15) -> list[tuple[str, int]]:
        return sorted(self.trigger_word_frequencies.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


# Published TASD figures, kept for reference output only.
TASD_REFERENCE = {
    "sample_count": 320_000,
    "avg_description_length": 96.25,
    "avg_frame_count": 16.71,
    "trigger_word_count": 115,
    "annotation_languages": ("En", "Cn"),
}


def manifest_stats(records: list[ManifestRecord]) -> ManifestStats:
    """Sample count, mean caption length (characters of ``caption_en``),
    mean frame count and per-record trigger word frequencies."""
    if not records:
        raise EmptyInputError("manifest_stats needs at least one record")
    n = len(records)
    freqs = Counter()
    for r in records:
        freqs.update(set(r.trigger_words))
    return ManifestStats(
        sample_count=n,
        avg_description_length=sum(len(r.caption_en) for r in records) / n,
        avg_frame_count=sum(r.frame_count for r in records) / n,
        trigger_word_frequencies=dict(freqs),
    )

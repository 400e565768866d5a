"""Procedural animated stickers with exact ground-truth alpha.

Sprites are flat-colored disks, rings and rounded rectangles moving over a
single-color background. A semi-open sprite has a hole whose pixels keep the
background color but have alpha 0, which is exactly the case where color
alone cannot tell "hole" from "body".

Coverage is integrated with 4x4 supersampling so boundaries carry
fractional alpha.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dataset_io import FrameClip, ManifestRecord, save_clip, save_manifest
from .errors import ILDiffError, ParameterError, SpecError

log = logging.getLogger(__name__)

SHAPES = ("disk", "ring", "rounded-rect")
SUPERSAMPLE = 4

PALETTE = {
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
    "red": (0.9, 0.15, 0.15),
    "green": (0.2, 0.75, 0.3),
    "blue": (0.15, 0.3, 0.9),
    "yellow": (0.95, 0.85, 0.2),
    "purple": (0.6, 0.25, 0.75),
    "orange": (0.95, 0.55, 0.1),
    "gray": (0.5, 0.5, 0.5),
}
COLOR_CN = {
    "white": "白色", "black": "黑色", "red": "红色", "green": "绿色", "blue": "蓝色",
    "yellow": "黄色", "purple": "紫色", "orange": "橙色", "gray": "灰色",
}
SHAPE_CN = {"disk": "圆盘", "ring": "圆环", "rounded-rect": "圆角方块"}
DIRECTION_CN = {"left": "向左移动", "right": "向右移动", "up": "向上移动", "down": "向下移动",
                "in place": "原地晃动"}


@dataclass(frozen=True)
class SpriteSpec:
    """One sprite. ``center`` is (x, y) in pixels at frame 0; ``size`` is the
    radius (disk, ring) or half-width (rounded-rect)."""

    shape: str
    fill_color: tuple[float, float, float]
    center: tuple[float, float]
    size: float
    velocity: tuple[float, float] = (0.0, 0.0)
    wobble_amplitude: float = 0.0
    wobble_period: float = 8.0
    semi_open: bool = False
    hole_ratio: float = 0.5
    aspect: float = 1.0
    corner_ratio: float = 0.35

    def position(self, k: int) -> tuple[float, float]:
        x = self.center[0] + self.velocity[0] * k
        y = self.center[1] + self.velocity[1] * k
        if self.wobble_amplitude:
            y += self.wobble_amplitude * math.sin(2.0 * math.pi * k / self.wobble_period)
        return x, y

    @property
    def half_extent(self) -> tuple[float, float]:
        if self.shape == "rounded-rect":
            return self.size, self.size * self.aspect
        return self.size, self.size

    def _outer_sdf(self, px, py, cx, cy):
        if self.shape == "rounded-rect":
            return _rounded_rect_sdf(px - cx, py - cy, *self.half_extent,
                                     self.corner_ratio * min(self.half_extent))
        return np.hypot(px - cx, py - cy) - self.size

    def _inner_sdf(self, px, py, cx, cy):
        r = self.hole_ratio
        if self.shape == "rounded-rect":
            hx, hy = self.half_extent
            return _rounded_rect_sdf(px - cx, py - cy, hx * r, hy * r,
                                     self.corner_ratio * min(hx, hy) * r)
        return np.hypot(px - cx, py - cy) - self.size * r

    def body_sdf(self, px, py, k: int):
        """Signed distance to the sprite body at frame ``k`` (negative inside)."""
        cx, cy = self.position(k)
        outer = self._outer_sdf(px, py, cx, cy)
        if self.has_hole:
            return np.maximum(outer, -self._inner_sdf(px, py, cx, cy))
        return outer

    def hole_sdf(self, px, py, k: int):
        cx, cy = self.position(k)
        return self._inner_sdf(px, py, cx, cy)

    @property
    def has_hole(self) -> bool:
        return self.semi_open


def _rounded_rect_sdf(dx, dy, hx, hy, rc):
    qx = np.abs(dx) - (hx - rc)
    qy = np.abs(dy) - (hy - rc)
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    return outside + inside - rc


@dataclass(frozen=True)
class ClipSpec:
    height: int
    width: int
    frame_count: int
    background_color: tuple[float, float, float]
    sprites: tuple[SpriteSpec, ...]
    seed: int = 0

    def validate(self) -> None:
        if self.frame_count < 2:
            raise SpecError(f"frame_count must be >= 2, got {self.frame_count}")
        if self.height < 1 or self.width < 1:
            raise SpecError("canvas must be at least 1x1")
        if not self.sprites:
            raise SpecError("a clip needs at least one sprite")
        if not all(0.0 <= c <= 1.0 for c in self.background_color):
            raise SpecError("background_color must lie in [0, 1]")
        for i, s in enumerate(self.sprites):
            if s.shape not in SHAPES:
                raise SpecError(f"sprite {i}: unknown shape {s.shape!r}")
            if s.semi_open and s.shape == "disk":
                raise SpecError(f"sprite {i}: a disk cannot be semi-open")
            if not 0.0 < s.hole_ratio < 1.0:
                raise SpecError(f"sprite {i}: hole_ratio must be in (0, 1)")
            if s.size <= 0 or s.aspect <= 0:
                raise SpecError(f"sprite {i}: size and aspect must be positive")
            if not all(0.0 <= c <= 1.0 for c in s.fill_color):
                raise SpecError(f"sprite {i}: fill_color must lie in [0, 1]")
            if s.wobble_amplitude and s.wobble_period <= 0:
                raise SpecError(f"sprite {i}: wobble_period must be positive")
            hx, hy = s.half_extent
            for k in range(self.frame_count):
                x, y = s.position(k)
                if x - hx < 1 or y - hy < 1 or x + hx > self.width - 1 or y + hy > self.height - 1:
                    raise SpecError(
                        f"sprite {i} leaves the canvas at frame {k} (center {x:.2f}, {y:.2f})")


class GeneratedClip(NamedTuple):
    rgb: FrameClip
    alpha: FrameClip
    holes: FrameClip


def _sample_grid(height: int, width: int):
    offs = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    ys = (np.arange(height)[:, None] + offs[None, :]).reshape(-1)
    xs = (np.arange(width)[:, None] + offs[None, :]).reshape(-1)
    py, px = np.meshgrid(ys, xs, indexing="ij")
    return px, py


def _coverage(inside: np.ndarray, height: int, width: int) -> np.ndarray:
    s = SUPERSAMPLE
    return inside.reshape(height, s, width, s).mean(axis=(1, 3))


def generate_clip(spec: ClipSpec) -> GeneratedClip:
    """Render ``spec`` into (rgb, alpha, holes).

    ``rgb`` has alpha 1 everywhere, ``alpha`` is the ground-truth matte and
    ``holes`` marks pixels lying entirely inside a semi-open hole (where the
    matte is exactly 0). Rendering is analytic, so equal specs give
    bit-identical output.
    """
    spec.validate()
    H, W, N = spec.height, spec.width, spec.frame_count
    px, py = _sample_grid(H, W)
    bg = np.asarray(spec.background_color, dtype=np.float64)
    rgb = np.empty((N, H, W, 3))
    alpha = np.empty((N, H, W))
    holes = np.empty((N, H, W))
    for k in range(N):
        color = np.broadcast_to(bg, (H, W, 3)).copy()
        a_total = np.zeros((H, W))
        hole = np.zeros((H, W), dtype=bool)
        for s in spec.sprites:
            a = _coverage(s.body_sdf(px, py, k) <= 0.0, H, W)
            color = a[..., None] * np.asarray(s.fill_color) + (1.0 - a[..., None]) * color
            a_total = a + (1.0 - a) * a_total
            if s.has_hole:
                hole |= _coverage(s.hole_sdf(px, py, k) <= 0.0, H, W) == 1.0
        rgb[k] = color
        alpha[k] = a_total
        holes[k] = hole & (a_total == 0.0)
    return GeneratedClip(
        rgb=FrameClip.from_rgb(rgb),
        alpha=FrameClip.from_alpha(alpha),
        holes=FrameClip.from_alpha(holes),
    )


@dataclass
class ClipTemplate:
    """Ranges from which :func:`sample_clip_spec` draws clip specs."""

    height: int = 64
    width: int = 64
    frame_count: tuple[int, int] = (8, 8)
    sprite_count: tuple[int, int] = (1, 2)
    size: tuple[float, float] = (9.0, 15.0)
    max_speed: float = 1.5
    wobble_amplitude: tuple[float, float] = (0.0, 2.0)
    semi_open_prob: float = 0.5
    hole_ratio: tuple[float, float] = (0.45, 0.6)
    shapes: tuple[str, ...] = SHAPES
    colors: tuple[str, ...] = field(default_factory=lambda: tuple(PALETTE))

    @classmethod
    def from_dict(cls, d: dict) -> "ClipTemplate":
        kw = {}
        for k, v in d.items():
            if k not in cls.__dataclass_fields__:
                raise ParameterError(f"unknown template field {k!r}")
            kw[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)


def _direction(v) -> str:
    vx, vy = v
    if max(abs(vx), abs(vy)) < 0.25:
        return "in place"
    if abs(vx) >= abs(vy):
        return "right" if vx > 0 else "left"
    return "down" if vy > 0 else "up"


def _center_range(lo_ext, hi_limit, disp_min, disp_max):
    return lo_ext - disp_min, hi_limit - disp_max


def sample_clip_spec(template: ClipTemplate, seed: int) -> tuple[ClipSpec, list[tuple[str, str, str]]]:
    """Draw a valid clip spec; also returns (color, shape, direction) per sprite."""
    rng = np.random.default_rng(seed)
    N = int(rng.integers(template.frame_count[0], template.frame_count[1] + 1))
    H, W = template.height, template.width
    bg_name = str(rng.choice(template.colors))
    n_sprites = int(rng.integers(template.sprite_count[0], template.sprite_count[1] + 1))
    sprites, words = [], []
    for _ in range(n_sprites):
        shape = str(rng.choice(template.shapes))
        fill_name = str(rng.choice([c for c in template.colors if c != bg_name]))
        size = float(rng.uniform(*template.size))
        aspect = float(rng.uniform(0.7, 1.0)) if shape == "rounded-rect" else 1.0
        semi_open = shape != "disk" and bool(rng.random() < template.semi_open_prob)
        hole_ratio = float(rng.uniform(*template.hole_ratio))
        amp = float(rng.uniform(*template.wobble_amplitude))
        period = float(max(N, 2))
        hx, hy = size, size * aspect
        for _attempt in range(8):
            speed = float(rng.uniform(0.0, template.max_speed))
            angle = float(rng.uniform(0.0, 2.0 * math.pi))
            v = (speed * math.cos(angle), speed * math.sin(angle))
            ks = np.arange(N)
            dx = v[0] * ks
            dy = v[1] * ks + amp * np.sin(2.0 * math.pi * ks / period)
            x_lo, x_hi = _center_range(1 + hx, W - 1 - hx, dx.min(), dx.max())
            y_lo, y_hi = _center_range(1 + hy, H - 1 - hy, dy.min(), dy.max())
            if x_lo < x_hi and y_lo < y_hi:
                break
            amp *= 0.5
            size = max(template.size[0], size * 0.8)
            hx, hy = size, size * aspect
        else:
            v, amp = (0.0, 0.0), 0.0
            x_lo, x_hi, y_lo, y_hi = 1 + hx, W - 1 - hx, 1 + hy, H - 1 - hy
        # shrink the bounds slightly so float rounding never puts the sprite on the edge
        cx = float(rng.uniform(x_lo + 1e-6, x_hi - 1e-6))
        cy = float(rng.uniform(y_lo + 1e-6, y_hi - 1e-6))
        sprites.append(SpriteSpec(
            shape=shape, fill_color=PALETTE[fill_name], center=(cx, cy), size=size,
            velocity=v, wobble_amplitude=amp, wobble_period=period,
            semi_open=semi_open, hole_ratio=hole_ratio, aspect=aspect,
        ))
        words.append((fill_name, shape, _direction(v)))
    spec = ClipSpec(H, W, N, PALETTE[bg_name], tuple(sprites), seed)
    spec.validate()
    return spec, words


def _captions(words) -> tuple[str, str]:
    en = " and ".join(f"a {c} {s} moving {d}" if d != "in place" else f"a {c} {s} wobbling in place"
                      for c, s, d in words)
    cn = "，".join(f"一个{COLOR_CN[c]}{SHAPE_CN[s]}{DIRECTION_CN[d]}" for c, s, d in words)
    return en, cn


def generate_dataset(count: int, template: ClipTemplate, seed: int, out) -> Path:
    """Write ``count`` clips under ``out`` plus ``out/manifest.json``.

    Layout: ``{id}/rgb``, ``{id}/alpha`` and ``{id}/holes`` frame directories.
    Clip ``i`` is drawn with seed ``seed + i``.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    out = Path(out)
    records = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            spec, words = sample_clip_spec(template, seed + i)
            clip = generate_clip(spec)
            cid = f"clip_{i:05d}"
            save_clip(clip.rgb, out / cid / "rgb")
            save_clip(clip.alpha, out / cid / "alpha")
            save_clip(clip.holes, out / cid / "holes")
            en, cn = _captions(words)
            records.append(ManifestRecord(
                id=cid,
                frames_dir=f"{cid}/rgb",
                frame_count=spec.frame_count,
                caption_en=en,
                caption_cn=cn,
                trigger_words=list(dict.fromkeys(s for _, s, _ in words)),
                keyframe_index=spec.frame_count // 2,
            ))
        manifest = out / "manifest.json"
        save_manifest(records, manifest)
    except (OSError, ILDiffError) as exc:
        done = [r.id for r in records]
        log.warning("dataset generation aborted; completed clips: %s", done)
        raise ILDiffError(f"dataset generation failed after {len(done)} clips: {exc}") from exc
    return manifest

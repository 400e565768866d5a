"""Layout adapter: frozen teacher, distilled student, temporal 3-D conv stack
and the projection into latent space.

Feature clips are (N, C_f, h_f, w_f) tensors; batched clips add a leading
B axis. Feature resolution is 1/4 of the frame resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ._rng import seeded
from .errors import ConfigError, ParameterError, ShapeError


@dataclass
class AdapterConfig:
    temporal_depth: int = 5
    mask_ratio: float = 0.75
    groups: int = 8
    feature_channels: int = 32
    patch_size: int = 8
    student_width: int = 16
    teacher_width: int = 96
    teacher_seed: int = 1234

    def validate(self) -> None:
        if self.temporal_depth < 0:
            raise ConfigError("temporal_depth must be >= 0")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError("mask_ratio must be in [0, 1)")
        if self.groups < 1 or self.feature_channels % self.groups:
            raise ConfigError(
                f"groups={self.groups} does not divide feature_channels={self.feature_channels}")
        if self.patch_size < 1:
            raise ConfigError("patch_size must be positive")


_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def sobel_magnitude(rgb: torch.Tensor) -> torch.Tensor:
    gray = rgb.mean(dim=1, keepdim=True)
    kx = _SOBEL_X.to(rgb.dtype)[None, None]
    ky = kx.transpose(-1, -2)
    padded = F.pad(gray, (1, 1, 1, 1), mode="replicate")
    gx = F.conv2d(padded, kx)
    gy = F.conv2d(padded, ky)
    return torch.sqrt(gx * gx + gy * gy + 1e-12)


class TeacherEncoder(nn.Module):
    """Frozen stand-in for a large segmentation image encoder.

    A seeded random conv net (dilated final stage for a wide receptive field)
    plus one analytic channel: Sobel edge magnitude pooled to feature
    resolution. Parameters never receive gradients.
    """

    def __init__(self, feature_channels: int = 32, width: int = 96, seed: int = 1234):
        super().__init__()
        w = width
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.net = nn.Sequential(
                nn.Conv2d(3, w // 2, 3, padding=1), nn.ReLU(),
                nn.Conv2d(w // 2, w, 4, stride=2, padding=1), nn.ReLU(),
                nn.Conv2d(w, w, 4, stride=2, padding=1), nn.ReLU(),
                nn.Conv2d(w, w, 3, padding=2, dilation=2), nn.ReLU(),
                nn.Conv2d(w, feature_channels - 1, 1),
            )
            for m in self.net:
                if isinstance(m, nn.Conv2d):
                    nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                    nn.init.uniform_(m.bias, -0.1, 0.1)
        self.requires_grad_(False)

    def forward(self, rgb):
        edges = F.avg_pool2d(sobel_magnitude(rgb), 4)
        return torch.cat([self.net(rgb), edges], dim=1)


class StudentEncoder(nn.Module):
    def __init__(self, feature_channels: int = 32, width: int = 16):
        super().__init__()
        w = width
        self.net = nn.Sequential(
            nn.Conv2d(3, w, 4, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(2 * w, feature_channels, 3, padding=1),
        )

    def forward(self, rgb):
        return self.net(rgb)


class FramewiseGroupNorm(nn.GroupNorm):
    """GroupNorm on (B, C, N, h, w) with statistics taken per frame.

    Pooling statistics over time would let every frame influence every
    other, defeating the finite temporal receptive field of the conv stack.
    """

    def forward(self, x):
        b, c, n, h, w = x.shape
        y = super().forward(x.transpose(1, 2).reshape(b * n, c, h, w))
        return y.reshape(b, n, c, h, w).transpose(1, 2)


class TemporalStack(nn.Module):
    """``depth`` blocks of Conv3d(3x3x3, zero padding) -> GroupNorm -> ReLU."""

    def __init__(self, channels: int, depth: int, groups: int):
        super().__init__()
        if groups < 1 or channels % groups:
            raise ConfigError(f"groups={groups} does not divide channels={channels}")
        self.depth = depth
        self.blocks = nn.ModuleList(
            nn.Sequential(
                nn.Conv3d(channels, channels, 3, padding=1),
                FramewiseGroupNorm(groups, channels),
                nn.ReLU(),
            )
            for _ in range(depth)
        )

    def forward(self, feats):
        """feats: (B, N, C, h, w) -> same shape."""
        if self.depth == 0:
            return feats
        x = feats.transpose(1, 2)
        for block in self.blocks:
            x = block(x)
        return x.transpose(1, 2)


class LatentProjection(nn.Module):
    """Per-frame 2-D conv to latent channels, then adaptive average pooling."""

    def __init__(self, feature_channels: int, latent_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(feature_channels, latent_channels, 3, padding=1)
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)

    def forward(self, feats, latent_size):
        return F.adaptive_avg_pool2d(self.conv(feats), latent_size)


class LayoutAdapter(nn.Module):
    def __init__(self, config: AdapterConfig, latent_channels: int = 4, seed: int | None = None):
        super().__init__()
        config.validate()
        c = config.feature_channels
        self.config = config
        self.student = seeded(seed, "student", lambda: StudentEncoder(c, config.student_width))
        self.head = seeded(seed, "head", lambda: nn.Conv2d(c, c, 1))
        self.temporal = seeded(seed, "temporal",
                               lambda: TemporalStack(c, config.temporal_depth, config.groups))
        self.projection = seeded(seed, "projection", lambda: LatentProjection(c, latent_channels))

    def encode_frames(self, rgb):
        """Student features after the linear distillation head, per frame."""
        return self.head(self.student(rgb))

    def guidance_from_features(self, feats, latent_size):
        """feats: (B, N, C, h, w) -> guidance (B, N, C_z, h_z, w_z)."""
        mixed = self.temporal(feats)
        b, n = mixed.shape[:2]
        g = self.projection(mixed.reshape(b * n, *mixed.shape[2:]), latent_size)
        return g.reshape(b, n, *g.shape[1:])

    def forward(self, rgb, latent_size=None):
        """rgb: (B, N, 3, H, W) -> guidance (B, N, C_z, H/4, W/4)."""
        b, n = rgb.shape[:2]
        if latent_size is None:
            latent_size = (rgb.shape[-2] // 4, rgb.shape[-1] // 4)
        feats = self.encode_frames(rgb.reshape(b * n, *rgb.shape[2:]))
        return self.guidance_from_features(feats.reshape(b, n, *feats.shape[1:]), latent_size)


def _check_rgb(frame):
    if frame.ndim == 3:
        frame = frame[None]
    if frame.ndim != 4 or frame.shape[1] != 3:
        raise ShapeError(f"expected (N, 3, H, W) frames, got {tuple(frame.shape)}")
    if frame.shape[-2] % 4 or frame.shape[-1] % 4:
        raise ShapeError(f"frame size {tuple(frame.shape[-2:])} is not divisible by 4")
    return frame


def teacher_features(frame: torch.Tensor, teacher: TeacherEncoder) -> torch.Tensor:
    with torch.no_grad():
        return teacher(_check_rgb(frame))


def student_features(frame: torch.Tensor, adapter: LayoutAdapter) -> torch.Tensor:
    """Raw student encoder output (before the distillation head)."""
    return adapter.student(_check_rgb(frame))


def masked_patch_count(mask_ratio: float, patch_count: int) -> int:
    return int(math.floor(mask_ratio * patch_count + 0.5))


def patch_mask(grid: tuple[int, int], mask_ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean (gh, gw) array, True on masked patches."""
    if not 0.0 <= mask_ratio < 1.0:
        raise ParameterError(f"mask_ratio must be in [0, 1), got {mask_ratio}")
    total = grid[0] * grid[1]
    k = masked_patch_count(mask_ratio, total)
    if k >= total:
        raise ParameterError(f"mask_ratio {mask_ratio} masks all {total} patches")
    mask = np.zeros(total, dtype=bool)
    mask[rng.permutation(total)[:k]] = True
    return mask.reshape(grid)


def apply_patch_masks(frames: torch.Tensor, masks: np.ndarray, patch: int) -> torch.Tensor:
    """Zero masked patches. ``masks`` is (N, gh, gw)."""
    keep = torch.from_numpy(~masks).to(frames.dtype)
    keep = keep.repeat_interleave(patch, dim=1).repeat_interleave(patch, dim=2)
    return frames * keep[:, None]


def masked_student_features(frame: torch.Tensor, mask_ratio: float, seed: int,
                            adapter: LayoutAdapter) -> torch.Tensor:
    """Encode frames with a seeded random subset of patches zeroed, then
    apply the linear head mapping into teacher feature space."""
    frame = _check_rgb(frame)
    p = adapter.config.patch_size
    h, w = frame.shape[-2:]
    if h % p or w % p:
        raise ShapeError(f"frame size {(h, w)} is not a multiple of patch size {p}")
    rng = np.random.default_rng(seed)
    masks = np.stack([patch_mask((h // p, w // p), mask_ratio, rng) for _ in range(frame.shape[0])])
    return adapter.encode_frames(apply_patch_masks(frame, masks, p))


def temporal_mix(features: torch.Tensor, depth: int, adapter: LayoutAdapter) -> torch.Tensor:
    """Apply the first ``depth`` temporal blocks to an (N, C, h, w) clip."""
    if depth < 0 or depth > adapter.temporal.depth:
        raise ConfigError(f"depth {depth} outside [0, {adapter.temporal.depth}]")
    if features.ndim != 4:
        raise ShapeError(f"expected (N, C, h, w) features, got {tuple(features.shape)}")
    if depth == 0:
        return features
    x = features.transpose(0, 1)[None]
    for block in adapter.temporal.blocks[:depth]:
        x = block(x)
    return x[0].transpose(0, 1)


def project_to_latent(features: torch.Tensor, adapter: LayoutAdapter, latent_size) -> torch.Tensor:
    if features.ndim != 4 or features.shape[1] != adapter.config.feature_channels:
        raise ShapeError(f"expected (N, {adapter.config.feature_channels}, h, w), got {tuple(features.shape)}")
    return adapter.projection(features, tuple(latent_size))


def adapter_forward(clip: torch.Tensor, adapter: LayoutAdapter) -> torch.Tensor:
    """Guidance offsets (N, C_z, H/4, W/4) for one (N, 3, H, W) clip."""
    clip = _check_rgb(clip)
    return adapter(clip[None])[0]

"""Frozen surrogate VAE and the latent-transparency encoder/decoder.

Shapes follow torch conventions: frames are (N, C, H, W), latents
(N, C_z, H/4, W/4). The public functions accept either tensors or
:class:`~ildiff.dataset_io.FrameClip` objects.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .dataset_io import FrameClip
from .errors import ShapeError

DOWNSAMPLE = 4


def as_rgb_tensor(x) -> torch.Tensor:
    """(N, 3, H, W) float tensor from a FrameClip, an (N, H, W, 3|4) array or a tensor."""
    if isinstance(x, FrameClip):
        return torch.from_numpy(np.ascontiguousarray(x.rgb.transpose(0, 3, 1, 2)))
    if isinstance(x, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(x[..., :3].transpose(0, 3, 1, 2))).float()
    return x


def as_alpha_tensor(x) -> torch.Tensor:
    """(N, 1, H, W) float tensor from a FrameClip, an (N, H, W) array or a tensor."""
    if isinstance(x, FrameClip):
        return torch.from_numpy(np.ascontiguousarray(x.alpha[:, None]))
    if isinstance(x, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(x.reshape(x.shape[0], 1, *x.shape[1:3]))).float()
    return x


def rgb_to_clip(rgb: torch.Tensor) -> FrameClip:
    arr = rgb.detach().cpu().float().clamp(0, 1).numpy().transpose(0, 2, 3, 1)
    return FrameClip.from_rgb(arr)


def alpha_to_clip(alpha: torch.Tensor) -> FrameClip:
    arr = alpha.detach().cpu().float().clamp(0, 1).numpy()[:, 0]
    return FrameClip.from_alpha(arr)


def _down(cin, cout):
    return nn.Conv2d(cin, cout, 4, stride=2, padding=1)


def _up(cin, cout):
    return nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1)


class SurrogateVAE(nn.Module):
    """Deterministic two-stage encoder/decoder (only the mean branch of a VAE)."""

    def __init__(self, latent_channels: int = 4, width: int = 16):
        super().__init__()
        w = width
        self.latent_channels = latent_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1), nn.SiLU(),
            _down(w, 2 * w), nn.SiLU(),
            _down(2 * w, 2 * w), nn.SiLU(),
            nn.Conv2d(2 * w, latent_channels, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(latent_channels, 2 * w, 3, padding=1), nn.SiLU(),
            _up(2 * w, 2 * w), nn.SiLU(),
            _up(2 * w, w), nn.SiLU(),
            nn.Conv2d(w, 3, 3, padding=1),
        )

    def encode(self, rgb):
        return self.encoder(rgb)

    def decode_raw(self, z):
        return self.decoder(z)

    def decode(self, z):
        return self.decoder(z).clamp(0.0, 1.0)


class TransparencyEncoder(nn.Module):
    """Maps concatenated RGB + alpha (4 channels) to a latent offset."""

    def __init__(self, latent_channels: int = 4, width: int = 16):
        super().__init__()
        w = width
        self.net = nn.Sequential(
            nn.Conv2d(4, w, 3, padding=1), nn.SiLU(),
            _down(w, w), nn.SiLU(),
            _down(w, 2 * w), nn.SiLU(),
            nn.Conv2d(2 * w, latent_channels, 3, padding=1),
        )

    def forward(self, rgb, alpha):
        return self.net(torch.cat([rgb, alpha], dim=1))


class TransparencyDecoder(nn.Module):
    """Decodes an adjusted latent into RGB (clamped) and alpha (sigmoid)."""

    def __init__(self, latent_channels: int = 4, width: int = 16):
        super().__init__()
        w = width
        self.net = nn.Sequential(
            nn.Conv2d(latent_channels, 2 * w, 3, padding=1), nn.SiLU(),
            nn.Conv2d(2 * w, 2 * w, 3, padding=1), nn.SiLU(),
            _up(2 * w, 2 * w), nn.SiLU(),
            _up(2 * w, w), nn.SiLU(),
            nn.Conv2d(w, 4, 3, padding=1),
        )

    def forward(self, z_adj):
        out = self.net(z_adj)
        return out[:, :3].clamp(0.0, 1.0), torch.sigmoid(out[:, 3:])


def _check_frames(x: torch.Tensor, channels: int, what: str):
    if x.ndim != 4 or x.shape[1] != channels:
        raise ShapeError(f"{what}: expected (N, {channels}, H, W), got {tuple(x.shape)}")


def _check_latent(z: torch.Tensor, latent_channels: int, what: str):
    if z.ndim != 4 or z.shape[1] != latent_channels:
        raise ShapeError(f"{what}: expected (N, {latent_channels}, h, w), got {tuple(z.shape)}")


def encode_rgb(rgb, vae: SurrogateVAE) -> torch.Tensor:
    x = as_rgb_tensor(rgb)
    _check_frames(x, 3, "encode_rgb")
    if x.shape[-2] % DOWNSAMPLE or x.shape[-1] % DOWNSAMPLE:
        raise ShapeError(f"frame size {tuple(x.shape[-2:])} is not divisible by {DOWNSAMPLE}")
    return vae.encode(x)


def decode_rgb(z: torch.Tensor, vae: SurrogateVAE) -> torch.Tensor:
    """RGB frames in [0, 1]; wrap with :func:`rgb_to_clip` for an opaque FrameClip."""
    _check_latent(z, vae.latent_channels, "decode_rgb")
    return vae.decode(z)


def encode_transparency(rgb, alpha, e_tr: TransparencyEncoder) -> torch.Tensor:
    x = as_rgb_tensor(rgb)
    a = as_alpha_tensor(alpha)
    _check_frames(x, 3, "encode_transparency rgb")
    _check_frames(a, 1, "encode_transparency alpha")
    if x.shape[0] != a.shape[0] or x.shape[-2:] != a.shape[-2:]:
        raise ShapeError(f"rgb {tuple(x.shape)} and alpha {tuple(a.shape)} disagree in N, H or W")
    if x.shape[-2] % DOWNSAMPLE or x.shape[-1] % DOWNSAMPLE:
        raise ShapeError(f"frame size {tuple(x.shape[-2:])} is not divisible by {DOWNSAMPLE}")
    return e_tr(x, a)


def adjust_latent(z: torch.Tensor, dz: torch.Tensor, guidance: torch.Tensor) -> torch.Tensor:
    """``(z + dz) + guidance``; additions are applied in that fixed order."""
    if z.shape != dz.shape or z.shape != guidance.shape:
        raise ShapeError(
            f"adjust_latent shapes differ: z {tuple(z.shape)}, dz {tuple(dz.shape)}, "
            f"guidance {tuple(guidance.shape)}")
    return (z + dz) + guidance


def decode_transparent(z_adj: torch.Tensor, d_tr: TransparencyDecoder):
    """Returns (rgb_hat (N, 3, H, W), alpha_hat (N, 1, H, W))."""
    first = d_tr.net[0]
    _check_latent(z_adj, first.in_channels, "decode_transparent")
    return d_tr(z_adj)

"""Noise schedule, forward noising, the latent noise predictor and the
ancestral sampler.

``alphas`` are cumulative: alpha_t = prod_{s<=t} (1 - beta_s), so a single
call to :func:`forward_noise` jumps straight to step ``t``. Steps are
1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    betas: tuple[float, ...]
    alphas: tuple[float, ...]

    @property
    def T(self) -> int:
        return len(self.alphas)

    def alpha(self, t: int) -> float:
        self.check_step(t)
        return self.alphas[t - 1]

    def alpha_prev(self, t: int) -> float:
        return 1.0 if t == 1 else self.alpha(t - 1)

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ParameterError(f"step {t} outside [1, {self.T}]")


def make_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Linear beta schedule with cumulative-product alphas."""
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ParameterError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    if T == 1:
        betas = np.array([beta_min])
    else:
        betas = np.linspace(beta_min, beta_max, T)
    alphas = np.cumprod(1.0 - betas)
    return NoiseSchedule(tuple(float(b) for b in betas), tuple(float(a) for a in alphas))


@dataclass
class DiffusionState:
    x_t: torch.Tensor
    t: int
    epsilon: torch.Tensor | None = None


def forward_noise(x, t: int, eps, sched: NoiseSchedule):
    """x_t = sqrt(alpha_t) * x + sqrt(1 - alpha_t) * eps (arrays or tensors)."""
    if tuple(x.shape) != tuple(eps.shape):
        raise ShapeError(f"x {tuple(x.shape)} and eps {tuple(eps.shape)} differ")
    a = sched.alpha(t)
    return math.sqrt(a) * x + math.sqrt(1.0 - a) * eps


def estimate_x0(x_t, t: int, eps_hat, sched: NoiseSchedule):
    """Invert :func:`forward_noise` given a noise estimate."""
    a = sched.alpha(t)
    return (x_t - math.sqrt(1.0 - a) * eps_hat) / math.sqrt(a)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=1)
    return emb


class Denoiser(nn.Module):
    """Small conv net predicting the noise in a latent; the step enters as a
    sinusoidal embedding added to each hidden layer's channels."""

    def __init__(self, latent_channels: int = 4, width: int = 64):
        super().__init__()
        self.latent_channels = latent_channels
        self.width = width
        self.time_mlp = nn.Sequential(nn.Linear(width, width), nn.SiLU(), nn.Linear(width, 3 * width))
        self.conv_in = nn.Conv2d(latent_channels, width, 3, padding=1)
        self.conv_mid = nn.ModuleList([nn.Conv2d(width, width, 3, padding=1) for _ in range(2)])
        self.conv_out = nn.Conv2d(width, latent_channels, 3, padding=1)
        self.act = nn.SiLU()
        # 1 / std of training latents; set during pre-training
        self.register_buffer("latent_scale", torch.ones(()))

    def forward(self, x_t, t):
        if not torch.is_tensor(t):
            t = torch.full((x_t.shape[0],), int(t))
        temb = self.time_mlp(timestep_embedding(t, self.width).to(x_t.dtype))
        e0, e1, e2 = temb.chunk(3, dim=1)
        h = self.act(self.conv_in(x_t) + e0[:, :, None, None])
        h = self.act(self.conv_mid[0](h) + e1[:, :, None, None])
        h = self.act(self.conv_mid[1](h) + e2[:, :, None, None])
        return self.conv_out(h)


def predict_noise(x_t: torch.Tensor, t, params: Denoiser) -> torch.Tensor:
    if x_t.ndim != 4 or x_t.shape[1] != params.latent_channels:
        raise ShapeError(f"expected (B, {params.latent_channels}, h, w) latents, got {tuple(x_t.shape)}")
    return params(x_t, t)


def posterior_step(x_t, t: int, eps_hat, sched: NoiseSchedule, noise=None):
    """One ancestral step x_t -> x_{t-1} through the x_0 estimate.

    At t = 1 the posterior variance is zero and the x_0 estimate is returned.
    """
    a_t = sched.alpha(t)
    a_prev = sched.alpha_prev(t)
    beta = 1.0 - a_t / a_prev
    x0 = estimate_x0(x_t, t, eps_hat, sched)
    if t == 1:
        return x0
    c0 = math.sqrt(a_prev) * beta / (1.0 - a_t)
    ct = math.sqrt(1.0 - beta) * (1.0 - a_prev) / (1.0 - a_t)
    mean = c0 * x0 + ct * x_t
    if noise is None:
        return mean
    var = beta * (1.0 - a_prev) / (1.0 - a_t)
    return mean + math.sqrt(var) * noise


@torch.no_grad()
def denoise_from(x_t, t_start: int, sched: NoiseSchedule, params: Denoiser,
                 generator: torch.Generator | None = None, predictor=None):
    """Run ancestral steps t_start, ..., 1 and return the final x_0 estimate.

    ``predictor(x, t)`` overrides the network (used for algebraic checks).
    """
    sched.check_step(t_start)
    predictor = predictor or (lambda x, t: predict_noise(x, t, params))
    x = x_t
    for t in range(t_start, 0, -1):
        eps_hat = predictor(x, t)
        noise = None
        if t > 1:
            noise = torch.randn(x.shape, generator=generator, dtype=x.dtype)
        x = posterior_step(x, t, eps_hat, sched, noise)
    return x


def sample(shape, sched: NoiseSchedule, params: Denoiser, seed: int, predictor=None) -> torch.Tensor:
    """DDPM ancestral sampling from x_T ~ N(0, I); deterministic in ``seed``."""
    g = torch.Generator().manual_seed(seed)
    x_T = torch.randn(tuple(shape), generator=g)
    return denoise_from(x_T, sched.T, sched, params, generator=g, predictor=predictor)

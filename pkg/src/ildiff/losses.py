"""Loss committee: distillation, alpha, RGB and harmlessness terms.

Every squared-norm loss is an element mean, so weights do not depend on
resolution or clip length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import ParameterError, ShapeError
from .latent import SurrogateVAE, as_alpha_tensor, as_rgb_tensor

STAGES = ("distill", "finetune")
STAGE_TERMS = {"distill": ("r",), "finetune": ("alpha", "rgb", "p")}


def _mse(a: torch.Tensor, b: torch.Tensor, what: str) -> torch.Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    d = a - b
    return (d * d).mean()


def distill_loss(student: torch.Tensor, teacher: torch.Tensor) -> torch.Tensor:
    return _mse(student, teacher, "distill_loss")


def alpha_loss(alpha_gt, alpha_hat) -> torch.Tensor:
    return _mse(as_alpha_tensor(alpha_gt), as_alpha_tensor(alpha_hat), "alpha_loss")


def rgb_loss(rgb_gt, rgb_hat) -> torch.Tensor:
    return _mse(as_rgb_tensor(rgb_gt), as_rgb_tensor(rgb_hat), "rgb_loss")


def harmlessness_loss(rgb, z_adj: torch.Tensor, vae: SurrogateVAE) -> torch.Tensor:
    """MSE between the input RGB and the frozen VAE decoding of the adjusted latent."""
    return _mse(as_rgb_tensor(rgb), vae.decode(z_adj), "harmlessness_loss")


@dataclass
class LossWeights:
    r: float = 1.0
    alpha: float = 1.0
    rgb: float = 1.0
    p: float = 1.0

    def validate(self) -> None:
        for k in ("r", "alpha", "rgb", "p"):
            if getattr(self, k) < 0:
                raise ParameterError(f"loss weight {k} must be non-negative")


@dataclass
class LossReport:
    stage: str
    total: torch.Tensor
    weights: LossWeights
    components: dict[str, torch.Tensor] = field(default_factory=dict)

    def record(self, **extra) -> dict:
        """Flat JSON-ready dict (absent components are null)."""
        out = {"stage": self.stage}
        out.update(extra)
        for k in ("r", "alpha", "rgb", "p"):
            v = self.components.get(k)
            out[f"l_{k}"] = None if v is None else float(v.detach())
        out["weights"] = {f"w_{k}": getattr(self.weights, k) for k in ("r", "alpha", "rgb", "p")}
        out["total"] = float(self.total.detach())
        return out


def total_loss(components: dict[str, torch.Tensor], weights: LossWeights, stage: str) -> LossReport:
    """Weighted sum of the stage's terms: L_R when distilling;
    L_alpha + L_rgb + L_p when fine-tuning."""
    if stage not in STAGES:
        raise ParameterError(f"unknown stage {stage!r}")
    weights.validate()
    terms = STAGE_TERMS[stage]
    missing = [k for k in terms if k not in components]
    if missing:
        raise ParameterError(f"stage {stage} needs loss terms {missing}")
    total = sum(getattr(weights, k) * components[k] for k in terms)
    if not torch.is_tensor(total):
        total = torch.tensor(float(total))
    return LossReport(stage=stage, total=total, weights=weights,
                      components={k: components[k] for k in terms})

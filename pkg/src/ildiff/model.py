"""The full network bundle and its parameter groups."""

from __future__ import annotations

import torch
from torch import nn

from ._rng import seeded
from .adapter import AdapterConfig, LayoutAdapter, TeacherEncoder
from .checkpoint import hash_tensors
from .config import ModelConfig
from .diffusion import Denoiser
from .errors import CompatibilityError
from .latent import SurrogateVAE, TransparencyDecoder, TransparencyEncoder

GROUP_PREFIXES = {
    "vae": ("vae.",),
    "denoiser": ("denoiser.",),
    "teacher": ("teacher.",),
    "student": ("adapter.student.", "adapter.head."),
    "temporal": ("adapter.temporal.",),
    "projection": ("adapter.projection.",),
    "e_tr": ("e_tr.",),
    "d_tr": ("d_tr.",),
}
GROUPS = tuple(GROUP_PREFIXES)

TRAINABLE = {
    "pretrain": ("vae", "denoiser"),
    "distill": ("student",),
    "finetune": ("temporal", "projection", "e_tr", "d_tr"),
}


def group_of(name: str) -> str:
    for group, prefixes in GROUP_PREFIXES.items():
        if name.startswith(prefixes):
            return group
    raise KeyError(name)


class ILDiffModel(nn.Module):
    """VAE, denoiser, teacher, layout adapter and the transparency codec.

    Each group is initialized from its own seed so that, e.g., changing the
    temporal depth leaves every other group's initialization untouched.
    """

    def __init__(self, model: ModelConfig, adapter: AdapterConfig, seed: int = 0):
        super().__init__()
        cz = model.latent_channels
        self.model_config = model
        self.adapter_config = adapter
        self.vae = seeded(seed, "vae", lambda: SurrogateVAE(cz, model.vae_width))
        self.denoiser = seeded(seed, "denoiser", lambda: Denoiser(cz, model.denoiser_width))
        self.teacher = TeacherEncoder(adapter.feature_channels, adapter.teacher_width, adapter.teacher_seed)
        self.adapter = LayoutAdapter(adapter, cz, seed=seed)
        self.e_tr = seeded(seed, "e_tr", lambda: TransparencyEncoder(cz, model.tr_width))
        self.d_tr = seeded(seed, "d_tr", lambda: TransparencyDecoder(cz, model.tr_width))
        self.teacher.requires_grad_(False)

    def named_group_tensors(self, group: str):
        prefixes = GROUP_PREFIXES[group]
        return [(n, t) for n, t in self.state_dict().items() if n.startswith(prefixes)]

    def group_parameters(self, groups) -> list[nn.Parameter]:
        return [p for n, p in self.named_parameters() if group_of(n) in groups]

    def group_hashes(self) -> dict[str, str]:
        return {g: hash_tensors(self.named_group_tensors(g)) for g in GROUPS}

    def set_trainable(self, groups) -> None:
        for n, p in self.named_parameters():
            p.requires_grad_(group_of(n) in groups and group_of(n) != "teacher")

    def load_groups(self, state: dict[str, torch.Tensor], groups) -> None:
        own = self.state_dict()
        for name, tensor in state.items():
            if group_of(name) not in groups:
                continue
            if name not in own or own[name].shape != tensor.shape:
                raise CompatibilityError(f"checkpoint tensor {name} {tuple(tensor.shape)} does not fit model")
            own[name].copy_(tensor)
        missing = [n for n in own if group_of(n) in groups and n not in state]
        if missing:
            raise CompatibilityError(f"checkpoint lacks tensors {missing[:5]}")


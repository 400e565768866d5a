"""Run configuration (JSON on disk)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .adapter import AdapterConfig
from .errors import ConfigError
from .losses import LossWeights


@dataclass
class ModelConfig:
    latent_channels: int = 4
    vae_width: int = 16
    tr_width: int = 16
    denoiser_width: int = 64


@dataclass
class ScheduleConfig:
    T: int = 100
    beta_min: float = 1e-3
    beta_max: float = 0.2


@dataclass
class DataConfig:
    root: str = "data/synth"
    manifest: str | None = None
    holdout_fraction: float = 0.2
    synth_count: int = 200
    template: dict = field(default_factory=dict)

    @property
    def manifest_path(self) -> Path:
        return Path(self.manifest) if self.manifest else Path(self.root) / "manifest.json"


@dataclass
class PretrainConfig:
    vae_steps: int = 600
    denoiser_steps: int = 400
    lr: float = 2e-3
    batch_size: int = 32
    tau_vae: float = 0.01


@dataclass
class DistillConfig:
    steps: int = 300
    lr: float = 2e-3
    batch_size: int = 32
    max_frames: int = 500
    heldout_frames: int = 160
    threshold: float = 0.2


@dataclass
class FinetuneConfig:
    steps: int = 1200
    lr: float = 3e-3
    batch_size: int = 4
    # probability that E_tr sees the inference-time all-ones alpha prior instead of ground truth
    alpha_prior_dropout: float = 0.5
    # probability that a clip is trained with the adapter guidance zeroed
    guidance_dropout: float = 0.3


@dataclass
class InferConfig:
    alpha_prior: str = "ones"
    with_sampling: bool = False
    sampling_start: int = 10


@dataclass
class CheckpointPaths:
    pretrain: str | None = None
    distill: str | None = None
    finetune: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    run_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    checkpoints: CheckpointPaths = field(default_factory=CheckpointPaths)

    def checkpoint_path(self, stage: str) -> Path:
        explicit = getattr(self.checkpoints, stage)
        return Path(explicit) if explicit else Path(self.run_dir) / stage

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self) -> None:
        self.adapter.validate()
        self.loss_weights.validate()
        if not 0.0 < self.data.holdout_fraction < 1.0:
            raise ConfigError("data.holdout_fraction must be in (0, 1)")
        if not 0.0 <= self.finetune.alpha_prior_dropout <= 1.0:
            raise ConfigError("finetune.alpha_prior_dropout must be in [0, 1]")
        if not 0.0 <= self.finetune.guidance_dropout < 1.0:
            raise ConfigError("finetune.guidance_dropout must be in [0, 1)")
        if self.infer.alpha_prior not in ("ones", "zero-offset"):
            raise ConfigError("infer.alpha_prior must be 'ones' or 'zero-offset'")
        if not 1 <= self.infer.sampling_start <= self.schedule.T:
            raise ConfigError("infer.sampling_start must lie in [1, schedule.T]")


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}") if sub else value
    return cls(**kwargs)


_NESTED = {
    (RunConfig, "data"): DataConfig,
    (RunConfig, "model"): ModelConfig,
    (RunConfig, "adapter"): AdapterConfig,
    (RunConfig, "schedule"): ScheduleConfig,
    (RunConfig, "loss_weights"): LossWeights,
    (RunConfig, "pretrain"): PretrainConfig,
    (RunConfig, "distill"): DistillConfig,
    (RunConfig, "finetune"): FinetuneConfig,
    (RunConfig, "infer"): InferConfig,
    (RunConfig, "checkpoints"): CheckpointPaths,
}


def config_from_dict(data: dict) -> RunConfig:
    try:
        cfg = _build(RunConfig, data, "config")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)

"""Desk-scale alpha-channel generation for animated stickers.

A frozen surrogate VAE and latent denoiser, a latent-transparency codec,
and a layout adapter (distilled image encoder + temporal 3-D convolutions)
whose output is added to the latent as guidance.
"""

from .adapter import AdapterConfig, LayoutAdapter
from .config import RunConfig, load_config
from .dataset_io import FrameClip, ManifestRecord, load_clip, load_manifest, manifest_stats, save_clip
from .errors import DependencyError, ILDiffError, NonConvergenceError, ValidationError
from .metrics import ClipReport, clip_metrics, psnr, ssim
from .model import ILDiffModel
from .synth import ClipSpec, ClipTemplate, SpriteSpec, generate_clip, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig", "LayoutAdapter", "RunConfig", "load_config", "FrameClip", "ManifestRecord",
    "load_clip", "load_manifest", "manifest_stats", "save_clip", "DependencyError", "ILDiffError",
    "NonConvergenceError", "ValidationError", "ClipReport", "clip_metrics", "psnr", "ssim",
    "ILDiffModel", "ClipSpec", "ClipTemplate", "SpriteSpec", "generate_clip", "generate_dataset",
]

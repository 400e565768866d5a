"""Training stages, inference, evaluation and the temporal-depth ablation.

Stages and what they train:

* ``pretrain``: surrogate VAE, then the latent noise predictor.
* ``distill``: student encoder + linear head against the frozen teacher.
* ``finetune``: temporal stack, latent projection, E_tr and D_tr.

Every stage writes a checkpoint directory (see :mod:`ildiff.checkpoint`)
whose metadata records the group hashes before/after and the set of groups
that changed; a frozen group changing aborts the stage.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ._rng import derive_seed
from .adapter import AdapterConfig, masked_student_features
from .checkpoint import load_checkpoint, read_index, save_checkpoint
from .config import ModelConfig, RunConfig
from .dataset_io import load_clip, load_manifest, save_clip
from .diffusion import denoise_from, forward_noise, make_schedule
from .errors import (
    CompatibilityError,
    ConfigError,
    DependencyError,
    EmptyInputError,
    ILDiffError,
    NonConvergenceError,
)
from .latent import adjust_latent, alpha_to_clip
from .losses import LossReport, alpha_loss, distill_loss, harmlessness_loss, rgb_loss, total_loss
from .metrics import aggregate, clip_metrics
from .model import GROUPS, TRAINABLE, ILDiffModel

log = logging.getLogger(__name__)

DEFAULT_DEPTHS = (0, 3, 5, 8)
EVAL_CHUNK = 8


@dataclass
class ClipDataset:
    """All clips of a manifest in memory, split into train and held-out."""

    ids: list[str]
    rgb: torch.Tensor     # (M, N, 3, H, W)
    alpha: torch.Tensor   # (M, N, 1, H, W)
    holes: torch.Tensor   # (M, N, 1, H, W), zeros when no hole masks exist
    train: list[int]
    heldout: list[int]

    @property
    def frame_size(self) -> tuple[int, int]:
        return tuple(self.rgb.shape[-2:])

    def indices(self, split: str) -> list[int]:
        return {"train": self.train, "heldout": self.heldout, "all": list(range(len(self.ids)))}[split]

    def frames(self, split: str) -> torch.Tensor:
        return self.rgb[self.indices(split)].flatten(0, 1)


def split_indices(count: int, holdout_fraction: float) -> tuple[list[int], list[int]]:
    """The last ``round(count * holdout_fraction)`` (at least 1) records are held out."""
    n_hold = max(1, int(round(count * holdout_fraction)))
    if n_hold >= count:
        raise ConfigError(f"dataset of {count} clips is too small to hold out {n_hold}")
    return list(range(count - n_hold)), list(range(count - n_hold, count))


def load_dataset(cfg: RunConfig) -> ClipDataset:
    """Load rgb/alpha/holes clips for every manifest record.

    ``frames_dir`` points at ``{id}/rgb``; the matte and hole mask live in
    the sibling ``alpha`` and ``holes`` directories.
    """
    manifest = cfg.data.manifest_path
    if not manifest.is_file():
        raise ConfigError(f"manifest {manifest} does not exist")
    records = load_manifest(manifest, check_files=True)
    if not records:
        raise EmptyInputError(f"manifest {manifest} is empty")
    root = manifest.parent
    rgbs, alphas, holes = [], [], []
    for r in records:
        clip_dir = (root / r.frames_dir).parent
        rgb = load_clip(root / r.frames_dir)
        alpha = load_clip(clip_dir / "alpha")
        if alpha.frames.shape != rgb.frames.shape:
            raise CompatibilityError(f"{r.id}: alpha and rgb clips differ in shape")
        rgbs.append(rgb.rgb.transpose(0, 3, 1, 2))
        alphas.append(alpha.alpha[:, None])
        if (clip_dir / "holes").is_dir():
            holes.append(load_clip(clip_dir / "holes").alpha[:, None])
        else:
            holes.append(np.zeros_like(alphas[-1]))
    shapes = {a.shape for a in rgbs}
    if len(shapes) != 1:
        raise ConfigError(f"clips must share frame count and size for batching, found {sorted(shapes)}")
    train, held = split_indices(len(records), cfg.data.holdout_fraction)
    return ClipDataset(
        ids=[r.id for r in records],
        rgb=torch.from_numpy(np.stack(rgbs)),
        alpha=torch.from_numpy(np.stack(alphas)),
        holes=torch.from_numpy(np.stack(holes)),
        train=train,
        heldout=held,
    )


# -- checkpoint plumbing ----------------------------------------------------

def build_model(cfg: RunConfig) -> ILDiffModel:
    return ILDiffModel(cfg.model, cfg.adapter, cfg.seed)


def load_model(path) -> tuple[ILDiffModel, dict]:
    state, meta = load_checkpoint(path)
    model = ILDiffModel(ModelConfig(**meta["model"]), AdapterConfig(**meta["adapter"]), meta["seed"])
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CompatibilityError(f"{path}: {exc}") from exc
    return model, meta


def _load_upstream(model: ILDiffModel, path, groups, stage: str) -> dict:
    if path is None:
        raise DependencyError(f"{stage} checkpoint path not configured")
    read_index(path)
    state, meta = load_checkpoint(path)
    if meta.get("stage") != stage:
        raise DependencyError(f"{path} is a {meta.get('stage')!r} checkpoint, expected {stage!r}")
    if meta["model"] != dataclasses.asdict(model.model_config):
        raise CompatibilityError(f"{path}: model config {meta['model']} differs from the run's")
    if meta["group_hashes"]["teacher"] != model.group_hashes()["teacher"]:
        raise CompatibilityError(f"{path}: teacher differs from this run's teacher")
    model.load_groups(state, groups)
    return meta


def _finish(model: ILDiffModel, cfg: RunConfig, stage: str, out: Path, before: dict,
            step: int, frame_size, metrics: dict) -> Path:
    after = model.group_hashes()
    changed = sorted(g for g in GROUPS if before[g] != after[g])
    trainable = TRAINABLE[stage]
    illegal = [g for g in changed if g not in trainable]
    if illegal:
        raise ILDiffError(f"{stage}: frozen groups changed: {illegal}")
    metadata = {
        "stage": stage,
        "step": step,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "model": dataclasses.asdict(cfg.model),
        "adapter": dataclasses.asdict(cfg.adapter),
        "schedule": dataclasses.asdict(cfg.schedule),
        "frame_size": list(frame_size),
        "trainable": list(trainable),
        "frozen": [g for g in GROUPS if g not in trainable],
        "group_hashes_before": before,
        "group_hashes": after,
        "changed_groups": changed,
        "metrics": metrics,
    }
    return save_checkpoint(model.state_dict(), out, metadata)


class _JsonLog:
    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w", encoding="utf-8")

    def write(self, record: dict):
        self.fh.write(json.dumps(record) + "\n")

    def close(self):
        self.fh.close()


def _adam(params, lr, steps):
    opt = torch.optim.Adam(params, lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(steps, 1), eta_min=lr * 0.05)
    return opt, sched


def _chunks(n: int, size: int):
    for i in range(0, n, size):
        yield slice(i, min(i + size, n))


# -- stages -------------------------------------------------------------------

def stage_pretrain(cfg: RunConfig, out=None, data: ClipDataset | None = None) -> Path:
    """Train the surrogate VAE to ``tau_vae`` held-out MSE, then the denoiser."""
    out = Path(out or cfg.checkpoint_path("pretrain"))
    data = data or load_dataset(cfg)
    pc = cfg.pretrain
    rng = np.random.default_rng(derive_seed(cfg.seed, "pretrain-batches"))
    gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "pretrain-noise"))
    model = build_model(cfg)
    before = model.group_hashes()
    model.set_trainable(TRAINABLE["pretrain"])
    frames = data.frames("train")
    held = data.frames("heldout")
    logf = _JsonLog(out / "train_log.jsonl")
    try:
        opt, sched = _adam(model.vae.parameters(), pc.lr, pc.vae_steps)
        for step in range(1, pc.vae_steps + 1):
            x = frames[rng.integers(0, len(frames), pc.batch_size)]
            loss = ((model.vae.decode_raw(model.vae.encode(x)) - x) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            logf.write({"stage": "pretrain-vae", "step": step, "loss": loss.item()})

        with torch.no_grad():
            vae_mse = sum(float(((model.vae.decode(model.vae.encode(held[s])) - held[s]) ** 2).sum())
                          for s in _chunks(len(held), 64)) / held.numel()
        if not vae_mse <= pc.tau_vae:
            raise NonConvergenceError(
                f"VAE held-out MSE {vae_mse:.5f} above tau_vae={pc.tau_vae} after {pc.vae_steps} steps",
                achieved=vae_mse)

        sch = make_schedule(cfg.schedule.T, cfg.schedule.beta_min, cfg.schedule.beta_max)
        alphas = torch.tensor(sch.alphas, dtype=torch.float32)
        with torch.no_grad():
            z = torch.cat([model.vae.encode(frames[s]) for s in _chunks(len(frames), 64)])
            z_held = torch.cat([model.vae.encode(held[s]) for s in _chunks(len(held), 64)])
            scale = 1.0 / z.std()
            model.denoiser.latent_scale.fill_(float(scale))
        z = z * scale
        z_held = z_held * scale

        def noised(x0, t, g):
            eps = torch.randn(x0.shape, generator=g)
            a = alphas[t - 1].view(-1, 1, 1, 1)
            return a.sqrt() * x0 + (1 - a).sqrt() * eps, eps

        opt, sched = _adam(model.denoiser.parameters(), pc.lr, pc.denoiser_steps)
        for step in range(1, pc.denoiser_steps + 1):
            x0 = z[rng.integers(0, len(z), pc.batch_size)]
            t = torch.from_numpy(rng.integers(1, sch.T + 1, len(x0)))
            x_t, eps = noised(x0, t, gen)
            loss = ((model.denoiser(x_t, t) - eps) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            logf.write({"stage": "pretrain-denoiser", "step": step, "loss": loss.item()})

        g_eval = torch.Generator().manual_seed(derive_seed(cfg.seed, "pretrain-eval"))
        t_eval = torch.from_numpy(np.random.default_rng(derive_seed(cfg.seed, "pretrain-eval-t"))
                                  .integers(1, sch.T + 1, len(z_held)))
        with torch.no_grad():
            x_t, eps = noised(z_held, t_eval, g_eval)
            denoise_mse = float(((model.denoiser(x_t, t_eval) - eps) ** 2).mean())
    finally:
        logf.close()
    metrics = {"vae_heldout_mse": vae_mse, "denoiser_heldout_mse": denoise_mse,
               "latent_scale": float(model.denoiser.latent_scale)}
    log.info("pretrain done: %s", metrics)
    return _finish(model, cfg, "pretrain", out, before,
                   pc.vae_steps + pc.denoiser_steps, data.frame_size, metrics)


def stage_distill(cfg: RunConfig, pretrain=None, out=None, data: ClipDataset | None = None) -> Path:
    """Masked feature distillation of the student against the frozen teacher.

    Held-out L_R is measured on unmasked frames before and after training;
    the stage fails unless it drops below ``threshold`` times its start.
    """
    out = Path(out or cfg.checkpoint_path("distill"))
    data = data or load_dataset(cfg)
    dc = cfg.distill
    rng = np.random.default_rng(derive_seed(cfg.seed, "distill-batches"))
    model = build_model(cfg)
    if pretrain is not None:
        _load_upstream(model, pretrain, ("vae", "denoiser"), "pretrain")
    before = model.group_hashes()
    model.set_trainable(TRAINABLE["distill"])
    frames = data.frames("train")
    frames = frames[np.sort(rng.permutation(len(frames))[:dc.max_frames])]
    held = data.frames("heldout")
    held = held[np.sort(rng.permutation(len(held))[:dc.heldout_frames])]
    adapter = model.adapter
    with torch.no_grad():
        t_train = torch.cat([model.teacher(frames[s]) for s in _chunks(len(frames), 64)])
        t_held = torch.cat([model.teacher(held[s]) for s in _chunks(len(held), 64)])

    def heldout_lr():
        with torch.no_grad():
            return float(distill_loss(adapter.encode_frames(held), t_held))

    initial = heldout_lr()
    opt, sched = _adam(model.group_parameters(TRAINABLE["distill"]), dc.lr, dc.steps)
    logf = _JsonLog(out / "train_log.jsonl")
    try:
        for step in range(1, dc.steps + 1):
            idx = rng.integers(0, len(frames), dc.batch_size)
            s = masked_student_features(frames[idx], cfg.adapter.mask_ratio,
                                        derive_seed(cfg.seed, f"mask-{step}"), adapter)
            report = total_loss({"r": distill_loss(s, t_train[idx])}, cfg.loss_weights, "distill")
            opt.zero_grad()
            report.total.backward()
            opt.step()
            sched.step()
            logf.write(report.record(step=step))
    finally:
        logf.close()
    final = heldout_lr()
    metrics = {"initial_heldout_l_r": initial, "final_heldout_l_r": final,
               "ratio": final / initial, "train_frames": len(frames), "heldout_frames": len(held)}
    log.info("distill done: %s", metrics)
    if not final < dc.threshold * initial:
        raise NonConvergenceError(
            f"held-out L_R {final:.5f} is {final / initial:.1%} of its initial value "
            f"(threshold {dc.threshold:.0%})", achieved=final / initial)
    return _finish(model, cfg, "distill", out, before, dc.steps, data.frame_size, metrics)


@torch.no_grad()
def infer_alpha(model: ILDiffModel, rgb: torch.Tensor, *, guidance: bool = True,
                alpha_prior: str = "ones", with_sampling: bool = False,
                sampling_start: int = 10, schedule=None, seed: int = 0) -> torch.Tensor:
    """Predict alpha for clips ``rgb`` of shape (B, N, 3, H, W) or (N, 3, H, W).

    encode_rgb -> E_tr(rgb, prior) -> adapter guidance -> adjust -> D_tr.
    ``alpha_prior="zero-offset"`` skips E_tr; ``guidance=False`` forces the
    adapter output to zero. With ``with_sampling`` the adjusted latent is
    re-noised to ``sampling_start`` and denoised by the ancestral sampler.
    """
    single = rgb.ndim == 4
    if single:
        rgb = rgb[None]
    b, n = rgb.shape[:2]
    flat = rgb.flatten(0, 1)
    z = model.vae.encode(flat)
    if alpha_prior == "ones":
        dz = model.e_tr(flat, torch.ones_like(flat[:, :1]))
    elif alpha_prior == "zero-offset":
        dz = torch.zeros_like(z)
    else:
        raise ConfigError(f"unknown alpha prior {alpha_prior!r}")
    if guidance:
        g = model.adapter(rgb, tuple(z.shape[-2:])).flatten(0, 1)
    else:
        g = torch.zeros_like(z)
    z_adj = adjust_latent(z, dz, g)
    if with_sampling:
        if schedule is None:
            raise ConfigError("with_sampling needs a noise schedule")
        scale = float(model.denoiser.latent_scale)
        gen = torch.Generator().manual_seed(seed)
        eps = torch.randn(z_adj.shape, generator=gen)
        x_t = forward_noise(z_adj * scale, sampling_start, eps, schedule)
        z_adj = denoise_from(x_t, sampling_start, schedule, model.denoiser, generator=gen) / scale
    _, alpha = model.d_tr(z_adj)
    alpha = alpha.reshape(b, n, *alpha.shape[1:])
    return alpha[0] if single else alpha


def _infer_kwargs(cfg: RunConfig | None, **overrides) -> dict:
    kw = {}
    if cfg is not None:
        kw = {"alpha_prior": cfg.infer.alpha_prior, "with_sampling": cfg.infer.with_sampling,
              "sampling_start": cfg.infer.sampling_start, "seed": cfg.seed,
              "schedule": make_schedule(cfg.schedule.T, cfg.schedule.beta_min, cfg.schedule.beta_max)}
    kw.update(overrides)
    return kw


def evaluate(model: ILDiffModel, data: ClipDataset, split: str = "heldout", cfg: RunConfig | None = None,
             **infer_overrides):
    """ClipReports for every clip of ``split`` plus their aggregate."""
    idx = data.indices(split)
    kw = _infer_kwargs(cfg, **infer_overrides)
    reports = []
    for s in _chunks(len(idx), EVAL_CHUNK):
        ids = idx[s]
        pred = infer_alpha(model, data.rgb[ids], **kw)
        for j, i in enumerate(ids):
            reports.append(clip_metrics(pred[j, :, 0].numpy(), data.alpha[i, :, 0].numpy(),
                                        data.holes[i, :, 0].numpy(), clip_id=data.ids[i]))
    return reports, aggregate(reports)


def heldout_alpha_loss(model: ILDiffModel, data: ClipDataset, cfg: RunConfig | None = None) -> float:
    idx = data.heldout
    kw = _infer_kwargs(cfg, with_sampling=False)
    total = 0.0
    for s in _chunks(len(idx), EVAL_CHUNK):
        ids = idx[s]
        pred = infer_alpha(model, data.rgb[ids], **kw)
        total += float(alpha_loss(data.alpha[ids].flatten(0, 1), pred.flatten(0, 1))) * len(ids)
    return total / len(idx)


def finetune_loss(model: ILDiffModel, rgb, alpha, alpha_in, feats, z, weights,
                  keep_guidance=None) -> LossReport:
    """Fine-tuning objective for one batch.

    ``rgb``/``alpha`` are flattened frames (B*N, C, H, W), ``alpha_in`` the
    alpha fed to E_tr, ``feats`` student features (B, N, C_f, h, w) and
    ``z`` the frozen VAE latents of ``rgb``. ``keep_guidance`` is an optional
    per-frame 0/1 multiplier on the adapter guidance.
    """
    dz = model.e_tr(rgb, alpha_in)
    g = model.adapter.guidance_from_features(feats, tuple(z.shape[-2:])).flatten(0, 1)
    if keep_guidance is not None:
        g = g * keep_guidance
    z_adj = adjust_latent(z, dz, g)
    rgb_hat, alpha_hat = model.d_tr(z_adj)
    return total_loss({
        "alpha": alpha_loss(alpha, alpha_hat),
        "rgb": rgb_loss(rgb, rgb_hat),
        "p": harmlessness_loss(rgb, z_adj, model.vae),
    }, weights, "finetune")


def stage_finetune(cfg: RunConfig, pretrain=None, distill=None, out=None,
                   data: ClipDataset | None = None) -> Path:
    """Train temporal stack, projection, E_tr and D_tr with L_alpha + L_rgb + L_p.

    VAE, denoiser, teacher and student stay frozen; their contributions
    (latents z and student features) are computed once up front.
    """
    pretrain = pretrain if pretrain is not None else cfg.checkpoint_path("pretrain")
    distill = distill if distill is not None else cfg.checkpoint_path("distill")
    for path, name in ((pretrain, "pretrain"), (distill, "distill")):
        if not (Path(path) / "index.json").is_file():
            raise DependencyError(f"finetune needs a {name} checkpoint; none at {path}")
    out = Path(out or cfg.checkpoint_path("finetune"))
    data = data or load_dataset(cfg)
    fc = cfg.finetune
    rng = np.random.default_rng(derive_seed(cfg.seed, "finetune-batches"))
    model = build_model(cfg)
    _load_upstream(model, pretrain, ("vae", "denoiser"), "pretrain")
    _load_upstream(model, distill, ("student",), "distill")
    before = model.group_hashes()
    trainable = TRAINABLE["finetune"]
    model.set_trainable(trainable)

    train = data.train
    rgb = data.rgb[train]
    alpha = data.alpha[train]
    m, n = rgb.shape[:2]
    with torch.no_grad():
        flat = rgb.flatten(0, 1)
        z = torch.cat([model.vae.encode(flat[s]) for s in _chunks(len(flat), 64)])
        feats = torch.cat([model.adapter.encode_frames(flat[s]) for s in _chunks(len(flat), 64)])
    z = z.reshape(m, n, *z.shape[1:])
    feats = feats.reshape(m, n, *feats.shape[1:])

    initial = heldout_alpha_loss(model, data, cfg)
    opt, sched = _adam(model.group_parameters(trainable), fc.lr, fc.steps)
    batch = min(fc.batch_size, m)
    logf = _JsonLog(out / "train_log.jsonl")
    try:
        for step in range(1, fc.steps + 1):
            idx = np.sort(rng.choice(m, batch, replace=False))
            x = rgb[idx].flatten(0, 1)
            a = alpha[idx].flatten(0, 1)
            use_prior = torch.from_numpy(rng.random(batch) < fc.alpha_prior_dropout)
            use_prior = use_prior.repeat_interleave(n).view(-1, 1, 1, 1)
            a_in = torch.where(use_prior, torch.ones_like(a), a)
            keep = torch.from_numpy(rng.random(batch) >= fc.guidance_dropout).to(a.dtype)
            keep = keep.repeat_interleave(n).view(-1, 1, 1, 1)
            report = finetune_loss(model, x, a, a_in, feats[idx], z[idx].flatten(0, 1),
                                   cfg.loss_weights, keep)
            opt.zero_grad()
            report.total.backward()
            opt.step()
            sched.step()
            logf.write(report.record(step=step))
    finally:
        logf.close()
    final = heldout_alpha_loss(model, data, cfg)
    metrics = {"initial_heldout_l_alpha": initial, "final_heldout_l_alpha": final,
               "temporal_depth": cfg.adapter.temporal_depth}
    log.info("finetune done: %s", metrics)
    return _finish(model, cfg, "finetune", out, before, fc.steps, data.frame_size, metrics)


def check_compatible(meta: dict, frame_size) -> None:
    if list(frame_size) != list(meta["frame_size"]):
        raise CompatibilityError(
            f"input frames {tuple(frame_size)} differ from the checkpoint's {tuple(meta['frame_size'])}")


def ablate_depth(cfg: RunConfig, depths=DEFAULT_DEPTHS, pretrain=None, distill=None, out=None,
                 data: ClipDataset | None = None) -> list[dict]:
    """Fine-tune and evaluate once per temporal depth, sharing upstream checkpoints."""
    if not depths:
        raise ConfigError("ablate_depth needs at least one depth")
    out = Path(out or Path(cfg.run_dir) / "ablation")
    data = data or load_dataset(cfg)
    rows = []
    for d in depths:
        cfg_d = dataclasses.replace(cfg, adapter=dataclasses.replace(cfg.adapter, temporal_depth=d))
        ckpt = stage_finetune(cfg_d, pretrain, distill, out=out / f"depth_{d}", data=data)
        model, _ = load_model(ckpt)
        _, agg = evaluate(model, data, "heldout", cfg_d)
        rows.append({"depth": d, **{k: agg[k] for k in ("psnr_mean", "ssim_mean", "flicker", "hole_residue")}})
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.json", "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1)
    with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return rows


def eval_dirs(pred_dir, gt_dir, manifest) -> dict:
    """Compare ``pred_dir/{id}/alpha`` against ``gt_dir/{id}/alpha`` for every
    manifest record; clips missing on either side are listed and skipped."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    reports, missing = [], []
    for r in load_manifest(manifest):
        p, g, h = pred_dir / r.id / "alpha", gt_dir / r.id / "alpha", gt_dir / r.id / "holes"
        if not p.is_dir() or not g.is_dir():
            missing.append(r.id)
            continue
        pred, gt = load_clip(p), load_clip(g)
        holes = load_clip(h) if h.is_dir() else None
        reports.append(clip_metrics(pred, gt, holes, clip_id=r.id))
    if not reports:
        raise EmptyInputError("no clip present in both prediction and ground-truth directories")
    return {"clips": reports, "aggregate": aggregate(reports), "missing": missing}


def write_predictions(model: ILDiffModel, data: ClipDataset, out, cfg: RunConfig, split: str = "heldout",
                      **infer_overrides) -> list[str]:
    """Save predicted alpha as ``out/{id}/alpha`` frame directories."""
    out = Path(out)
    idx = data.indices(split)
    kw = _infer_kwargs(cfg, **infer_overrides)
    for s in _chunks(len(idx), EVAL_CHUNK):
        ids = idx[s]
        pred = infer_alpha(model, data.rgb[ids], **kw)
        for j, i in enumerate(ids):
            save_clip(alpha_to_clip(pred[j]), out / data.ids[i] / "alpha")
    return [data.ids[i] for i in idx]


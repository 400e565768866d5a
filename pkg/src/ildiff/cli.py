"""Command line entry point: ``ildiff <command> [options]``.

Exit codes: 0 success, 2 validation error, 3 non-convergence,
4 missing dependency, 1 anything else raised by the package.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .dataset_io import TASD_REFERENCE, load_clip, load_manifest, manifest_stats, save_clip
from .errors import ILDiffError, ValidationError
from .latent import alpha_to_clip, as_rgb_tensor
from .metrics import ClipReport
from . import pipeline
from .synth import ClipTemplate, generate_dataset

log = logging.getLogger("ildiff")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "temporal_depth", None) is not None:
        cfg = dataclasses.replace(cfg, adapter=dataclasses.replace(cfg.adapter, temporal_depth=args.temporal_depth))
    if getattr(args, "data", None):
        cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, root=args.data, manifest=None))
    cfg.validate()
    return cfg


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, ensure_ascii=False))


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg.data.root)
    count = args.count if args.count is not None else cfg.data.synth_count
    manifest = generate_dataset(count, ClipTemplate.from_dict(cfg.data.template), cfg.seed, out)
    _print({"manifest": str(manifest), "count": count})
    return 0


def cmd_stats(args) -> int:
    cfg = _config(args)
    path = args.manifest or cfg.data.manifest_path
    stats = manifest_stats(load_manifest(path))
    _print({
        "sample_count": stats.sample_count,
        "avg_description_length": stats.avg_description_length,
        "avg_frame_count": stats.avg_frame_count,
        "top_trigger_words": stats.top_trigger_words(args.top),
        "reference": TASD_REFERENCE,
    })
    return 0


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    _print({"checkpoint": str(pipeline.stage_pretrain(cfg, out=args.out))})
    return 0


def cmd_distill(args) -> int:
    cfg = _config(args)
    _print({"checkpoint": str(pipeline.stage_distill(cfg, pretrain=args.pretrain, out=args.out))})
    return 0


def cmd_finetune(args) -> int:
    cfg = _config(args)
    ckpt = pipeline.stage_finetune(cfg, pretrain=args.pretrain, distill=args.distill, out=args.out)
    _print({"checkpoint": str(ckpt)})
    return 0


def _infer_overrides(args, cfg: RunConfig) -> RunConfig:
    infer = cfg.infer
    if args.with_sampling:
        infer = dataclasses.replace(infer, with_sampling=True)
    if args.alpha_prior:
        infer = dataclasses.replace(infer, alpha_prior=args.alpha_prior)
    cfg = dataclasses.replace(cfg, infer=infer)
    cfg.validate()
    return cfg


def cmd_infer(args) -> int:
    cfg = _infer_overrides(args, _config(args))
    model, meta = pipeline.load_model(args.checkpoint or cfg.checkpoint_path("finetune"))
    kw = pipeline._infer_kwargs(cfg, guidance=not args.no_guidance)
    if args.input:
        clip = load_clip(args.input)
        pipeline.check_compatible(meta, (clip.height, clip.width))
        alpha = pipeline.infer_alpha(model, as_rgb_tensor(clip), **kw)
        out = Path(args.out or "alpha_out")
        save_clip(alpha_to_clip(alpha), out)
        _print({"frames": clip.frame_count, "out": str(out)})
        return 0
    data = pipeline.load_dataset(cfg)
    pipeline.check_compatible(meta, data.frame_size)
    out = Path(args.out or Path(cfg.run_dir) / "predictions")
    ids = pipeline.write_predictions(model, data, out, cfg, split=args.split, guidance=not args.no_guidance)
    _print({"clips": len(ids), "out": str(out)})
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    manifest = args.manifest or cfg.data.manifest_path
    gt = args.gt or Path(manifest).parent
    result = pipeline.eval_dirs(args.pred, gt, manifest)
    lines = [json.dumps(r.to_json()) for r in result["clips"]]
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        for line in lines:
            print(line)
    agg = {k: ClipReport.json_value(v) for k, v in result["aggregate"].items()}
    _print({"aggregate": agg, "missing": result["missing"]})
    if result["missing"]:
        log.error("skipped %d clips without a prediction/ground-truth pair: %s",
                  len(result["missing"]), ", ".join(result["missing"]))
        return ValidationError.exit_code
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    depths = [int(d) for d in args.depths.split(",")] if args.depths else list(pipeline.DEFAULT_DEPTHS)
    rows = pipeline.ablate_depth(cfg, depths, pretrain=args.pretrain, distill=args.distill, out=args.out)
    _print([{k: ClipReport.json_value(v) for k, v in r.items()} for r in rows])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ildiff", description="Transparent sticker alpha pipeline at desk scale.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--data", help="dataset root (overrides data.root)")
        sp.set_defaults(fn=fn)
        return sp

    sp = command("synth", cmd_synth, "generate a synthetic sticker dataset")
    sp.add_argument("--count", type=int)

    sp = command("stats", cmd_stats, "manifest statistics")
    sp.add_argument("--manifest")
    sp.add_argument("--top", type=int, default=10)

    command("pretrain", cmd_pretrain, "train the surrogate VAE and the denoiser")

    sp = command("distill", cmd_distill, "distill the teacher into the student encoder")
    sp.add_argument("--pretrain", help="pretrain checkpoint (recorded, not required)")

    for name, fn, help_ in (("finetune", cmd_finetune, "train the adapter and the transparency codec"),
                            ("ablate", cmd_ablate, "temporal-depth ablation table")):
        sp = command(name, fn, help_)
        sp.add_argument("--pretrain")
        sp.add_argument("--distill")
        if name == "finetune":
            sp.add_argument("--temporal-depth", type=int)
        else:
            sp.add_argument("--depths", help="comma separated, default 0,3,5,8")

    sp = command("infer", cmd_infer, "predict alpha for a frame directory or a dataset split")
    sp.add_argument("--checkpoint")
    sp.add_argument("--input", help="directory of frame_XXXX.png")
    sp.add_argument("--split", default="heldout", choices=("train", "heldout", "all"))
    sp.add_argument("--with-sampling", action="store_true")
    sp.add_argument("--alpha-prior", choices=("ones", "zero-offset"))
    sp.add_argument("--no-guidance", action="store_true", help="force adapter guidance to zero")

    sp = command("eval", cmd_eval, "score predicted alpha clips against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt")
    sp.add_argument("--manifest")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ILDiffError as exc:
        log.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

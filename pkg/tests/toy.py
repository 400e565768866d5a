"""Tiny end-to-end configuration shared by the pipeline and CLI tests."""

from ildiff.config import config_from_dict

TINY = {
    "seed": 0,
    "data": {
        "holdout_fraction": 0.25,
        "synth_count": 8,
        "template": {"height": 32, "width": 32, "frame_count": [4, 4], "size": [5.0, 8.0],
                     "semi_open_prob": 1.0, "shapes": ["ring", "rounded-rect"]},
    },
    "model": {"latent_channels": 4, "vae_width": 4, "tr_width": 4, "denoiser_width": 8},
    "adapter": {"temporal_depth": 2, "feature_channels": 8, "groups": 2, "student_width": 4,
                "teacher_width": 8},
    "schedule": {"T": 10},
    "pretrain": {"vae_steps": 3, "denoiser_steps": 2, "batch_size": 4, "tau_vae": 1.0},
    "distill": {"steps": 3, "batch_size": 4, "max_frames": 16, "heldout_frames": 8, "threshold": 10.0},
    "finetune": {"steps": 3, "batch_size": 2},
    "infer": {"sampling_start": 3},
}


def tiny_dict(root, run_dir, **over):
    d = {k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY.items()}
    d["data"] = dict(d["data"], root=str(root))
    d["run_dir"] = str(run_dir)
    for k, v in over.items():
        if isinstance(v, dict):
            d[k] = dict(d.get(k, {}), **v)
        else:
            d[k] = v
    return d


def tiny_config(root, run_dir, **over):
    return config_from_dict(tiny_dict(root, run_dir, **over))

import dataclasses
import json
import shutil

import numpy as np
import pytest
import torch

from ildiff import pipeline as P
from ildiff.dataset_io import load_clip
from ildiff.errors import CompatibilityError, ConfigError, DependencyError, EmptyInputError, NonConvergenceError
from ildiff.model import GROUPS, TRAINABLE
from ildiff.synth import ClipTemplate, generate_dataset

from toy import tiny_config


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """Tiny dataset plus one pass of every stage."""
    root = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config(root / "data", root / "run")
    generate_dataset(cfg.data.synth_count, ClipTemplate.from_dict(cfg.data.template), cfg.seed, cfg.data.root)
    data = P.load_dataset(cfg)
    pre = P.stage_pretrain(cfg, data=data)
    dis = P.stage_distill(cfg, pretrain=pre, data=data)
    fin = P.stage_finetune(cfg, data=data)
    return {"cfg": cfg, "data": data, "pretrain": pre, "distill": dis, "finetune": fin, "root": root}


def _meta(path):
    return json.loads((path / "index.json").read_text())["metadata"]


def test_dataset_split(run):
    data = run["data"]
    assert data.rgb.shape == (8, 4, 3, 32, 32)
    assert data.alpha.shape == (8, 4, 1, 32, 32)
    assert data.train == list(range(6)) and data.heldout == [6, 7]
    assert data.holes.sum() > 0


@pytest.mark.parametrize("stage", ["pretrain", "distill", "finetune"])
def test_freeze_ledger(run, stage):
    meta = _meta(run[stage])
    assert meta["stage"] == stage
    assert set(meta["changed_groups"]) == set(TRAINABLE[stage])
    for g in GROUPS:
        same = meta["group_hashes_before"][g] == meta["group_hashes"][g]
        assert same == (g not in TRAINABLE[stage])
    assert set(meta["frozen"]) | set(meta["trainable"]) == set(GROUPS)


def test_teacher_and_vae_hash_constant_across_stages(run):
    metas = [_meta(run[s]) for s in ("pretrain", "distill", "finetune")]
    assert len({m["group_hashes"]["teacher"] for m in metas}) == 1
    assert metas[1]["group_hashes"]["vae"] == metas[0]["group_hashes"]["vae"]
    assert metas[2]["group_hashes"]["vae"] == metas[0]["group_hashes"]["vae"]
    assert metas[2]["group_hashes"]["student"] == metas[1]["group_hashes"]["student"]


def test_one_step_pretrain_loadable_and_round_trip(run, tmp_path):
    cfg = dataclasses.replace(run["cfg"], pretrain=dataclasses.replace(run["cfg"].pretrain, vae_steps=1,
                                                                      denoiser_steps=1))
    ck = P.stage_pretrain(cfg, out=tmp_path / "p", data=run["data"])
    model, meta = P.load_model(ck)
    assert meta["step"] == 2
    again, _ = P.load_model(ck)
    x = run["data"].rgb[0]
    assert torch.equal(model.vae.decode(model.vae.encode(x)), again.vae.decode(again.vae.encode(x)))


def test_pretrain_loss_trends_down(run, tmp_path):
    cfg = dataclasses.replace(run["cfg"], pretrain=dataclasses.replace(run["cfg"].pretrain, vae_steps=60,
                                                                      denoiser_steps=1))
    ck = P.stage_pretrain(cfg, out=tmp_path / "p", data=run["data"])
    losses = [json.loads(line)["loss"] for line in (ck / "train_log.jsonl").read_text().splitlines()
              if json.loads(line)["stage"] == "pretrain-vae"]
    assert np.mean(losses[-10:]) < losses[0]


def test_pretrain_non_convergence(run, tmp_path):
    cfg = dataclasses.replace(run["cfg"], pretrain=dataclasses.replace(run["cfg"].pretrain, tau_vae=1e-9))
    with pytest.raises(NonConvergenceError) as info:
        P.stage_pretrain(cfg, out=tmp_path / "p", data=run["data"])
    assert info.value.achieved > 1e-9


def test_distill_non_convergence(run, tmp_path):
    cfg = dataclasses.replace(run["cfg"], distill=dataclasses.replace(run["cfg"].distill, threshold=1e-6))
    with pytest.raises(NonConvergenceError):
        P.stage_distill(cfg, out=tmp_path / "d", data=run["data"])


def test_training_log_is_json_lines(run):
    lines = (run["finetune"] / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == run["cfg"].finetune.steps
    rec = json.loads(lines[0])
    assert rec["stage"] == "finetune" and rec["l_r"] is None
    assert rec["total"] == pytest.approx(rec["l_alpha"] + rec["l_rgb"] + rec["l_p"], rel=1e-5)


@pytest.mark.parametrize("stage", ["pretrain", "distill", "finetune"])
def test_byte_identical_reruns(run, tmp_path, stage):
    cfg, data = run["cfg"], run["data"]
    fn = {"pretrain": lambda o: P.stage_pretrain(cfg, out=o, data=data),
          "distill": lambda o: P.stage_distill(cfg, pretrain=run["pretrain"], out=o, data=data),
          "finetune": lambda o: P.stage_finetune(cfg, out=o, data=data)}[stage]
    a = fn(tmp_path / "a")
    for f in ("index.json", "params.bin", "train_log.jsonl"):
        assert (a / f).read_bytes() == (run[stage] / f).read_bytes()


def test_finetune_requires_upstream(run, tmp_path):
    cfg = run["cfg"]
    with pytest.raises(DependencyError):
        P.stage_finetune(cfg, pretrain=tmp_path / "none", out=tmp_path / "f", data=run["data"])
    with pytest.raises(DependencyError):
        P.stage_finetune(cfg, distill=tmp_path / "none", out=tmp_path / "f", data=run["data"])
    with pytest.raises(DependencyError):
        # stage mix-up: a distill checkpoint offered as pretrain
        P.stage_finetune(cfg, pretrain=run["distill"], out=tmp_path / "f", data=run["data"])


def test_finetune_reduces_heldout_alpha_loss(run, tmp_path):
    cfg = dataclasses.replace(run["cfg"], finetune=dataclasses.replace(run["cfg"].finetune, steps=40, lr=3e-3))
    ck = P.stage_finetune(cfg, out=tmp_path / "f", data=run["data"])
    m = _meta(ck)["metrics"]
    assert m["final_heldout_l_alpha"] < m["initial_heldout_l_alpha"]


def test_depth_zero_finetune_is_per_frame(run, tmp_path):
    cfg = dataclasses.replace(run["cfg"], adapter=dataclasses.replace(run["cfg"].adapter, temporal_depth=0))
    model, _ = P.load_model(P.stage_finetune(cfg, out=tmp_path / "f", data=run["data"]))
    clip = run["data"].rgb[0]
    perm = torch.tensor([2, 0, 3, 1])
    a = P.infer_alpha(model, clip)
    assert torch.allclose(P.infer_alpha(model, clip[perm]), a[perm], atol=1e-6)


def test_infer_contract(run):
    model, meta = P.load_model(run["finetune"])
    clip = run["data"].rgb[6]
    a = P.infer_alpha(model, clip)
    assert a.shape == (4, 1, 32, 32)
    assert torch.equal(a, P.infer_alpha(model, clip))
    assert 0 <= a.min() and a.max() <= 1
    kw = P._infer_kwargs(run["cfg"], with_sampling=True)
    s1, s2 = P.infer_alpha(model, clip, **kw), P.infer_alpha(model, clip, **kw)
    assert torch.equal(s1, s2) and s1.shape == a.shape
    z = P.infer_alpha(model, clip, alpha_prior="zero-offset")
    assert z.shape == a.shape
    with pytest.raises(ConfigError):
        P.infer_alpha(model, clip, alpha_prior="gt")
    with pytest.raises(CompatibilityError):
        P.check_compatible(meta, (64, 64))


def test_evaluate_guidance_toggle(run):
    model, _ = P.load_model(run["finetune"])
    reports, agg = P.evaluate(model, run["data"], "heldout", run["cfg"])
    _, agg0 = P.evaluate(model, run["data"], "heldout", run["cfg"], guidance=False)
    assert len(reports) == 2
    assert set(agg) >= {"psnr_mean", "ssim_mean", "flicker", "hole_residue"}
    assert agg0["hole_residue"] is not None


def test_ablate_depth_table(run, tmp_path):
    rows = P.ablate_depth(run["cfg"], (0, 2), run["pretrain"], run["distill"], out=tmp_path, data=run["data"])
    assert [r["depth"] for r in rows] == [0, 2]
    assert all(r[k] is not None for r in rows for k in ("psnr_mean", "ssim_mean"))
    assert (tmp_path / "ablation.csv").read_text().splitlines()[0].startswith("depth,psnr_mean,ssim_mean")
    assert len(json.loads((tmp_path / "ablation.json").read_text())) == 2
    assert P.DEFAULT_DEPTHS == (0, 3, 5, 8)
    with pytest.raises(ConfigError):
        P.ablate_depth(run["cfg"], (), data=run["data"])


def test_eval_dirs(run, tmp_path):
    root = run["cfg"].data.root
    manifest = run["cfg"].data.manifest_path
    res = P.eval_dirs(root, root, manifest)
    agg = res["aggregate"]
    assert agg["ssim_mean"] == 1.0 and agg["hole_residue"] == 0.0 and res["missing"] == []
    # predictions for a subset: the rest is listed as missing
    pred = tmp_path / "pred"
    model, _ = P.load_model(run["finetune"])
    ids = P.write_predictions(model, run["data"], pred, run["cfg"])
    res = P.eval_dirs(pred, root, manifest)
    assert sorted(res["missing"]) == sorted(set(run["data"].ids) - set(ids))
    assert len(res["clips"]) == len(ids)
    for key in ("ssim_mean", "flicker", "hole_residue"):
        vals = [getattr(r, key) for r in res["clips"]]
        assert res["aggregate"][key] == pytest.approx(sum(vals) / len(vals), abs=1e-12)
    loaded = load_clip(pred / ids[0] / "alpha")
    assert loaded.frame_count == 4
    with pytest.raises(EmptyInputError):
        P.eval_dirs(tmp_path / "nothing", root, manifest)


def test_load_dataset_errors(run, tmp_path):
    cfg = dataclasses.replace(run["cfg"], data=dataclasses.replace(run["cfg"].data, root=str(tmp_path)))
    with pytest.raises(ConfigError):
        P.load_dataset(cfg)
    shutil.copytree(run["cfg"].data.root, tmp_path / "d")
    shutil.rmtree(tmp_path / "d" / "clip_00003" / "rgb")
    cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, root=str(tmp_path / "d")))
    with pytest.raises(Exception) as info:
        P.load_dataset(cfg)
    assert getattr(info.value, "exit_code", None) == 2


def test_finetune_loss_guidance_mask(run):
    model, _ = P.load_model(run["finetune"])
    with torch.no_grad():
        model.adapter.projection.conv.weight.normal_(0, 0.3)
    x = run["data"].rgb[0]
    a = run["data"].alpha[0]
    ones = torch.ones_like(a)
    with torch.no_grad():
        z = model.vae.encode(x)
        feats = model.adapter.encode_frames(x)[None]
        full = P.finetune_loss(model, x, a, ones, feats, z, run["cfg"].loss_weights)
        kept = P.finetune_loss(model, x, a, ones, feats, z, run["cfg"].loss_weights, torch.ones(4, 1, 1, 1))
        dropped = P.finetune_loss(model, x, a, ones, feats, z, run["cfg"].loss_weights, torch.zeros(4, 1, 1, 1))
        dz = model.e_tr(x, ones)
        _, alpha_hat = model.d_tr(z + dz)
    assert float(kept.total) == float(full.total)
    assert float(dropped.components["alpha"]) == pytest.approx(float(((alpha_hat - a) ** 2).mean()), rel=1e-6)
    assert float(dropped.components["alpha"]) != float(full.components["alpha"])


def test_guidance_dropout_validated(run):
    cfg = run["cfg"]
    bad = dataclasses.replace(cfg, finetune=dataclasses.replace(cfg.finetune, guidance_dropout=1.0))
    with pytest.raises(ConfigError):
        bad.validate()

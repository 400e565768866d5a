import json
import shutil
import subprocess
import sys

import pytest

from ildiff.cli import main

from toy import tiny_dict


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(tiny_dict(root / "data", root / "run")))
    base = ["--config", str(cfg_path)]
    assert main(["synth", *base]) == 0
    assert main(["pretrain", *base]) == 0
    assert main(["distill", *base]) == 0
    assert main(["finetune", *base]) == 0
    return {"root": root, "base": base}


def test_stages_write_checkpoints(cli_run):
    run = cli_run["root"] / "run"
    for stage in ("pretrain", "distill", "finetune"):
        assert (run / stage / "index.json").is_file()
        assert (run / stage / "train_log.jsonl").is_file()


def test_stats(cli_run, capsys):
    assert main(["stats", *cli_run["base"], "--top", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["sample_count"] == 8 and out["avg_frame_count"] == 4.0
    assert len(out["top_trigger_words"]) <= 2


def test_infer_and_eval(cli_run, capsys):
    root, base = cli_run["root"], cli_run["base"]
    pred = root / "pred"
    assert main(["infer", *base, "--out", str(pred), "--split", "all"]) == 0
    capsys.readouterr()
    assert main(["eval", *base, "--pred", str(pred), "--out", str(root / "reports.jsonl")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["missing"] == []
    assert len((root / "reports.jsonl").read_text().splitlines()) == 8
    # eval of ground truth against itself
    assert main(["eval", *base, "--pred", str(root / "data")]) == 0
    lines = capsys.readouterr().out
    agg = json.loads(lines[lines.index('{\n'):])["aggregate"]
    assert agg["ssim_mean"] == 1.0 and agg["psnr_mean"] is None and agg["hole_residue"] == 0.0


def test_eval_missing_pair_exit_code(cli_run, capsys):
    root, base = cli_run["root"], cli_run["base"]
    pred = root / "pred_partial"
    assert main(["infer", *base, "--out", str(pred)]) == 0
    assert main(["eval", *base, "--pred", str(pred)]) == 2
    capsys.readouterr()


def test_infer_single_clip(cli_run):
    root, base = cli_run["root"], cli_run["base"]
    out = root / "single"
    assert main(["infer", *base, "--input", str(root / "data" / "clip_00000" / "rgb"), "--out", str(out),
                 "--with-sampling"]) == 0
    assert len(list(out.glob("frame_*.png"))) == 4
    assert main(["infer", *base, "--input", str(root / "data" / "clip_00000" / "rgb"), "--out", str(out),
                 "--no-guidance", "--alpha-prior", "zero-offset"]) == 0


def test_ablate(cli_run, capsys):
    root, base = cli_run["root"], cli_run["base"]
    assert main(["ablate", *base, "--depths", "0,1", "--out", str(root / "abl")]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["depth"] for r in rows] == [0, 1]
    assert (root / "abl" / "ablation.csv").is_file()


def test_dependency_exit_code(cli_run, tmp_path):
    base = cli_run["base"]
    assert main(["finetune", *base, "--distill", str(tmp_path / "missing"), "--out", str(tmp_path / "f")]) == 4


def test_non_convergence_exit_code(cli_run, tmp_path):
    d = tiny_dict(cli_run["root"] / "data", tmp_path, pretrain={"tau_vae": 1e-9})
    (tmp_path / "c.json").write_text(json.dumps(d))
    assert main(["pretrain", "--config", str(tmp_path / "c.json")]) == 3


def test_validation_exit_codes(cli_run, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"seed": 0, "bogus": 1}))
    assert main(["stats", "--config", str(tmp_path / "bad.json")]) == 2
    (tmp_path / "m.json").write_text("[{\"id\": \"x\"}]")
    assert main(["stats", "--manifest", str(tmp_path / "m.json")]) == 2
    assert main(["synth", "--count", "0", "--out", str(tmp_path / "s")]) == 2


def test_overrides(cli_run, tmp_path):
    base = cli_run["base"]
    out = tmp_path / "f"
    assert main(["finetune", *base, "--seed", "3", "--temporal-depth", "0", "--out", str(out)]) == 0
    meta = json.loads((out / "index.json").read_text())["metadata"]
    assert meta["seed"] == 3 and meta["adapter"]["temporal_depth"] == 0


@pytest.mark.skipif(shutil.which("ildiff") is None, reason="console script not installed")
def test_console_script_help():
    res = subprocess.run(["ildiff", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "finetune" in res.stdout


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ildiff.cli", "stats", "--manifest", "/nonexistent.json"],
                         capture_output=True, text=True)
    assert res.returncode == 2

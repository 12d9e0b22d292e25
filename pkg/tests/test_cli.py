import json

import numpy as np
import pytest

from eigenmesh.cli import main
from eigenmesh.meshio import load_mesh_dir


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    """synth -> precompute -> train once for all CLI tests (tiny scale)."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    bundle = root / "bundle"
    run = root / "run"
    assert main([
        "synth", "--out", str(data), "--samples", "48", "--subdivisions", "2",
        "--seed", "3",
    ]) == 0
    assert main([
        "precompute", "--data", str(data), "--seg", str(data / "segmentation.txt"),
        "--k", "16", "--kappa", "2", "--out", str(bundle),
    ]) == 0
    config = {
        "model": "vae", "epochs": 2, "batch_size": 16, "seed": 1,
        "alpha": 50.0, "eta1": 1.0, "eta2": 0.5,
        "kappa": 2, "num_modes": 16, "sampling_factors": [4, 2, 2, 2],
        "data": str(data),
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config))
    assert main([
        "train", "--config", str(cfg_path), "--bundle", str(bundle),
        "--out", str(run),
    ]) == 0
    ckpt = json.loads((run / "run_manifest.json").read_text())["final_checkpoint"]
    return {"data": data, "bundle": bundle, "run": run, "ckpt": ckpt, "root": root}


def test_synth_outputs(pipeline_dirs):
    data = pipeline_dirs["data"]
    meshes = load_mesh_dir(data / "meshes")
    assert len(meshes) == 48
    assert (data / "segmentation.txt").exists()
    factors = (data / "factors.csv").read_text().splitlines()
    assert len(factors) == 49  # header + 48 rows
    manifest = json.loads((data / "run_manifest.json").read_text())
    assert manifest["command"] == "synth"


def test_precompute_bundle_contents(pipeline_dirs):
    bundle = pipeline_dirs["bundle"]
    manifest = json.loads((bundle / "manifest.json").read_text())
    assert manifest["kappa"] == 2
    assert (bundle / "basis.bin").exists()
    assert (bundle / "stats.bin").exists()
    assert (bundle / "template.ply").exists()


def test_train_outputs(pipeline_dirs):
    run = pipeline_dirs["run"]
    assert (run / "loss_curves.csv").exists()
    manifest = json.loads((run / "run_manifest.json").read_text())
    assert manifest["config"]["epochs"] == 2


def test_sample_and_traverse(pipeline_dirs, tmp_path):
    out = tmp_path / "samples"
    assert main([
        "sample", "--model", pipeline_dirs["ckpt"], "--bundle",
        str(pipeline_dirs["bundle"]), "-n", "3", "--seed", "0",
        "--out", str(out),
    ]) == 0
    assert len(list(out.glob("sample_*.ply"))) == 3

    tout = tmp_path / "traverse"
    assert main([
        "traverse", "--model", pipeline_dirs["ckpt"], "--bundle",
        str(pipeline_dirs["bundle"]), "--dim", "0", "--out", str(tout),
    ]) == 0
    assert (tout / "dim0_low.ply").exists()
    assert (tout / "dim0_high.ply").exists()
    lines = (tout / "dim0_distances.csv").read_text().splitlines()
    assert lines[0] == "vertex,attribute,distance"
    assert len(lines) == 163


def test_evaluate_report(pipeline_dirs, tmp_path):
    report_path = tmp_path / "report.json"
    assert main([
        "evaluate", "--model", pipeline_dirs["ckpt"], "--bundle",
        str(pipeline_dirs["bundle"]), "--test", str(pipeline_dirs["data"]),
        "--samples", "8", "--out", str(report_path),
    ]) == 0
    report = json.loads(report_path.read_text())
    for key in ("diversity", "jsd", "mmd", "cov_percent", "one_nna_delta_percent",
                "mean_reconstruction", "traversal_profile"):
        assert key in report
    assert 0 <= report["cov_percent"] <= 100
    assert 0 <= report["one_nna_delta_percent"] <= 50


def test_distributions_report(pipeline_dirs, tmp_path):
    out = tmp_path / "dist.json"
    assert main([
        "distributions", "--data", str(pipeline_dirs["data"]), "--bundle",
        str(pipeline_dirs["bundle"]), "--out", str(out),
    ]) == 0
    report = json.loads(out.read_text())
    assert report["bins"] == 64
    assert len(report["components"]) == 8  # F=4, kappa=2


def test_baseline_pca_cli(pipeline_dirs, tmp_path):
    out = tmp_path / "pca"
    assert main([
        "baseline-pca", "--data", str(pipeline_dirs["data"]), "--seg",
        str(pipeline_dirs["data"] / "segmentation.txt"), "--k", "2",
        "--sample", "4", "--out", str(out),
    ]) == 0
    assert len(list(out.glob("pca_sample_*.ply"))) == 4
    seams = json.loads((out / "seam_discontinuity.json").read_text())
    assert len(seams["per_sample"]) == 4


def test_ablation_presets(pipeline_dirs, tmp_path):
    run = tmp_path / "ablate"
    cfg = {
        "model": "vae", "epochs": 1, "batch_size": 16, "seed": 1,
        "alpha": 50.0, "eta1": 1.0, "eta2": 0.5,
        "kappa": 2, "num_modes": 16, "sampling_factors": [4, 2, 2, 2],
        "data": str(pipeline_dirs["data"]),
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main([
        "train", "--config", str(cfg_path), "--bundle", str(pipeline_dirs["bundle"]),
        "--out", str(run), "--ablate", "no-le-encoder",
    ]) == 0
    manifest = json.loads((run / "run_manifest.json").read_text())
    assert manifest["config"]["eta1"] == 0.0
    assert manifest["config"]["eta2"] == 0.5


def test_first_k_ablation_requires_matching_bundle(pipeline_dirs, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "model": "vae", "epochs": 1, "kappa": 2, "num_modes": 16,
        "sampling_factors": [4, 2, 2, 2], "data": str(pipeline_dirs["data"]),
    }))
    with pytest.raises(SystemExit):
        main([
            "train", "--config", str(cfg_path), "--bundle", str(pipeline_dirs["bundle"]),
            "--out", str(tmp_path / "x"), "--ablate", "first-k",
        ])


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["synth", "--nonsense"])
    assert err.value.code == 2


def test_toml_config(pipeline_dirs, tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        'model = "vae"\nepochs = 1\nkappa = 2\nnum_modes = 16\n'
        "sampling_factors = [4, 2, 2, 2]\n"
        f'data = "{pipeline_dirs["data"]}"\n'
    )
    out = tmp_path / "toml_run"
    assert main([
        "train", "--config", str(cfg_path), "--bundle", str(pipeline_dirs["bundle"]),
        "--out", str(out),
    ]) == 0
    assert (out / "loss_curves.csv").exists()

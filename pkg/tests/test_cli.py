import json
import shutil

import numpy as np
import pytest
import yaml

from advnids import pipeline
from advnids.cli import main
from advnids.config import RunConfig
from advnids.errors import InvariantViolation
from advnids.evaluation import run_all
from advnids.pipeline import STAGES, Workspace

from conftest import TINY


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.yaml"
    p.write_text(yaml.safe_dump(TINY))
    return p


@pytest.fixture(scope="module")
def full_run(config_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    cfg = RunConfig.load(config_file, [f"output.dir={out}"])
    return cfg, Workspace(cfg)


def test_run_writes_every_stage(full_run):
    _, ws = full_run
    for stage in STAGES:
        man = ws.manifest(stage)
        assert man is not None and man["stage"] == stage
    report = ws.stage_dir("report")
    for name in ("performance", "detection_rate", "per_class", "fgsm_sweep", "cross_test", "ablation"):
        assert (report / "tables" / f"{name}.csv").exists()
        assert (report / "tables" / f"{name}.md").read_text().startswith("### ")
    assert (report / "figures" / "detection_rate.svg").exists()
    man = ws.manifest("report")
    assert set(man["dataset_checksums"]) == {"train", "test"}
    assert man["config_hash"] == ws.cfg.hash()


def test_prepare_is_idempotent(full_run, config_file, capsys):
    cfg, ws = full_run
    before = ws.manifest_path("prepare").read_bytes()
    assert main(["prepare", "--config", str(config_file), "--out", str(cfg.out_dir)]) == 0
    assert "skipped" in capsys.readouterr().out
    assert ws.manifest_path("prepare").read_bytes() == before


def test_staged_eval_matches_in_memory(full_run):
    cfg, ws = full_run
    staged = pipeline.load_report(ws, "eval").to_dict()
    staged_abl = pipeline.load_report(ws, "ablate").to_dict()
    exp, abl = run_all(cfg)
    assert staged["cells"] == exp.to_dict()["cells"]
    assert staged["fgsm_sweep"] == exp.to_dict()["fgsm_sweep"]
    assert staged_abl["cells"] == abl.to_dict()["cells"]


def test_tampered_artifact_is_stale(full_run, tmp_path, capsys):
    cfg, ws = full_run
    copy = tmp_path / "copy"
    shutil.copytree(cfg.out_dir, copy)
    victim = next((copy / cfg.hash() / "train" / "seed-0").glob("*.json"))
    victim.write_text(victim.read_text() + " ")
    code = main(["eval", "--config", str(ws.root / "config.yaml"), "--out", str(copy)])
    assert code == 3
    assert "train" in capsys.readouterr().err


def test_retrained_upstream_invalidates_downstream(full_run, tmp_path):
    cfg, _ = full_run
    copy = tmp_path / "copy"
    shutil.copytree(cfg.out_dir, copy)
    cfg2 = RunConfig(json.loads(cfg.canonical())).with_overrides(f"output.dir={copy}")
    ws = Workspace(cfg2)
    # rewrite the attack manifest with a different upstream digest
    man = ws.manifest("attack")
    man["upstream"]["train"] = "0" * 64
    ws.manifest_path("attack").write_text(json.dumps(man))
    assert main(["defend", "--config", str(ws.root / "config.yaml"), "--out", str(copy)]) == 3


def test_missing_upstream(config_file, tmp_path, capsys):
    assert main(["train", "--config", str(config_file), "--out", str(tmp_path)]) == 3
    assert "prepare" in capsys.readouterr().err


def test_missing_data_file(tmp_path, capsys):
    code = main(["prepare", "--out", str(tmp_path), "--set", f"dataset.train_path={tmp_path / 'nope.csv'}",
                 "--set", f"dataset.test_path={tmp_path / 'nope2.csv'}"])
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    assert main(["prepare", "--out", str(tmp_path), "--set", "defense.bogus=1"]) == 2


def test_invariant_violation_exit_code(full_run, config_file, monkeypatch):
    cfg, _ = full_run

    def broken(defense, x):
        raise InvariantViolation("forced")

    monkeypatch.setattr(pipeline, "check_superset", broken)
    assert main(["eval", "--config", str(config_file), "--out", str(cfg.out_dir)]) == 4


def test_show_config(capsys):
    assert main(["show-config", "--seed", "3", "--seed", "4", "--subsample", "500"]) == 0
    out = capsys.readouterr().out
    doc = yaml.safe_load(out)
    assert doc["seeds"] == [3, 4]
    assert doc["subsample"] == {"train": 500, "test": 100}
    assert out.startswith("# config hash ")


def test_set_wins_over_shorthand(capsys):
    assert main(["show-config", "--eps", "0.3", "--set", "attack.fgsm_eps=0.2"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["attack"]["fgsm_eps"] == 0.2


def test_fgsm_eps_zero_leaves_metrics_unchanged(config_file, tmp_path):
    args = ["--config", str(config_file), "--out", str(tmp_path), "--method", "fgsm", "--eps", "0"]
    for stage in ("prepare", "train", "attack", "defend", "eval"):
        assert main([stage, *args]) == 0
    (root,) = [p for p in tmp_path.iterdir() if p.name != "data"]
    cfg = RunConfig.load(root / "config.yaml", [f"output.dir={tmp_path}"])
    rep = pipeline.load_report(Workspace(cfg), "eval")
    assert rep.conditions == ["unmodified", "FGSM"]
    for m in rep.models:
        assert rep.cells[m]["FGSM"]["mean"] == rep.cells[m]["unmodified"]["mean"]


def test_synth_command(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "d"), "--train-rows", "50", "--test-rows", "20"]) == 0
    paths = capsys.readouterr().out.split()
    assert len(paths) == 2
    assert all(np.loadtxt(p, delimiter=",", dtype=str).shape[0] >= 20 for p in paths)


def test_artifacts_independent_of_output_root(full_run, config_file, tmp_path):
    cfg, ws = full_run
    assert main(["run", "--config", str(config_file), "--out", str(tmp_path)]) == 0
    other = tmp_path / cfg.hash()
    for p in sorted(ws.root.rglob("*")):
        if p.is_file() and p.name != "config.yaml":
            assert (other / p.relative_to(ws.root)).read_bytes() == p.read_bytes(), p.relative_to(ws.root)

import json

import pytest

from advnids.config import DEFAULTS, RunConfig, parse_override
from advnids.errors import ContractViolation


def test_defaults_round_trip(tmp_path):
    cfg = RunConfig()
    assert cfg.to_dict() == DEFAULTS
    p = tmp_path / "c.yaml"
    p.write_text(cfg.dumps())
    assert RunConfig.load(p).hash() == cfg.hash()


def test_json_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seeds": [1, 2], "defense": {"fraction": 0.3}}))
    cfg = RunConfig.load(p)
    assert cfg.seeds == [1, 2]
    assert cfg["defense"]["fraction"] == 0.3
    assert cfg["defense"]["folds"] == 5


def test_override_parsing():
    assert parse_override("a.b=3") == (["a", "b"], 3)
    assert parse_override("seeds=[0, 1]") == (["seeds"], [0, 1])
    assert parse_override("output.dir=x") == (["output", "dir"], "x")
    with pytest.raises(ContractViolation):
        parse_override("novalue")


def test_overrides_change_hash():
    base = RunConfig()
    assert base.with_overrides("defense.fraction=0.3").hash() != base.hash()
    assert base.with_overrides("defense.fraction=0.5").hash() == base.hash()


def test_output_dir_excluded_from_hash():
    assert RunConfig().with_overrides("output.dir=/tmp/elsewhere").hash() == RunConfig().hash()


@pytest.mark.parametrize("item", [
    "defense.folds=1",
    "defense.fraction=1.5",
    "seeds=[]",
    "attack.methods=[pgd]",
    "attack.fgsm_eps=-0.1",
    "subsample.train=3",
    "dataset.split=kfold",
    "nonsense.key=1",
    "defense.nonsense=1",
    "models.hyperparameters={DT: {bogus: 1}}",
])
def test_invalid_values_rejected(item):
    with pytest.raises(ContractViolation):
        RunConfig().with_overrides(item)


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        RunConfig.load(tmp_path / "absent.yaml")

import dataclasses

import pytest
import yaml

from splatlab import config as cfgmod
from splatlab.depth import ConfigError

BASE = {
    "schema_version": 1,
    "name": "tiny",
    "scene": {"resolution": 16, "n_gaussians": 40, "wall_grid": 4},
    "train": {"iterations": 3, "eval_every": 2, "loss": {"scales": [4, 8]}},
}


def load(data):
    return cfgmod.from_mapping(data)


def test_defaults_fill_in():
    cfg = load(BASE)
    assert cfg.train.iterations == 3
    assert cfg.train.loss.scales == (4, 8)
    assert cfg.train.loss.lambda_depth == 0.05
    assert cfg.init.mode == "dense"
    assert not cfg.is_sweep and cfg.run_seeds() == (0,)


def test_round_trip_through_yaml():
    cfg = load({**BASE, "seeds": [1, 2], "variants": [{"name": "DI", "loss": {"lambda_depth": 0.0}}]})
    back = load(yaml.safe_load(yaml.safe_dump(cfgmod.to_mapping(cfg))))
    assert back == cfg


@pytest.mark.parametrize(
    "patch, where",
    [
        ({"sceen": {}}, "sceen: unknown key; did you mean 'scene'?"),
        ({"train": {"iterations": 3, "los": {}}}, "train.los: unknown key; did you mean 'loss'?"),
        ({"train": {"loss": {"scales": [4, "8"]}}}, "train.loss.scales[1]: expected int"),
        ({"train": {"iterations": 0}}, "train"),
        ({"scene": {"kind": "teapot"}}, "scene"),
        ({"prior": {"a": -1.0}}, "prior"),
        ({"init": {"mode": "random"}}, "init"),
        ({"init": {"keep": ["means"]}}, "init.keep"),
        ({"schema_version": 2}, "schema_version"),
        ({"seeds": [1, 1]}, "seeds"),
        ({"name": "a/b"}, "name"),
        ({"train": {"lr": {"colors": 0}}}, "train.lr"),
        ({"train": {"background": [0, 0]}}, "train.background: expected 3 entries"),
        ({"train": {"loss": {"enable_hd": "yes"}}}, "train.loss.enable_hd: expected bool"),
    ],
)
def test_invalid_configs_are_rejected_with_a_path(patch, where):
    data = {**BASE, **patch}
    with pytest.raises(ConfigError) as info:
        load(data)
    assert where in str(info.value)


def test_variant_errors():
    with pytest.raises(ConfigError, match=r"variants\[0\].loss.lambda_dept: unknown key"):
        load({**BASE, "variants": [{"name": "x", "loss": {"lambda_dept": 0.0}}]})
    with pytest.raises(ConfigError, match="unique"):
        load({**BASE, "variants": [{"name": "x"}, {"name": "x"}]})
    with pytest.raises(ConfigError, match=r"variants\[bad\]"):
        load({**BASE, "variants": [{"name": "bad", "loss": {"scales": [8, 4]}}]})


def test_schema_version_required():
    data = dict(BASE)
    del data["schema_version"]
    with pytest.raises(ConfigError, match="schema_version"):
        load(data)


def test_variant_loss_overrides_base():
    cfg = load({**BASE, "variants": [{"name": "s4", "loss": {"scales": [4]}}]})
    assert cfg.variant_loss(cfg.variants[0]).scales == (4,)
    assert cfg.variant_loss(cfg.variants[0]).lambda_depth == cfg.train.loss.lambda_depth


def test_load_reports_bad_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        cfgmod.load(p)


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
    assert paths
    for p in paths:
        cfg = cfgmod.load(p)
        assert dataclasses.is_dataclass(cfg)

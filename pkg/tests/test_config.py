import sys

import pytest

from fgsync.config import RunConfig, config_dict, dump_config, load_config, parse_config
from fgsync.core import SensorKind
from fgsync.errors import ConfigError
from fgsync.pipeline import Scenario

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def test_default_round_trip():
    cfg = RunConfig()
    again = parse_config(tomllib.loads(dump_config(cfg)))
    assert again == cfg
    assert config_dict(again) == config_dict(cfg)


def test_custom_values_round_trip():
    data = {
        "scenario": "min-solver-error",
        "seed": 9,
        "window_seconds": 0.5,
        "consistency_gate": False,
        "mom": {"k_nn": 12, "radius": 0.6},
        "simulation": {"legs": [["zero_speed", 1.0], ["acceleration", 2.0]], "noise_scale": 0.0},
        "sensors": [
            {"id": "scan", "kind": "scan", "period": 0.5},
            {"id": "fix", "kind": "gps", "period": 1.0, "phase": 0.25, "sigma": [0.1, 0.1]},
        ],
    }
    cfg = parse_config(data)
    assert cfg.scenario is Scenario.MIN_SOLVER_ERROR
    assert cfg.pipeline.consistency_gate is None
    assert cfg.pipeline.mom.k_nn == 12
    assert cfg.simulation.profile().duration == 3.0
    assert [s.kind for s in cfg.sensors] == [SensorKind.SCAN, SensorKind.GPS]
    assert parse_config(tomllib.loads(dump_config(cfg))) == cfg


def test_execution_knobs_left_out_of_artifact_view():
    assert "workers" in config_dict(RunConfig())
    assert "workers" not in config_dict(RunConfig(), execution=False)


@pytest.mark.parametrize(
    "data",
    [
        {"colour": 1},
        {"mom": {"k": 3}},
        {"simulation": {"speed": 2}},
        {"sensors": [{"id": "a", "kind": "scan", "period": 0.5, "fov": 1}]},
        {"sensors": [{"id": "a", "kind": "scan"}]},
        {"sensors": [{"id": "a", "kind": "sonar", "period": 0.5}]},
        {"sensors": [{"id": "a", "kind": "gps", "period": 1}, {"id": "a", "kind": "gps", "period": 1}]},
        {"scenario": "fastest"},
        {"n_max": "ten"},
        {"workers": 0},
        {"evaluate_all_metrics": 1},
    ],
)
def test_strict_parsing_rejects(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    assert load_config(None) == RunConfig()

import math
from pathlib import Path

import pytest

from srcseek.config import ConfigError, ScenarioConfig, config_from_dict, dump_config, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_validate():
    cfg = config_from_dict({})
    assert cfg.scenario.n_sensors == 10 and cfg.mf.k_meas == 10 and cfg.mf.k_max == 50
    assert cfg.mb.n_particles == 4000 and math.isinf(cfg.mb.sense_radius_m)


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert isinstance(cfg, ScenarioConfig)


@pytest.mark.parametrize("data, path", [
    ({"scenaro": {}}, "scenaro"),
    ({"scenario": {"n_rep": 3}}, "scenario.n_rep"),
    ({"signal": {"rss": {"sigma": 3.0}}}, "signal.rss.sigma"),
])
def test_unknown_keys_name_their_path(data, path):
    with pytest.raises(ConfigError, match=rf"^{path}: unknown key"):
        config_from_dict(data)


@pytest.mark.parametrize("data, path", [
    ({"scenario": {"n_reps": 0}}, "scenario.n_reps"),
    ({"scenario": {"t_max": 2.5}}, "scenario.t_max"),
    ({"scenario": {"mode": "hybrid"}}, "scenario.mode"),
    ({"scenario": {"source_position_m": [1.0]}}, "scenario.source_position_m"),
    ({"mf": {"gamma_p": 0.4}}, "mf.gamma_p"),
    ({"mf": {"freeze_after_meas": "yes"}}, "mf.freeze_after_meas"),
    ({"environment": {"grid_file": "missing.txt"}}, "environment.grid_file"),
    ({"scenario": {"mode": "model_based"}}, "environment.workspace_m"),
])
def test_invalid_values_name_their_path(data, path):
    with pytest.raises(ConfigError, match=rf"^{path}"):
        config_from_dict(data)


def test_inf_string_and_integers_as_floats():
    cfg = config_from_dict({"mb": {"sense_radius_m": "inf", "gamma0": 5}})
    assert math.isinf(cfg.mb.sense_radius_m) and cfg.mb.gamma0 == 5.0


def test_dump_roundtrip(tmp_path):
    cfg = load_config(CONFIGS / "model_based_obstacles.yaml")
    path = tmp_path / "resolved.yaml"
    path.write_text(dump_config(cfg))
    again = load_config(path)
    # the resolved copy stores an absolute grid path, so it loads from anywhere
    assert again.to_dict() == cfg.to_dict()
    assert Path(again.environment.grid_file).is_absolute()


def test_replace_validates():
    cfg = config_from_dict({})
    assert cfg.replace(scenario={"n_reps": 3}).scenario.n_reps == 3
    with pytest.raises(ConfigError):
        cfg.replace(scenario={"n_reps": -1})


def test_bad_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("scenario: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(path)

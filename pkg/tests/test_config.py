import json

import pytest

from daecbf.config import ConfigError, RunConfig, load_file, parse_override, resolve


def test_parse_override_json_and_string():
    assert parse_override("x_max=-2.5") == ("x_max", -2.5)
    assert parse_override("theta0=[0.1, 0.2]") == ("theta0", [0.1, 0.2])
    assert parse_override("name=abc") == ("name", "abc")
    assert parse_override("k = 1") == ("k", 1)


@pytest.mark.parametrize("text", ["novalue", "=3"])
def test_parse_override_rejects(text):
    with pytest.raises(ConfigError):
        parse_override(text)


def test_defaults():
    cfg = RunConfig(command="verify", benchmark="wind_turbine")
    assert cfg.checks == ("correctness", "interior", "boundary")
    assert cfg.mode == "aware" and cfg.seed == 0


def test_flags_beat_file_which_beats_defaults():
    file_values = {"seed": 5, "samples": 100, "overrides": {"x_max": -2.0, "kappa": 2.0}}
    cfg = resolve("verify", file_values, {"benchmark": "wind_turbine", "seed": 9, "overrides": {"kappa": 3.0}})
    assert cfg.seed == 9
    assert cfg.samples == 100
    assert cfg.overrides == {"x_max": -2.0, "kappa": 3.0}


def test_checks_string_is_split():
    cfg = resolve("verify", None, {"benchmark": "wind_turbine", "checks": "boundary, interior"})
    assert cfg.checks == ("boundary", "interior")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"benchmark": None},
        {"mode": "sideways"},
        {"policy": "panic"},
        {"rank_tol": 0.0},
        {"manifold_tol": -1.0},
        {"boundary_band": 0.0},
        {"dt": -0.1},
        {"samples": 0},
        {"threads": 0},
        {"checks": ("correctness", "bogus")},
        {"checks": ()},
        {"box_lo": (0.0, 0.0, 0.0)},
    ],
)
def test_validation(kwargs):
    base = {"command": "verify", "benchmark": "wind_turbine"}
    base.update(kwargs)
    with pytest.raises(ConfigError):
        RunConfig(**base)


def test_unknown_command():
    with pytest.raises(ConfigError):
        RunConfig(command="explode", benchmark="wind_turbine")


def test_load_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"benchmark": "manipulator", "seed": 3.0, "dt": "0.01"}))
    assert load_file(path) == {"benchmark": "manipulator", "seed": 3, "dt": 0.01}


@pytest.mark.parametrize(
    "content",
    ["{not json", "[1, 2]", json.dumps({"bogus": 1}), json.dumps({"seed": 1.5}), json.dumps({"overrides": 3})],
)
def test_load_file_rejects(tmp_path, content):
    path = tmp_path / "c.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_file(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_file(tmp_path / "missing.json")


def test_to_dict_round_trips_through_json():
    cfg = RunConfig(command="simulate", benchmark="wind_turbine", overrides={"b": 1, "a": 2})
    data = json.loads(json.dumps(cfg.to_dict()))
    assert list(data["overrides"]) == ["a", "b"]
    assert data["checks"] == ["correctness", "interior", "boundary"]

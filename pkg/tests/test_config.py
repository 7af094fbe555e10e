import json

import pytest

from src.cli import load_run_config
from src.components.config_validation import ConfigValidation
from src.exception import ConfigError
from src.utils.main_utils import apply_overrides
from conftest import config_path


@pytest.fixture(scope="module")
def validation():
    return ConfigValidation()


def test_unknown_key_reported_with_dotted_path(validation):
    problems = validation.check_section({"run": {"start": "2016-04-21T21:23:00Z", "colour": "red"}},
                                        validation._schema_config, "")

    assert problems == ["run.colour: unknown key"]


def test_type_mismatch(validation):
    problems = validation.check_section({"memory": {"n_max": "ten"}}, validation._schema_config, "")

    assert problems == ["memory.n_max: expected integer, got str"]


def test_nested_star_section(validation):
    content = {"stars": {"A": {"id": 56127, "ra_deg": "east"}, "C": {}}}
    problems = validation.check_section(content, validation._schema_config, "")

    assert "stars.A.ra_deg: expected number, got str" in problems
    assert "stars.C: unknown key" in problems
    assert len(problems) == 2


def test_booleans_are_not_numbers(validation):
    problems = validation.check_section({"run": {"duration_s": True}}, validation._schema_config, "")
    assert problems == ["run.duration_s: expected number, got bool"]


def test_every_problem_is_listed(tmp_path):
    content = json.loads(open(config_path("run1.json"), encoding="utf-8").read())
    content["run"]["colour"] = "red"
    content["memory"]["n_max"] = 2.5
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(content), encoding="utf-8")

    with pytest.raises(ConfigError) as excinfo:
        load_run_config(str(path))
    assert "run.colour: unknown key" in excinfo.value.reason
    assert "memory.n_max: expected integer" in excinfo.value.reason


def test_shipped_configs_validate(tmp_path):
    for name in ("run1.json", "run2.json", "simulate_run1.json"):
        run_config = load_run_config(config_path(name), output_dir=str(tmp_path))
        assert run_config.artifact_dir == str(tmp_path)


def test_run1_config_contents():
    run_config = load_run_config(config_path("run1.json"))

    assert run_config.label == "run1"
    assert run_config.run_window.duration == 179.0
    assert run_config.stars["A"].catalogue_id == "HIP 56127"
    assert run_config.analysis.tau_used_ps == {"A": 1992900, "B": 5002400}
    assert run_config.analysis.efficiency_ratio["B"] == 0.81
    assert run_config.analysis.memory_n_max == 15
    assert run_config.spectra.stars[0]["temperature_K"] == 4600


def test_override_sets_memory_horizon():
    run_config = load_run_config(config_path("run1.json"), overrides=["memory.n_max=4"])
    assert run_config.analysis.memory_n_max == 4


def test_override_with_wrong_type_fails_validation():
    with pytest.raises(ConfigError):
        load_run_config(config_path("run1.json"), overrides=["memory.n_max=four"])


def test_apply_overrides_parses_values():
    config = {"analysis": {"window_ps": 2500}}
    apply_overrides(config, ["analysis.window_ps=3000", "analysis.drift.enabled=false",
                             "selection.A.azimuth_range_deg=[10, 20]"])

    assert config["analysis"]["window_ps"] == 3000
    assert config["analysis"]["drift"] == {"enabled": False}
    assert config["selection"]["A"]["azimuth_range_deg"] == [10, 20]


def test_apply_overrides_needs_equals_sign():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["memory.n_max"])


def test_missing_run_start(tmp_path):
    path = tmp_path / "no_start.json"
    path.write_text(json.dumps({"run": {"label": "x"}}), encoding="utf-8")

    with pytest.raises(ConfigError):
        load_run_config(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "absent.json"))


def test_invalid_window_rejected():
    with pytest.raises(ConfigError):
        load_run_config(config_path("run1.json"), overrides=["analysis.window_ps=0"])

import json
import logging

import pytest

from src.cli import load_run_config, main
from src.data_access.count_data import CountData
from src.entity.timetag_entity import CoincidenceTable
from conftest import config_path


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_analyze_run1(capsys, tmp_path):
    code, out, _ = _run(capsys, ["analyze", config_path("run1.json"), "--output-dir", str(tmp_path), "--quiet"])

    assert code == 0
    report = json.loads(out)
    assert report["N"] == 136332
    assert report["chsh"]["C"] == pytest.approx(0.2125, abs=5e-4)
    assert report["significance"]["nu"] == pytest.approx(7.54, abs=0.05)
    assert "no_signaling" in report
    assert (tmp_path / "analysis" / "report.json").is_file()


def test_analyze_run1_with_shorter_memory_horizon(capsys, tmp_path):
    code, out, _ = _run(capsys, ["analyze", config_path("run1.json"), "--output-dir", str(tmp_path),
                                 "--set", "memory.n_max=3", "--quiet"])

    assert code == 0
    assert json.loads(out)["memory"]["B"] == pytest.approx(0.7393, abs=2e-3)


def test_analyze_as_table(capsys, tmp_path):
    code, out, _ = _run(capsys, ["analyze", config_path("run2.json"), "--output-dir", str(tmp_path),
                                 "--table", "--quiet"])

    assert code == 0
    assert "chsh.C" in out
    assert "significance.nu" in out


def test_unknown_config_key_exits_with_input_error(capsys, tmp_path):
    content = json.loads(open(config_path("run1.json"), encoding="utf-8").read())
    content["analysis"]["windw_ps"] = 2500
    path = tmp_path / "typo.json"
    path.write_text(json.dumps(content), encoding="utf-8")

    code, out, err = _run(capsys, ["analyze", str(path), "--quiet"])
    assert code == 2
    assert out == ""
    assert "unknown key" in err
    assert "analysis.windw_ps" in err


def test_missing_config_exits_with_input_error(capsys, tmp_path):
    code, _, err = _run(capsys, ["plan", str(tmp_path / "absent.json"), "--quiet"])

    assert code == 2
    assert err.startswith("error:")


def test_empty_settings_cell_exits_with_analysis_error(capsys, tmp_path):
    path = str(tmp_path / "empty_cell.json")
    CountData.write_coincidences(path, CoincidenceTable.from_rows(
        [[10, 5, 5, 10], [0, 0, 0, 0], [10, 5, 5, 10], [5, 10, 10, 5]]))

    code, _, err = _run(capsys, ["analyze", config_path("run2.json"), "--coincidences", path,
                                 "--output-dir", str(tmp_path), "--quiet"])
    assert code == 3
    assert err.startswith("error:")


def test_plan_run1(capsys, tmp_path):
    code, out, _ = _run(capsys, ["plan", config_path("run1.json"), "--output-dir", str(tmp_path), "--quiet"])

    assert code == 0
    report = json.loads(out)
    assert report["pairs"][0]["hip_A"]
    assert report["assigned"]["pointing"]["A"]["star"] == "HIP 56127"


def test_spectra_run1(capsys, tmp_path):
    code, out, _ = _run(capsys, ["spectra", config_path("run1.json"), "--output-dir", str(tmp_path), "--quiet"])

    assert code == 0
    stars = json.loads(out)["stars"]
    assert [s["side"] for s in stars] == ["A", "B"]
    assert stars[0]["cutoff_nm"] == pytest.approx(703.0, abs=5.0)


def test_report_from_saved_analysis(capsys, tmp_path):
    assert main(["analyze", config_path("run1.json"), "--output-dir", str(tmp_path), "--quiet"]) == 0
    capsys.readouterr()
    report_path = load_run_config(config_path("run1.json"), output_dir=str(tmp_path)).analysis.report_file_path

    code, out, _ = _run(capsys, ["report", "--report", report_path, "--quiet"])
    assert code == 0
    summary = json.loads(out)["summary"]
    assert summary["S"] == pytest.approx(2.425, abs=5e-4)
    assert summary["p"] == pytest.approx(4.857e-14, rel=0.05)


def test_report_without_inputs(capsys):
    code, _, err = _run(capsys, ["report", "--quiet"])

    assert code == 2
    assert "report needs" in err


def test_simulate_is_reproducible_for_a_fixed_seed(capsys, tmp_path):
    files = []
    for name, seed in (("first", 7), ("second", 7), ("other", 8)):
        code, out, _ = _run(capsys, ["simulate", config_path("simulate_run1.json"), "--output-dir",
                                     str(tmp_path / name), "--set", "simulation.duration_s=0.05",
                                     "--set", f"simulation.seed={seed}", "--quiet"])
        assert code == 0
        assert json.loads(out)["events"] > 0
        files.append((tmp_path / name / "simulation" / "timetags.bin").read_bytes())

    assert files[0] == files[1]
    assert files[0] != files[2]


def test_failed_command_logs_the_error_once(capsys, caplog, tmp_path):
    code, _, _ = _run(capsys, ["plan", str(tmp_path / "absent.json"), "--quiet"])

    errors = [r for r in caplog.records if r.levelno >= logging.ERROR]
    assert code == 2
    assert len(errors) == 1
    assert "configuration file not found" in errors[0].getMessage()

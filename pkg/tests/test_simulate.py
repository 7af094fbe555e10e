import dataclasses
import math

import numpy as np
import pytest

from src.cli import load_run_config
from src.components.bellstats import chsh
from src.components.simulate import (
    DARK,
    NOISE,
    PAIR,
    STELLAR_CORRECT,
    STELLAR_WRONG_WAY,
    from_rate_budget,
    simulate_run,
)
from src.components.timetag import CoincidenceIdentification, duty_cycle, poisson_duty_cycle
from src.constants import SIMULATION_CALIBRATED_VISIBILITY
from src.entity.artifact_entity import TabulationArtifact
from src.entity.config_entity import AnalysisConfig, DriftConfig, SimulationConfig
from src.entity.timetag_entity import SETTING_BLUE, SETTING_RED, CoincidenceTable
from src.exception import ConfigError
from src.pipline.analysis_pipeline import AnalysisPipeline, SimulationPipeline
from conftest import config_path

FAST_SETTINGS = {"A": (5e5, 5e5), "B": (5e5, 5e5)}


def _analyse(streams, tau_used_ps, tau_cut_ps=0):
    config = AnalysisConfig(drift=DriftConfig(enabled=False), tau_used_ps=dict(tau_used_ps),
                            tau_cut_ps={"A": tau_cut_ps, "B": tau_cut_ps})
    return CoincidenceIdentification(config).initiate_coincidence_identification(streams)


def test_simulation_is_deterministic():
    config = SimulationConfig(seed=42, duration_s=0.02, pair_rate_hz=2e4, dark_rate_hz={"A": 1e3, "B": 1e3})
    first, truth_first = simulate_run(config)
    second, truth_second = simulate_run(config)
    other, _ = simulate_run(SimulationConfig(seed=43, duration_s=0.02, pair_rate_hz=2e4))

    for side in ("A", "B"):
        assert np.array_equal(first[side].timestamps, second[side].timestamps)
        assert np.array_equal(first[side].channels, second[side].channels)
        assert np.array_equal(truth_first[side].labels, truth_second[side].labels)
    assert not np.array_equal(first["A"].timestamps[:100], other["A"].timestamps[:100])


def test_truth_labels_cover_every_event():
    config = SimulationConfig(seed=5, duration_s=0.02, pair_rate_hz=2e4,
                              noise_rates_hz={"A": (1e4, 1e4), "B": (0.0, 0.0)}, dark_rate_hz={"A": 1e3, "B": 0.0})
    streams, truth = simulate_run(config)

    labels = truth["A"].labels
    assert labels.size == len(streams["A"])
    assert {STELLAR_CORRECT, NOISE, PAIR, DARK} <= set(labels.tolist())
    pairs = labels == PAIR
    assert np.all(truth["A"].pair_id[pairs] >= 0)
    assert np.all(truth["A"].pair_id[~pairs] == -1)
    assert np.all(streams["A"].timestamps >= config.start_offset_ps)


def test_wrong_way_fraction():
    config = SimulationConfig(seed=8, duration_s=0.2, pair_rate_hz=0.0,
                              wrong_way={"A": (0.1, 0.2), "B": (0.0, 0.0)})
    streams, truth = simulate_run(config)
    labels, colour, channels = truth["A"].labels, truth["A"].true_colour, streams["A"].channels
    stellar = (labels == STELLAR_CORRECT) | (labels == STELLAR_WRONG_WAY)

    red = stellar & (colour == SETTING_RED)
    blue = stellar & (colour == SETTING_BLUE)
    assert np.mean(labels[red] == STELLAR_WRONG_WAY) == pytest.approx(0.1, abs=0.01)
    assert np.mean(labels[blue] == STELLAR_WRONG_WAY) == pytest.approx(0.2, abs=0.01)
    assert np.all((channels[stellar] != colour[stellar]) == (labels[stellar] == STELLAR_WRONG_WAY))


def test_setting_dead_time_thins_each_port():
    config = SimulationConfig(seed=2, duration_s=0.05, pair_rate_hz=0.0, setting_dead_time_ps=2_000_000)
    streams, _ = simulate_run(config)
    settings = streams["A"].settings()

    for channel in (SETTING_RED, SETTING_BLUE):
        times = settings.timestamps[settings.channels == channel]
        assert np.diff(times).min() >= 2_000_000


def test_from_rate_budget_reproduces_measured_rates(run1_budget):
    config = from_rate_budget(run1_budget)

    for side in ("A", "B"):
        rates = run1_budget.side(side)
        s = np.asarray(config.setting_rates_hz[side])
        n = np.asarray(config.noise_rates_hz[side])
        f_12, f_21 = config.wrong_way[side]
        expected = np.array([(1 - f_12) * s[0] + f_21 * s[1], f_12 * s[0] + (1 - f_21) * s[1]]) + n
        np.testing.assert_allclose(expected, rates.r, rtol=1e-9)


def test_simulation_config_validation():
    with pytest.raises(ConfigError):
        SimulationConfig(visibility=1.5)
    with pytest.raises(ConfigError):
        SimulationConfig(wrong_way={"A": (0.0, 1.2), "B": (0.0, 0.0)})


@pytest.mark.slow
def test_maximal_visibility_reaches_tsirelson_bound():
    tau = {"A": 5_000_000, "B": 5_000_000}
    config = SimulationConfig(seed=11, duration_s=2.0, pair_rate_hz=3e5, visibility=1.0,
                              setting_rates_hz=FAST_SETTINGS, tau_used_ps=tau)
    streams, _ = simulate_run(config)
    table = _analyse(streams, tau).coincidences

    assert table.total > 500_000
    assert chsh(table).s_value == pytest.approx(2.0 * math.sqrt(2.0), abs=0.02)


@pytest.mark.slow
def test_zero_visibility_is_uncorrelated():
    tau = {"A": 20_000_000, "B": 20_000_000}
    config = SimulationConfig(seed=12, duration_s=2.0, pair_rate_hz=6e5, visibility=0.0,
                              setting_rates_hz={"A": (2.5e5, 2.5e5), "B": (2.5e5, 2.5e5)}, tau_used_ps=tau)
    streams, _ = simulate_run(config)
    table = _analyse(streams, tau).coincidences
    estimate = chsh(table)

    assert table.total > 1_000_000
    assert estimate.correlator == pytest.approx(-1.0, abs=0.01)
    assert estimate.s_value == pytest.approx(0.0, abs=0.02)


@pytest.mark.slow
def test_correlations_follow_polariser_angles():
    tau = {"A": 5_000_000, "B": 5_000_000}
    angles = {"A": {"red": 10.0, "blue": 70.0}, "B": {"blue": 35.0, "red": -15.0}}
    config = SimulationConfig(seed=13, duration_s=0.5, pair_rate_hz=3e5, visibility=0.6, angles_deg=angles,
                              setting_rates_hz=FAST_SETTINGS, tau_used_ps=tau)
    streams, _ = simulate_run(config)
    estimate = chsh(_analyse(streams, tau).coincidences)

    # setting index 0 is port 1: red at A, blue at B
    a = np.deg2rad([angles["A"]["red"], angles["A"]["blue"]])
    b = np.deg2rad([angles["B"]["blue"], angles["B"]["red"]])
    expected = -0.6 * np.cos(2.0 * (a[:, None] - b[None, :]))
    np.testing.assert_allclose(estimate.e_ij, expected, atol=0.025)


@pytest.mark.parametrize("side", ["A", "B"])
def test_setting_duty_cycle_follows_poisson_law(run1_budget, side):
    config = dataclasses.replace(from_rate_budget(run1_budget), seed=21, duration_s=0.5, pair_rate_hz=0.0)
    streams, _ = simulate_run(config)
    settings = streams[side].settings()
    total_rate = sum(config.setting_rates_hz[side]) + sum(config.noise_rates_hz[side])
    tau = config.tau_used_ps[side]

    assert len(settings) / config.duration_s == pytest.approx(total_rate, rel=0.02)
    assert duty_cycle(settings, tau) == pytest.approx(poisson_duty_cycle(total_rate, tau), rel=0.02)


def test_stream_rates_carry_poisson_uncertainty(tmp_path):
    run_config = load_run_config(config_path("run1.json"), output_dir=str(tmp_path),
                                 extra={"analysis.rates_from_streams": True})
    diagnostics = {"A": {"settings_span_s": 4.0, "setting_rates_hz": [1.0e5, 3.0]},
                   "B": {"settings_span_s": 4.0, "setting_rates_hz": [2.5e3, 9.0e4]}}
    tabulation = TabulationArtifact(CoincidenceTable.zeros(), None, None, diagnostics)
    budget = AnalysisPipeline(run_config).start_rate_budget(tabulation)

    np.testing.assert_allclose(budget.side("A").sigma_r, [math.sqrt(2.5e4), math.sqrt(0.75)])
    np.testing.assert_allclose(budget.side("B").sigma_r, [25.0, 150.0])
    assert budget.side("A").duration_r == 4.0


@pytest.mark.slow
def test_calibrated_run1_simulation_matches_measured_correlator(tmp_path):
    run_config = load_run_config(config_path("simulate_run1.json"), output_dir=str(tmp_path))
    assert run_config.simulation.visibility == SIMULATION_CALIBRATED_VISIBILITY
    artifact = SimulationPipeline(run_config).run_pipeline()
    assert artifact.events > 0

    analysed = load_run_config(config_path("simulate_run1.json"), output_dir=str(tmp_path),
                               extra={"analysis.timetags": artifact.timetag_file_path})
    report = AnalysisPipeline(analysed).run_pipeline().report

    assert report["chsh"]["C"] == pytest.approx(0.2125, abs=0.015)
    assert report["predictability"]["eps"] == pytest.approx(0.1779, abs=0.01)
    offsets = np.asarray(report["tabulation"]["drift"]["offsets_ps"], dtype=float)
    assert offsets.mean() == pytest.approx(1500 + 20 * 2.0, abs=0.1 * 1540)

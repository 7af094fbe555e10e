import io
import logging
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np
import pytest

from src.cli import load_run_config
from src.components.catalogue import (
    parse_catalogue,
    parse_catalogue_with_diagnostics,
    passes_static_filters,
    rank_pairs,
    select_candidates,
    visibility_duration,
)
from src.entity.artifact_entity import RankedCandidate
from src.entity.observation_entity import CatalogueRecord, RunWindow, SelectionCriteria
from src.exception import CatalogueError
from src.pipline.planning_pipeline import PlanningPipeline
from conftest import config_path, data_path

HEADER = "hip,ra_deg,dec_deg,plx_mas,e_plx_mas,hp_mag\n"

MALFORMED = HEADER + (
    "1,10.0,20.0,2.0,0.1,6.0\n"
    "2,abc,20.0,2.0,0.1,6.0\n"
    "3,10.0,20.0,-1.0,0.1,6.0\n"
    ",10.0,20.0,2.0,0.1,6.0\n"
    "5,10.0,20.0,2.0,0.1,6.0,extra\n"
    "\n"
    "6,10.0,20.0,2.0,0.1,6.0\n"
)


def test_parse_fixture_catalogue():
    records = parse_catalogue(data_path("catalogue", "hipparcos_fixture.csv"))

    assert len(records) == 10
    first = records[0]
    assert first.hip_id == "56127"
    assert first.line_number == 2
    assert first.distance == pytest.approx(604.0, abs=0.5)
    assert records[1].hip_id == "105259A"


def test_malformed_rows_are_reported_with_line_numbers():
    records, diagnostics = parse_catalogue_with_diagnostics(io.StringIO(MALFORMED))

    assert [r.hip_id for r in records] == ["1", "6"]
    assert len(diagnostics) == 4
    assert diagnostics[0].startswith("line 3:")
    assert "nonpositive parallax" in diagnostics[1]
    assert "missing hip" in diagnostics[2]
    assert "too many fields" in diagnostics[3]


def test_strict_parse_raises_with_every_diagnostic():
    with pytest.raises(CatalogueError) as excinfo:
        parse_catalogue(io.StringIO(MALFORMED))

    assert len(excinfo.value.diagnostics) == 4
    assert excinfo.value.exit_code == 2


def test_lenient_parse_skips_bad_rows():
    assert len(parse_catalogue(io.StringIO(MALFORMED), lenient=True)) == 2


def test_header_missing_column():
    with pytest.raises(CatalogueError):
        parse_catalogue(io.StringIO("hip,ra_deg,dec_deg\n1,2,3\n"))


def test_empty_catalogue_body():
    assert parse_catalogue(io.StringIO(HEADER)) == []


def test_record_rejects_nonpositive_parallax():
    with pytest.raises(CatalogueError):
        CatalogueRecord("x", 1.0, 2.0, 0.0, 0.1, 6.0)


def test_static_filters():
    criteria = SelectionCriteria(azimuth_range=(0, 360), altitude_range=(0, 90))

    assert passes_static_filters(CatalogueRecord("far", 0, 0, 2.0, 0.1, 6.0), criteria)
    assert not passes_static_filters(CatalogueRecord("near", 0, 0, 20.0, 0.5, 6.0), criteria)
    assert not passes_static_filters(CatalogueRecord("vague", 0, 0, 2.0, 1.5, 6.0), criteria)
    assert not passes_static_filters(CatalogueRecord("faint", 0, 0, 1.0, 0.1, 11.5), criteria)
    assert passes_static_filters(CatalogueRecord("edge", 0, 0, 2.0, 0.1, 4.6), criteria)


def test_select_candidates_run1_alice():
    run1 = load_run_config(config_path("run1.json"))
    records = parse_catalogue(data_path("catalogue", "hipparcos_fixture.csv"))
    candidates = select_candidates(records, run1.selection["A"], run1.sites["A"], run1.run_window)

    ids = [c.record.hip_id for c in candidates]
    assert "56127" in ids
    assert "900001" not in ids
    assert "900003" not in ids
    scores = [c.score for c in candidates]
    assert scores == sorted(scores, reverse=True)


def test_plan_run1_ranks_the_observed_pair(tmp_path):
    run1 = load_run_config(config_path("run1.json"), output_dir=str(tmp_path))
    report = PlanningPipeline(run1).run_pipeline().report

    keys = [(p["hip_A"], p["hip_B"]) for p in report["pairs"]]
    assert ("56127", "105259A") in keys
    assert report["assigned"]["validity"]["A"]["min_tau_valid_s"] == pytest.approx(2.55e-6, abs=0.05e-6)


def test_plan_is_deterministic(tmp_path):
    first = PlanningPipeline(load_run_config(config_path("run1.json"), output_dir=str(tmp_path / "a"))) \
        .run_pipeline().report
    second = PlanningPipeline(load_run_config(config_path("run1.json"), output_dir=str(tmp_path / "b"))) \
        .run_pipeline().report

    assert [p["hip_A"] + p["hip_B"] for p in first["pairs"]] == [p["hip_A"] + p["hip_B"] for p in second["pairs"]]


def test_plan_with_no_visible_stars(tmp_path):
    run1 = load_run_config(config_path("run1.json"), overrides=["selection.A.altitude_range_deg=[85, 90]"],
                           output_dir=str(tmp_path))
    with pytest.raises(CatalogueError):
        PlanningPipeline(run1).run_pipeline()


def test_run_window_middle():
    window = RunWindow(datetime(2016, 4, 21, 21, 23, tzinfo=timezone.utc), 180.0)
    assert window.middle == datetime(2016, 4, 21, 21, 24, 30, tzinfo=timezone.utc)


STAR_56127 = CatalogueRecord("56127", 172.5787, -3.0035, 5.40, 0.31, 4.8877)
STAR_105259A = CatalogueRecord("105259A", 319.8154, 58.6235, 1.69, 0.53, 5.6430)


@pytest.fixture(scope="module")
def run1():
    return load_run_config(config_path("run1.json"))


@pytest.fixture(scope="module")
def fixture_records():
    return parse_catalogue(data_path("catalogue", "hipparcos_fixture.csv"))


def _candidate(record, side, score=1.0):
    return RankedCandidate(record, 3600.0, float("nan"), 1.5, score, side)


def test_select_candidates_is_idempotent(run1, fixture_records):
    first = select_candidates(fixture_records, run1.selection["A"], run1.sites["A"], run1.run_window)
    again = select_candidates([c.record for c in first], run1.selection["A"], run1.sites["A"], run1.run_window)

    assert [c.record.hip_id for c in again] == [c.record.hip_id for c in first]
    assert [c.score for c in again] == [c.score for c in first]


def test_selected_candidates_satisfy_every_criterion(run1):
    rng = np.random.default_rng(17)
    records = [CatalogueRecord(str(1000 + k), rng.uniform(0.0, 360.0), rng.uniform(-40.0, 80.0),
                               rng.uniform(0.5, 30.0), rng.uniform(0.01, 1.0), rng.uniform(3.0, 10.0))
               for k in range(60)]
    criteria, site = run1.selection["A"], run1.sites["A"]
    selected = {c.record.hip_id for c in select_candidates(records, criteria, site, run1.run_window)}

    for record in records:
        duration, _, _ = visibility_duration(record, criteria, site, run1.run_window)
        eligible = passes_static_filters(record, criteria) and duration >= criteria.min_visible
        assert (record.hip_id in selected) == eligible


def test_hip_ids_order_by_number():
    ids = ["105259A", "56127B", "900", "56127"]
    ordered = sorted(ids, key=lambda hip: CatalogueRecord(hip, 0.0, 0.0, 1.0, 0.1, 6.0).sort_key)

    assert ordered == ["900", "56127", "56127B", "105259A"]


def test_rank_pairs_single_candidate_per_side(run1):
    ranking = rank_pairs([_candidate(STAR_56127, "A")], [_candidate(STAR_105259A, "B")],
                         run1.layout, run1.budget, run1.run_window, step=10.0)

    assert len(ranking.pairs) == 1
    assert ranking.excluded == []
    assert ranking.pairs[0].min_tau_valid_A == pytest.approx(2.55e-6, abs=0.05e-6)
    assert ranking.pairs[0].min_tau_valid_B == pytest.approx(6.93e-6, abs=0.05e-6)


def test_rank_pairs_with_an_empty_side(run1):
    ranking = rank_pairs([_candidate(STAR_56127, "A")], [], run1.layout, run1.budget, run1.run_window, step=10.0)

    assert ranking.pairs == []
    assert ranking.excluded == []


def test_rank_pairs_ties_break_by_hip_number(run1):
    twins = [_candidate(replace(STAR_56127, hip_id=hip), "A") for hip in ("1000", "900", "56127")]
    ranking = rank_pairs(twins, [_candidate(STAR_105259A, "B")], run1.layout, run1.budget, run1.run_window,
                         step=10.0)

    assert [p.key for p in ranking.pairs] == [("900", "105259A"), ("1000", "105259A"), ("56127", "105259A")]


def test_misaligned_pair_is_flagged_without_error_logs(run1, caplog):
    with caplog.at_level(logging.DEBUG):
        ranking = rank_pairs([_candidate(STAR_105259A, "A")], [_candidate(STAR_56127, "B")],
                             run1.layout, run1.budget, run1.run_window, step=10.0)

    assert ranking.pairs == []
    assert [p.flag for p in ranking.excluded] == ["causally misaligned"]
    assert "excluded from ranking" in caplog.text
    assert not [r for r in caplog.records if r.levelno >= logging.ERROR]

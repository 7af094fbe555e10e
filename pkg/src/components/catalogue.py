import math
import sys
from datetime import timedelta
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.components.geometry import airmass, posix_seconds, star_track, validity_series, validity_times
from src.constants import (
    CATALOGUE_COLUMNS,
    CATALOGUE_SCORE_DISTANCE_SCALE_LY,
    CATALOGUE_SCORE_TAU_SCALE_S,
    GEOMETRY_VALIDITY_STEP_S,
    PARALLAX_LY_MAS,
)
from src.data_access.catalogue_data import CatalogueData
from src.entity.artifact_entity import PairRanking, RankedCandidate, RankedPair
from src.entity.observation_entity import (
    CatalogueRecord,
    GeodeticSite,
    RunWindow,
    SelectionCriteria,
    SiteLayout,
    TimingBudget,
)
from src.exception import CatalogueError, CausalMisalignmentError, MyException, WindowExhaustedError
from src.logger import logging

NUMERIC_COLUMNS = CATALOGUE_COLUMNS[1:]


def parallax_to_distance(parallax: float, error: float = 0.0) -> Tuple[float, float]:
    """Naive inverse-parallax distance in light-years with first-order error."""
    if not parallax > 0:
        raise CatalogueError(f"nonpositive parallax {parallax} mas", sys)
    distance = PARALLAX_LY_MAS / parallax
    return distance, distance * error / parallax


def parse_catalogue_with_diagnostics(stream) -> Tuple[List[CatalogueRecord], List[str]]:
    frame = CatalogueData().export_catalogue_as_dataframe(stream)
    records, diagnostics = [], []
    if frame.empty:
        return records, diagnostics

    numbers = frame[list(NUMERIC_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    for line, row in frame.iterrows():
        if row["_extra"]:
            diagnostics.append(f"line {line}: too many fields")
            continue
        if not row["hip"]:
            diagnostics.append(f"line {line}: missing hip identifier")
            continue
        values = numbers.loc[line]
        bad = [name for name in NUMERIC_COLUMNS if not math.isfinite(values[name])]
        if bad:
            diagnostics.append(f"line {line}: unparsable or non-finite field(s) {bad}")
            continue
        if values["plx_mas"] <= 0:
            diagnostics.append(f"line {line}: nonpositive parallax ({values['plx_mas']} mas) for {row['hip']}")
            continue
        if values["e_plx_mas"] < 0:
            diagnostics.append(f"line {line}: negative parallax error for {row['hip']}")
            continue
        records.append(CatalogueRecord(
            hip_id=str(row["hip"]),
            ra=float(values["ra_deg"]),
            dec=float(values["dec_deg"]),
            parallax=float(values["plx_mas"]),
            parallax_error=float(values["e_plx_mas"]),
            hp_magnitude=float(values["hp_mag"]),
            line_number=int(line),
        ))
    return records, diagnostics


def parse_catalogue(stream, lenient: bool = False) -> List[CatalogueRecord]:
    """
    Parses a delimited catalogue with columns hip, ra_deg, dec_deg, plx_mas,
    e_plx_mas, hp_mag. Malformed rows raise CatalogueError listing every
    diagnostic; with `lenient` they are logged and skipped.
    """
    records, diagnostics = parse_catalogue_with_diagnostics(stream)
    if diagnostics:
        if not lenient:
            raise CatalogueError("malformed catalogue rows: " + "; ".join(diagnostics), sys, diagnostics)
        for diagnostic in diagnostics:
            logging.warning(f"Skipped catalogue row, {diagnostic}")
    return records


def _in_range(values: np.ndarray, bounds: Sequence[float]) -> np.ndarray:
    lo, hi = bounds
    return (values >= lo) & (values <= hi)


def _in_azimuth(values: np.ndarray, bounds: Sequence[float]) -> np.ndarray:
    lo, hi = bounds
    return np.mod(values - lo, 360.0) <= (hi - lo)


def passes_static_filters(record: CatalogueRecord, criteria: SelectionCriteria) -> bool:
    lo, hi = criteria.magnitude_range
    return (record.distance >= criteria.min_distance_ly
            and record.fractional_distance_error < criteria.max_fractional_distance_error
            and lo - criteria.magnitude_tolerance <= record.hp_magnitude <= hi + criteria.magnitude_tolerance)


def visibility_duration(record: CatalogueRecord, criteria: SelectionCriteria, site: GeodeticSite,
                        run_window: RunWindow) -> Tuple[float, float, float]:
    """
    Length of the contiguous stretch around mid-run during which the star sits
    inside the az/alt box, sampled on the search grid. Also returns the azimuth
    and altitude at mid-run.
    """
    half = int(round(criteria.search_span / (2 * criteria.search_step)))
    offsets = np.arange(-half, half + 1, dtype=float) * criteria.search_step
    epochs = posix_seconds(run_window.middle) + offsets
    _, azimuth, altitude = star_track(record.to_target(), epochs, site)
    inside = _in_azimuth(azimuth, criteria.azimuth_range) & _in_range(altitude, criteria.altitude_range)
    if not inside[half]:
        return 0.0, float(azimuth[half]), float(altitude[half])
    first = half
    while first > 0 and inside[first - 1]:
        first -= 1
    last = half
    while last < inside.size - 1 and inside[last + 1]:
        last += 1
    return float((last - first) * criteria.search_step), float(azimuth[half]), float(altitude[half])


def candidate_score(record: CatalogueRecord, criteria: SelectionCriteria, visibility: float,
                    min_tau_valid: float, airmass_at_mid: float) -> float:
    lo, hi = criteria.magnitude_range
    width = (hi - lo) + 2 * criteria.magnitude_tolerance
    features = {
        "brightness": float(np.clip((hi + criteria.magnitude_tolerance - record.hp_magnitude) / width, 0.0, 1.0)),
        "distance": min(record.distance / CATALOGUE_SCORE_DISTANCE_SCALE_LY, 1.0),
        "visibility": min(visibility / criteria.search_span, 1.0) if criteria.search_span > 0 else 0.0,
        "tau_valid": float(np.clip(min_tau_valid / CATALOGUE_SCORE_TAU_SCALE_S, 0.0, 1.0))
        if math.isfinite(min_tau_valid) else 0.0,
        "inverse_airmass": 1.0 / airmass_at_mid if math.isfinite(airmass_at_mid) else 0.0,
    }
    return float(sum(criteria.weights.get(name, 0.0) * value for name, value in features.items()))


def select_candidates(records: Sequence[CatalogueRecord], criteria: SelectionCriteria, site: GeodeticSite,
                      run_window: RunWindow, layout: Optional[SiteLayout] = None, side: str = "",
                      budget: Optional[TimingBudget] = None,
                      step: float = GEOMETRY_VALIDITY_STEP_S) -> List[RankedCandidate]:
    """
    Filters records on distance, distance error, magnitude and az/alt visibility
    and scores the survivors. With a layout and side the score includes the
    minimum validity time of the star over the run window.
    """
    budget = budget or TimingBudget()
    run_epochs = posix_seconds(run_window.start) + run_window.offsets(step)
    candidates = []
    for record in records:
        if not passes_static_filters(record, criteria):
            continue
        duration, azimuth, altitude = visibility_duration(record, criteria, site, run_window)
        if duration < criteria.min_visible:
            continue
        x_mid = airmass(altitude) if altitude > 0 else float("nan")
        min_tau = float("nan")
        if layout is not None and side:
            vectors, _, _ = star_track(record.to_target(), run_epochs, site)
            min_tau = float(validity_series(layout, side, vectors, budget).min())
        candidates.append(RankedCandidate(
            record=record,
            visibility_duration=duration,
            min_tau_valid=min_tau,
            airmass_at_mid=x_mid,
            score=candidate_score(record, criteria, duration, min_tau, x_mid),
            side=side,
            azimuth_at_mid=azimuth,
            altitude_at_mid=altitude,
        ))
    candidates.sort(key=lambda c: (-c.score, c.record.sort_key))
    logging.info(f"Selected {len(candidates)} of {len(records)} records for side {side or '?'}")
    return candidates


def rank_pairs(candidates_A: Sequence[RankedCandidate], candidates_B: Sequence[RankedCandidate],
               layout: SiteLayout, budget: TimingBudget, run_window: RunWindow,
               step: float = GEOMETRY_VALIDITY_STEP_S) -> PairRanking:
    """
    Pairs every Alice candidate with every Bob candidate. Pairs whose validity
    window closes are excluded and flagged; the rest are ordered by descending
    combined score with hip ids breaking ties.
    """
    pairs, excluded = [], []
    for cand_A in candidates_A:
        for cand_B in candidates_B:
            score = cand_A.score + cand_B.score
            try:
                profile_A, profile_B = validity_times(layout, cand_A.record.to_target(), cand_B.record.to_target(),
                                                      budget, run_window, step)
            except CausalMisalignmentError:
                excluded.append(RankedPair(cand_A, cand_B, float("nan"), float("nan"), score, "causally misaligned"))
                continue
            except WindowExhaustedError:
                excluded.append(RankedPair(cand_A, cand_B, float("nan"), float("nan"), score, "window exhausted"))
                continue
            pairs.append(RankedPair(cand_A, cand_B, profile_A.min_valid, profile_B.min_valid, score))
    pairs.sort(key=lambda p: (-p.score,) + p.sort_key)
    excluded.sort(key=lambda p: p.sort_key)
    if excluded:
        logging.warning(f"{len(excluded)} star pairs excluded from ranking")
    return PairRanking(pairs, excluded)


class SourceSelection:
    """Stage that selects and ranks star pairs for an observing run."""

    def __init__(self, catalogue_path, criteria_A: SelectionCriteria, criteria_B: SelectionCriteria,
                 layout: SiteLayout, budget: TimingBudget, run_window: RunWindow, lenient: bool = False):
        self.catalogue_path = catalogue_path
        self.criteria = {"A": criteria_A, "B": criteria_B}
        self.layout = layout
        self.budget = budget
        self.run_window = run_window
        self.lenient = lenient

    def initiate_source_selection(self) -> PairRanking:
        """
        Method Name :   initiate_source_selection
        Description :   Parses the catalogue, selects candidates per side and ranks the pairs

        Output      :   Returns the pair ranking
        On Failure  :   Write an exception log and then raise an exception
        """
        logging.info("Entered initiate_source_selection method of SourceSelection class")
        try:
            records = parse_catalogue(self.catalogue_path, lenient=self.lenient)
            selected = {}
            for side in ("A", "B"):
                site = self.layout.site(side)
                selected[side] = select_candidates(records, self.criteria[side], site, self.run_window,
                                                   self.layout, side, self.budget)
            ranking = rank_pairs(selected["A"], selected["B"], self.layout, self.budget, self.run_window)
            logging.info(f"Ranked {len(ranking.pairs)} pairs")
            logging.info("Exited initiate_source_selection method of SourceSelection class")
            return ranking
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

import sys
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numba import njit

from src.constants import (
    PS_PER_SECOND,
    TIMETAG_COINCIDENCE_WINDOW_PS,
    TIMETAG_DRIFT_BIN_PS,
    TIMETAG_DRIFT_BLOCK_S,
    TIMETAG_DRIFT_MIN_BLOCKS,
    TIMETAG_DRIFT_MIN_PROMINENCE,
    TIMETAG_DRIFT_RANGE_PS,
    TIMETAG_PORT_COLOURS,
    TIMETAG_SITES,
)
from src.data_access.timetag_data import parse_timetags  # noqa: F401  re-exported stage entry
from src.entity.artifact_entity import TabulationArtifact
from src.entity.config_entity import AnalysisConfig
from src.entity.timetag_entity import (
    SETTING_BLUE,
    SETTING_RED,
    CoincidenceTable,
    DriftModel,
    GatedOutcomes,
    SinglesTable,
    TimeTagStream,
)
from src.exception import MyException, NoCorrelationPeakError, TimeTagFormatError
from src.logger import logging


class SettingTimeline(NamedTuple):
    """Setting clicks of one side: time, port index (0: port 1) and dead-time mark."""
    timestamps: np.ndarray
    port: np.ndarray
    marked: np.ndarray


class DeadTimeResult(NamedTuple):
    kept: TimeTagStream
    marked: np.ndarray
    log: pd.DataFrame


@njit
def _mark_dead_time(timestamps, is_blue, tau_cut):
    n = timestamps.size
    marked = np.zeros(n, dtype=np.bool_)
    last_kept = np.zeros(2, dtype=np.int64)
    seen = np.zeros(2, dtype=np.bool_)
    for k in range(n):
        colour = is_blue[k]
        other = 1 - colour
        if seen[other] and timestamps[k] - last_kept[other] <= tau_cut:
            marked[k] = True
        else:
            last_kept[colour] = timestamps[k]
            seen[colour] = True
    return marked


@njit
def _greedy_accept(a_idx, b_idx, n_a, n_b):
    used_a = np.zeros(n_a, dtype=np.bool_)
    used_b = np.zeros(n_b, dtype=np.bool_)
    accepted = np.zeros(a_idx.size, dtype=np.bool_)
    for k in range(a_idx.size):
        ia = a_idx[k]
        ib = b_idx[k]
        if not used_a[ia] and not used_b[ib]:
            used_a[ia] = True
            used_b[ib] = True
            accepted[k] = True
    return accepted


def _require_sorted(timestamps: np.ndarray, what: str) -> None:
    if timestamps.size > 1 and np.any(np.diff(timestamps) < 0):
        raise TimeTagFormatError(f"{what} must be sorted by timestamp", sys)


def _window_pairs(t_a: np.ndarray, t_b: np.ndarray, reach_ps: int) -> Tuple[np.ndarray, np.ndarray]:
    """Index pairs (a, b) with |t_a - t_b| <= reach_ps; `t_a` must be sorted."""
    lo = np.searchsorted(t_a, t_b - reach_ps, side="left")
    hi = np.searchsorted(t_a, t_b + reach_ps, side="right")
    counts = hi - lo
    b_idx = np.repeat(np.arange(t_b.size), counts)
    starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
    a_idx = starts + np.arange(b_idx.size)
    return a_idx, b_idx


def setting_timeline(settings: TimeTagStream, port_colours: Optional[Sequence[str]] = None,
                     marked: Optional[np.ndarray] = None) -> SettingTimeline:
    settings = settings.settings()
    _require_sorted(settings.timestamps, f"settings of site {settings.site}")
    colours = tuple(port_colours or TIMETAG_PORT_COLOURS[settings.site])
    red_port = colours.index("red")
    port = np.where(settings.channels == SETTING_RED, red_port, 1 - red_port).astype(np.int8)
    if marked is None:
        marked = np.zeros(len(settings), dtype=bool)
    if marked.shape != port.shape:
        raise TimeTagFormatError("dead-time marks do not match the setting stream", sys)
    return SettingTimeline(settings.timestamps, port, np.asarray(marked, dtype=bool))


def dead_time_filter(settings: TimeTagStream, tau_cut_ps: int) -> DeadTimeResult:
    """
    Marks every setting click that follows a kept click of the opposite colour
    on the same side within `tau_cut_ps`. Marked clicks stay in the timeline;
    outcomes they govern are deleted at gating. tau_cut_ps <= 0 disables the filter.
    """
    settings = settings.settings()
    _require_sorted(settings.timestamps, f"settings of site {settings.site}")
    if tau_cut_ps <= 0 or len(settings) == 0:
        marked = np.zeros(len(settings), dtype=bool)
    else:
        is_blue = (settings.channels == SETTING_BLUE).astype(np.int64)
        marked = _mark_dead_time(settings.timestamps, is_blue, np.int64(tau_cut_ps))
    colours = np.where(settings.channels[marked] == SETTING_RED, "red", "blue")
    log = pd.DataFrame({"timestamp_ps": settings.timestamps[marked], "colour": colours})
    if marked.any():
        logging.info(f"Dead-time filter marked {int(marked.sum())} of {len(settings)} setting clicks "
                     f"at site {settings.site}")
    return DeadTimeResult(settings.select(~marked), marked, log)


def _active_setting(timeline: SettingTimeline, times: np.ndarray, tau_used_ps: int):
    """(port, age, valid, marked) of the most recent setting click at each time."""
    times = np.asarray(times, dtype=np.int64)
    if timeline.timestamps.size == 0:
        none = np.zeros(times.shape, dtype=bool)
        return np.full(times.shape, -1, dtype=np.int8), np.full(times.shape, -1, dtype=np.int64), none, none
    idx = np.searchsorted(timeline.timestamps, times, side="right") - 1
    present = idx >= 0
    safe = np.where(present, idx, 0)
    port = np.where(present, timeline.port[safe], -1).astype(np.int8)
    age = np.where(present, times - timeline.timestamps[safe], -1)
    valid = present & (age <= tau_used_ps)
    marked = present & timeline.marked[safe]
    return port, age, valid, marked


def gate_settings(outcomes: TimeTagStream, settings: Union[TimeTagStream, SettingTimeline], tau_used_ps: int,
                  retrigger_ps: Optional[int] = None, port_colours: Optional[Sequence[str]] = None) -> GatedOutcomes:
    """
    Annotates each outcome with the most recent setting click of its side. An
    outcome is valid iff the setting age is at most tau_used; a forced re-switch
    after `retrigger_ps` ends validity earlier when it is shorter. Outcomes
    governed by a dead-time-marked click are flagged deleted.
    """
    outcomes = outcomes.outcomes()
    _require_sorted(outcomes.timestamps, f"outcomes of site {outcomes.site}")
    timeline = settings if isinstance(settings, SettingTimeline) else setting_timeline(settings, port_colours)
    expiry = tau_used_ps if retrigger_ps is None else min(tau_used_ps, retrigger_ps)
    port, age, valid, marked = _active_setting(timeline, outcomes.timestamps, expiry)
    return GatedOutcomes(outcomes.site, outcomes.timestamps, outcomes.channels.astype(np.int8), port, age,
                         valid, marked)


def _peak_offset(diffs: np.ndarray, bin_ps: int, range_ps: int) -> Tuple[float, float]:
    half = int(range_ps // bin_ps)
    centres = np.arange(-half, half + 1, dtype=float) * bin_ps
    edges = np.append(centres - bin_ps / 2.0, centres[-1] + bin_ps / 2.0)
    counts, _ = np.histogram(diffs, bins=edges)
    k = int(np.argmax(counts))
    background = float(np.median(counts))
    prominence = (counts[k] - background) / np.sqrt(max(background, 1.0))
    offset = centres[k]
    if 0 < k < counts.size - 1:
        left, peak, right = (float(c) for c in counts[k - 1:k + 2])
        curvature = left - 2.0 * peak + right
        if curvature != 0:
            offset += 0.5 * (left - right) / curvature * bin_ps
    return float(offset), float(prominence)


def estimate_drift(stream_A: TimeTagStream, stream_B: TimeTagStream, block_s: float = TIMETAG_DRIFT_BLOCK_S,
                   bin_ps: int = TIMETAG_DRIFT_BIN_PS, range_ps: int = TIMETAG_DRIFT_RANGE_PS,
                   min_prominence: float = TIMETAG_DRIFT_MIN_PROMINENCE) -> DriftModel:
    """
    Per-block offset of B's clock from the peak of the t_B - t_A histogram of
    outcome events (bins centred on multiples of `bin_ps`, parabolic peak
    interpolation), knotted at block centres. Blocks without a peak of the
    required prominence are skipped; with none left NoCorrelationPeakError is raised.
    """
    t_a = stream_A.outcomes().timestamps
    t_b = stream_B.outcomes().timestamps
    if t_a.size == 0 or t_b.size == 0:
        raise NoCorrelationPeakError("no correlation peak: a stream has no outcome events", sys)
    _require_sorted(t_a, "outcomes of A")
    _require_sorted(t_b, "outcomes of B")

    start = int(min(t_a[0], t_b[0]))
    stop = int(max(t_a[-1], t_b[-1]))
    span_ps = stop - start + 1
    block_ps = max(1, int(round(block_s * PS_PER_SECOND)))
    if span_ps < TIMETAG_DRIFT_MIN_BLOCKS * block_ps:
        block_ps = max(1, -(-span_ps // TIMETAG_DRIFT_MIN_BLOCKS))
        logging.info(f"Drift blocks shortened to {block_ps / PS_PER_SECOND:.3g} s "
                     f"for a {span_ps / PS_PER_SECOND:.3g} s span")
    n_blocks = max(1, -(-span_ps // block_ps))
    knots, offsets, best = [], [], 0.0
    for k in range(n_blocks):
        lo_t = start + k * block_ps
        hi_t = min(lo_t + block_ps, stop + 1)
        b_block = t_b[np.searchsorted(t_b, lo_t):np.searchsorted(t_b, hi_t)]
        if b_block.size == 0:
            continue
        a_idx, b_idx = _window_pairs(t_a, b_block, range_ps)
        if a_idx.size == 0:
            continue
        offset, prominence = _peak_offset(b_block[b_idx] - t_a[a_idx], bin_ps, range_ps)
        best = max(best, prominence)
        if prominence < min_prominence:
            logging.warning(f"Drift block {k}: peak prominence {prominence:.1f} below {min_prominence}, skipped")
            continue
        knots.append(0.5 * (lo_t + hi_t))
        offsets.append(offset)
    if not knots:
        raise NoCorrelationPeakError(
            f"no correlation peak: best prominence {best:.1f} below threshold {min_prominence}", sys)
    if len(knots) == 1:
        logging.warning("Drift model has a single knot: constant offset only, slope not constrained")
    model = DriftModel(np.asarray(knots), np.asarray(offsets))
    logging.info(f"Drift model from {len(knots)} block(s): mean offset {np.mean(offsets):.1f} ps, "
                 f"slope {model.slope_ps_per_s():.2f} ps/s")
    return model


def match_pairs(t_a: np.ndarray, t_b: np.ndarray, window_ps: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Greedy nearest-neighbour pairing of sorted `t_a` with drift-corrected `t_b`.
    Candidates within the window are accepted in order of |dt|, then earlier
    first timestamp, then earlier second timestamp; each event is used once.
    Returns the accepted (a, b) index arrays.
    """
    order_b = np.argsort(t_b, kind="stable")
    a_idx, b_pos = _window_pairs(t_a, t_b[order_b], window_ps)
    b_idx = order_b[b_pos]
    ta, tb = t_a[a_idx], t_b[b_idx]
    order = np.lexsort((b_idx, a_idx, np.maximum(ta, tb), np.minimum(ta, tb), np.abs(ta - tb)))
    a_idx, b_idx = a_idx[order], b_idx[order]
    accepted = _greedy_accept(a_idx, b_idx, t_a.size, t_b.size)
    return a_idx[accepted], b_idx[accepted]


def _coincidence_counts(i, j, a, b) -> CoincidenceTable:
    flat = ((i.astype(np.int64) * 2 + j) * 2 + a) * 2 + b
    return CoincidenceTable(np.bincount(flat, minlength=16))


def match_coincidences(gated_A: GatedOutcomes, gated_B: GatedOutcomes,
                       window_ps: int = TIMETAG_COINCIDENCE_WINDOW_PS,
                       drift: Optional[DriftModel] = None) -> CoincidenceTable:
    """Coincidence table N_ij^AB of usable outcomes paired within `window_ps` after drift correction."""
    usable_A = gated_A.select(gated_A.usable)
    usable_B = gated_B.select(gated_B.usable)
    t_b = (drift or DriftModel.zero()).to_a_clock(usable_B.timestamps)
    ia, ib = match_pairs(usable_A.timestamps, t_b, window_ps)
    return _coincidence_counts(usable_A.setting[ia], usable_B.setting[ib], usable_A.outcome[ia],
                               usable_B.outcome[ib])


def match_coincidences_chunked(gated_A: GatedOutcomes, gated_B: GatedOutcomes,
                               window_ps: int = TIMETAG_COINCIDENCE_WINDOW_PS,
                               drift: Optional[DriftModel] = None, chunk_events: int = 1_000_000) -> CoincidenceTable:
    """
    Matches in independent time chunks and sums the tables. Chunks are cut only
    inside gaps wider than the window, so the result equals match_coincidences.
    """
    usable_A = gated_A.select(gated_A.usable)
    usable_B = gated_B.select(gated_B.usable)
    t_a = usable_A.timestamps
    t_b = (drift or DriftModel.zero()).to_a_clock(usable_B.timestamps)
    merged = np.sort(np.concatenate([t_a, t_b]))
    cut_positions = np.nonzero(np.diff(merged) > window_ps)[0] + 1
    targets = np.arange(chunk_events, merged.size, chunk_events)
    picks = np.unique(np.searchsorted(cut_positions, targets))
    picks = picks[picks < cut_positions.size]
    bounds = [np.iinfo(np.int64).min] + merged[cut_positions[picks]].tolist() + [np.iinfo(np.int64).max]

    table = CoincidenceTable.zeros()
    for lo_t, hi_t in zip(bounds[:-1], bounds[1:]):
        sel_a = (t_a >= lo_t) & (t_a < hi_t)
        sel_b = (t_b >= lo_t) & (t_b < hi_t)
        ia, ib = match_pairs(t_a[sel_a], t_b[sel_b], window_ps)
        A, B = usable_A.select(sel_a), usable_B.select(sel_b)
        table = table + _coincidence_counts(A.setting[ia], B.setting[ib], A.outcome[ia], B.outcome[ib])
    logging.info(f"Matched {len(bounds) - 1} chunk(s), N = {table.total}")
    return table


def tabulate_singles(gated_A: GatedOutcomes, gated_B: GatedOutcomes, timeline_A: SettingTimeline,
                     timeline_B: SettingTimeline, tau_used_ps: Dict[str, int],
                     drift: Optional[DriftModel] = None) -> SinglesTable:
    """
    Usable local outcomes split by the distant setting active at the local
    detection time (converted to the distant clock). The distant setting must
    itself be valid and unmarked.
    """
    drift = drift or DriftModel.zero()
    usable_A = gated_A.select(gated_A.usable)
    usable_B = gated_B.select(gated_B.usable)

    j, _, valid_j, marked_j = _active_setting(timeline_B, drift.to_b_clock(usable_A.timestamps), tau_used_ps["B"])
    keep = valid_j & ~marked_j
    alice = np.bincount(((usable_A.setting[keep].astype(np.int64) * 2 + j[keep]) * 2 + usable_A.outcome[keep]),
                        minlength=8)

    i, _, valid_i, marked_i = _active_setting(timeline_A, drift.to_a_clock(usable_B.timestamps), tau_used_ps["A"])
    keep = valid_i & ~marked_i
    bob = np.bincount(((usable_B.setting[keep].astype(np.int64) * 2 + i[keep]) * 2 + usable_B.outcome[keep]),
                      minlength=8)
    return SinglesTable(alice, bob)


def duty_cycle(settings: Union[TimeTagStream, SettingTimeline], tau_used_ps: int,
               start_ps: Optional[int] = None, stop_ps: Optional[int] = None) -> float:
    """Fraction of [start, stop) during which some setting is younger than tau_used."""
    if isinstance(settings, TimeTagStream):
        settings = setting_timeline(settings)
    t = settings.timestamps
    if t.size == 0:
        return 0.0
    start = int(t[0]) if start_ps is None else int(start_ps)
    stop = int(t[-1]) if stop_ps is None else int(stop_ps)
    if stop <= start:
        return 0.0
    inside = t[(t >= start) & (t < stop)]
    gaps = np.diff(np.append(inside, stop))
    return float(np.minimum(gaps, tau_used_ps).sum()) / (stop - start)


def poisson_duty_cycle(rate_hz: float, tau_used_ps: int) -> float:
    """Valid-time fraction 1 - exp(-rate tau) of a Poisson setting process."""
    return float(-np.expm1(-rate_hz * tau_used_ps / PS_PER_SECOND))


def measured_rates(settings: Union[TimeTagStream, SettingTimeline], duration_s: Optional[float] = None,
                   port_colours: Optional[Sequence[str]] = None) -> np.ndarray:
    """Setting click rate of each port in Hz."""
    if isinstance(settings, TimeTagStream):
        settings = setting_timeline(settings, port_colours)
    if duration_s is None:
        duration_s = float(settings.timestamps[-1] - settings.timestamps[0]) / PS_PER_SECOND \
            if settings.timestamps.size > 1 else 0.0
    if duration_s <= 0:
        return np.zeros(2)
    return np.bincount(settings.port.astype(np.int64), minlength=2)[:2] / duration_s


class CoincidenceIdentification:
    """Stage turning raw per-site streams into coincidence and singles tables."""

    def __init__(self, analysis_config: AnalysisConfig = None):
        self.config = analysis_config or AnalysisConfig()

    def initiate_coincidence_identification(self, streams: Dict[str, TimeTagStream]) -> TabulationArtifact:
        """
        Method Name :   initiate_coincidence_identification
        Description :   Applies dead-time filter, drift correction, setting gating and matching

        Output      :   Returns coincidence and singles tables with per-side diagnostics
        On Failure  :   Write an exception log and then raise an exception
        """
        logging.info("Entered initiate_coincidence_identification method of CoincidenceIdentification class")
        try:
            config = self.config
            timelines, gated, diagnostics = {}, {}, {}
            for side in TIMETAG_SITES:
                stream = streams[side]
                dead = dead_time_filter(stream, int(config.tau_cut_ps[side]))
                timelines[side] = setting_timeline(stream, config.port_colours[side], dead.marked)
                gated[side] = gate_settings(stream, timelines[side], int(config.tau_used_ps[side]))
                rates = measured_rates(timelines[side])
                diagnostics[side] = {
                    "outcomes": len(gated[side]),
                    "settings": int(timelines[side].timestamps.size),
                    "settings_marked": int(dead.marked.sum()),
                    "outcomes_valid": int(gated[side].valid.sum()),
                    "outcomes_deleted": int((gated[side].valid & gated[side].deleted).sum()),
                    "setting_rates_hz": rates,
                    "settings_span_s": float(np.ptp(timelines[side].timestamps)) / PS_PER_SECOND
                    if timelines[side].timestamps.size else 0.0,
                    "duty_cycle": duty_cycle(timelines[side], int(config.tau_used_ps[side])),
                    "duty_cycle_poisson": poisson_duty_cycle(float(rates.sum()), int(config.tau_used_ps[side])),
                }

            if config.drift.enabled:
                drift = estimate_drift(streams["A"], streams["B"], config.drift.block_s, config.drift.bin_ps,
                                       config.drift.range_ps, config.drift.min_prominence)
            else:
                drift = DriftModel.zero()

            table = match_coincidences(gated["A"], gated["B"], config.window_ps, drift)
            singles = tabulate_singles(gated["A"], gated["B"], timelines["A"], timelines["B"],
                                       config.tau_used_ps, drift)
            diagnostics["drift"] = {**drift.to_dict(), "slope_ps_per_s": drift.slope_ps_per_s()}
            logging.info(f"Identified N = {table.total} coincidences, {singles.total} valid singles")
            logging.info("Exited initiate_coincidence_identification method of CoincidenceIdentification class")
            return TabulationArtifact(table, singles, drift, diagnostics)
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

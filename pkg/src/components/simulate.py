"""
Synthetic time-tag streams with ground truth.

Two generators live here: `simulate_run` draws a physical-looking run from
Poisson processes, `synthesize_from_tables` lays out deterministic streams
whose analysis reproduces given count tables exactly.
"""
import dataclasses
import json
import math
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np
from numba import njit

from src.components.bellstats import stellar_rates
from src.constants import (
    PS_PER_SECOND,
    SIMULATION_BLOCK_S,
    SIMULATION_SLOT_GAP_PS,
    SIMULATION_SLOT_LEAD_PS,
    SIMULATION_SLOT_STEP_PS,
    TIMETAG_SITES,
)
from src.data_access.timetag_data import TimeTagData
from src.entity.artifact_entity import SimulationArtifact
from src.entity.config_entity import AnalysisConfig, SimulationConfig
from src.entity.rates_entity import RateBudget
from src.entity.timetag_entity import (
    OUTCOME_MINUS,
    OUTCOME_PLUS,
    SETTING_BLUE,
    SETTING_RED,
    TRUTH_LABELS,
    CoincidenceTable,
    SinglesTable,
    TimeTagStream,
    TruthRecord,
)
from src.exception import InconsistentTablesError, MyException
from src.logger import logging
from src.utils.main_utils import to_jsonable

STELLAR_CORRECT, STELLAR_WRONG_WAY, NOISE, PAIR, DARK = range(len(TRUTH_LABELS))
PROCESSES = ("settings_A", "settings_B", "pairs", "dark_A", "dark_B")


@njit
def _detector_dead_time(timestamps, ports, dead_time):
    """Non-paralysable dead time, one detector per port."""
    keep = np.ones(timestamps.size, dtype=np.bool_)
    last = np.zeros(2, dtype=np.int64)
    seen = np.zeros(2, dtype=np.bool_)
    for k in range(timestamps.size):
        p = ports[k]
        if seen[p] and timestamps[k] - last[p] < dead_time:
            keep[k] = False
        else:
            last[p] = timestamps[k]
            seen[p] = True
    return keep


def _port_channels(port_colours) -> np.ndarray:
    return np.array([SETTING_RED if colour == "red" else SETTING_BLUE for colour in port_colours], dtype=np.uint8)


def _block_generators(seed: int, n_blocks: int) -> List[Dict[str, np.random.Generator]]:
    """Independent substreams per time block and per process, all derived from one seed."""
    blocks = np.random.SeedSequence(seed).spawn(n_blocks)
    return [{name: np.random.Generator(np.random.PCG64(child))
             for name, child in zip(PROCESSES, block.spawn(len(PROCESSES)))} for block in blocks]


def _poisson_times(rng: np.random.Generator, rate_hz: float, start_ps: int, span_ps: int) -> np.ndarray:
    count = rng.poisson(rate_hz * span_ps / PS_PER_SECOND)
    return start_ps + np.floor(rng.random(count) * span_ps).astype(np.int64)


def _block_settings(rng: np.random.Generator, config: SimulationConfig, side: str, start_ps: int, span_ps: int):
    channels = _port_channels(config.port_colours[side])
    f_out = config.wrong_way[side]
    times, ports, labels, true_colour = [], [], [], []
    for port in range(2):
        stellar = _poisson_times(rng, config.setting_rates_hz[side][port], start_ps, span_ps)
        wrong = rng.random(stellar.size) < f_out[port]
        times.append(stellar)
        ports.append(np.where(wrong, 1 - port, port))
        labels.append(np.where(wrong, STELLAR_WRONG_WAY, STELLAR_CORRECT))
        true_colour.append(np.full(stellar.size, channels[port], dtype=np.int8))
    for port in range(2):
        noise = _poisson_times(rng, config.noise_rates_hz[side][port], start_ps, span_ps)
        times.append(noise)
        ports.append(np.full(noise.size, port))
        labels.append(np.full(noise.size, NOISE))
        true_colour.append(np.full(noise.size, -1, dtype=np.int8))
    return (np.concatenate(times), np.concatenate(ports).astype(np.int64),
            np.concatenate(labels).astype(np.int8), np.concatenate(true_colour))


def _active_angle(times: np.ndarray, setting_times: np.ndarray, setting_channels: np.ndarray,
                  angles: Dict[str, float], default_channel: int) -> np.ndarray:
    """Polariser angle in radians of the most recent setting click at each time."""
    idx = np.searchsorted(setting_times, times, side="right") - 1
    channel = np.where(idx >= 0, setting_channels[np.maximum(idx, 0)], default_channel)
    return np.deg2rad(np.where(channel == SETTING_RED, angles["red"], angles["blue"]))


def _sorted_side(site: str, parts: List[tuple]) -> Tuple[TimeTagStream, TruthRecord]:
    times = np.concatenate([p[0] for p in parts])
    channels = np.concatenate([p[1] for p in parts]).astype(np.uint8)
    labels = np.concatenate([p[2] for p in parts]).astype(np.int8)
    pair_id = np.concatenate([p[3] for p in parts]).astype(np.int64)
    colour = np.concatenate([p[4] for p in parts]).astype(np.int8)
    keep = times >= 0
    order = np.argsort(times[keep], kind="stable")
    stream = TimeTagStream(site, times[keep][order], channels[keep][order])
    return stream, TruthRecord(site, labels[keep][order], pair_id[keep][order], colour[keep][order])


def simulate_run(config: SimulationConfig) -> Tuple[Dict[str, TimeTagStream], Dict[str, TruthRecord]]:
    """
    Poisson pair emissions observed through Poisson setting streams. Each pair's
    outcomes follow p(A = B) = (1 - V cos 2(a - b)) / 2 at the settings active on
    arrival; detection is fair sampling with per-outcome efficiencies eta / sqrt(R)
    for '+' and eta sqrt(R) for '-'. Drift and jitter are applied to B only.
    """
    duration_ps = int(round(config.duration_s * PS_PER_SECOND))
    block_ps = int(round(SIMULATION_BLOCK_S * PS_PER_SECOND))
    n_blocks = max(1, math.ceil(duration_ps / block_ps))
    generators = _block_generators(config.seed, n_blocks)
    spans = [(k * block_ps, min(block_ps, duration_ps - k * block_ps)) for k in range(n_blocks)]

    settings, parts = {}, {side: [] for side in TIMETAG_SITES}
    for side in TIMETAG_SITES:
        blocks = [_block_settings(gens[f"settings_{side}"], config, side, start, span)
                  for gens, (start, span) in zip(generators, spans)]
        times, ports, labels, colour = (np.concatenate(column) for column in zip(*blocks))
        order = np.argsort(times, kind="stable")
        times, ports, labels, colour = times[order], ports[order], labels[order], colour[order]
        if config.setting_dead_time_ps > 0 and times.size:
            keep = _detector_dead_time(times, ports, np.int64(config.setting_dead_time_ps))
            times, ports, labels, colour = times[keep], ports[keep], labels[keep], colour[keep]
        channels = _port_channels(config.port_colours[side])[ports]
        settings[side] = (times, channels)
        parts[side].append((times, channels, labels, np.full(times.size, -1), colour))

    eta = config.detection_efficiency
    efficiency = {side: np.minimum(eta * np.array([1.0 / math.sqrt(r), math.sqrt(r)]), 1.0)
                  for side, r in config.efficiency_ratio.items()}
    next_pair = 0
    for gens, (start, span) in zip(generators, spans):
        rng = gens["pairs"]
        emitted = np.sort(_poisson_times(rng, config.pair_rate_hz, start, span))
        a_minus = rng.integers(0, 2, emitted.size)
        u_same = rng.random(emitted.size)
        u_det_A = rng.random(emitted.size)
        u_det_B = rng.random(emitted.size)
        jitter = rng.normal(0.0, config.jitter_ps, emitted.size) if config.jitter_ps > 0 else np.zeros(emitted.size)

        default = {side: _port_channels(config.port_colours[side])[0] for side in TIMETAG_SITES}
        angle_A = _active_angle(emitted, *settings["A"], config.angles_deg["A"], default["A"])
        angle_B = _active_angle(emitted, *settings["B"], config.angles_deg["B"], default["B"])
        p_same = 0.5 * (1.0 - config.visibility * np.cos(2.0 * (angle_A - angle_B)))
        b_minus = np.where(u_same < p_same, a_minus, 1 - a_minus)
        pair_id = next_pair + np.arange(emitted.size)
        next_pair += emitted.size

        out_A = np.where(a_minus == 1, OUTCOME_MINUS, OUTCOME_PLUS)
        out_B = np.where(b_minus == 1, OUTCOME_MINUS, OUTCOME_PLUS)
        seen_A = u_det_A < efficiency["A"][a_minus]
        seen_B = u_det_B < efficiency["B"][b_minus]
        t_B = emitted + np.rint(jitter).astype(np.int64)
        parts["A"].append((emitted[seen_A], out_A[seen_A], np.full(seen_A.sum(), PAIR), pair_id[seen_A],
                           np.full(seen_A.sum(), -1)))
        parts["B"].append((t_B[seen_B], out_B[seen_B], np.full(seen_B.sum(), PAIR), pair_id[seen_B],
                           np.full(seen_B.sum(), -1)))

        for side in TIMETAG_SITES:
            dark_rng = gens[f"dark_{side}"]
            dark = _poisson_times(dark_rng, config.dark_rate_hz[side], start, span)
            channel = np.where(dark_rng.integers(0, 2, dark.size) == 1, OUTCOME_MINUS, OUTCOME_PLUS)
            parts[side].append((dark, channel, np.full(dark.size, DARK), np.full(dark.size, -1),
                                np.full(dark.size, -1)))

    streams, truth = {}, {}
    for side in TIMETAG_SITES:
        shifted = []
        for times, *rest in parts[side]:
            times = times + int(config.start_offset_ps)
            if side == "B":
                times = times + np.rint(config.drift_offset_ps
                                        + config.drift_rate_ps_per_s * times / PS_PER_SECOND).astype(np.int64)
            shifted.append((times, *rest))
        streams[side], truth[side] = _sorted_side(side, shifted)
    logging.info(f"Simulated {next_pair} pairs over {config.duration_s} s: "
                 f"{len(streams['A'])} events at A, {len(streams['B'])} at B")
    return streams, truth


def from_rate_budget(budget: RateBudget, config: Optional[SimulationConfig] = None) -> SimulationConfig:
    """Setting and noise rates that reproduce the measured budget r_i on every port."""
    config = config or SimulationConfig()
    stellar = stellar_rates(budget)
    return dataclasses.replace(
        config,
        setting_rates_hz={"A": tuple(float(s) for s in stellar.s_A), "B": tuple(float(s) for s in stellar.s_B)},
        noise_rates_hz={side: tuple(float(n) for n in budget.side(side).n) for side in TIMETAG_SITES},
        wrong_way={side: (budget.side(side).f_12, budget.side(side).f_21) for side in TIMETAG_SITES},
    )


def _integer_counts(array: np.ndarray, what: str) -> np.ndarray:
    if not np.issubdtype(array.dtype, np.integer) and not np.all(array == np.round(array)):
        raise InconsistentTablesError(f"{what} must hold integer counts", sys)
    return np.asarray(array, dtype=np.int64)


def _cell_events(counts: np.ndarray, extra_A: np.ndarray, extra_B: np.ndarray):
    """Outcome pattern of one settings cell: (has_A, outcome_A, has_B, outcome_B) per event."""
    # (count, has_A, outcome_A, has_B, outcome_B)
    groups = [(counts[a, b], True, a, True, b) for a in range(2) for b in range(2)]
    groups += [(extra_A[a], True, a, False, 0) for a in range(2)]
    groups += [(extra_B[b], False, 0, True, b) for b in range(2)]
    n = np.array([g[0] for g in groups], dtype=np.int64)
    return tuple(np.repeat(np.array([g[k] for g in groups]), n) for k in range(1, 5))


def synthesize_from_tables(table: CoincidenceTable, singles: Optional[SinglesTable] = None,
                           analysis_config: Optional[AnalysisConfig] = None) -> Dict[str, TimeTagStream]:
    """
    Streams whose analysis under `analysis_config` (drift correction off)
    returns exactly `table` and, when given, `singles`. Events sit in slots;
    each slot opens with one setting click per side and carries up to a fixed
    number of outcomes 50 ns apart, all younger than the shorter tau_used.
    """
    config = analysis_config or AnalysisConfig()
    counts = _integer_counts(table.counts, "coincidence table")
    if singles is None:
        extra_A = np.zeros((2, 2, 2), dtype=np.int64)
        extra_B = np.zeros((2, 2, 2), dtype=np.int64)
    else:
        extra_A = singles.alice - counts.sum(axis=3)
        extra_B = singles.bob - counts.sum(axis=2).transpose(1, 0, 2)
        if np.any(extra_A < 0) or np.any(extra_B < 0):
            raise InconsistentTablesError("singles are smaller than the coincidence marginals", sys)

    reach = min(int(config.tau_used_ps["A"]), int(config.tau_used_ps["B"])) - SIMULATION_SLOT_LEAD_PS
    capacity = reach // SIMULATION_SLOT_STEP_PS + 1
    if capacity < 1:
        raise InconsistentTablesError("tau_used is too short to place synthetic events", sys)
    span = SIMULATION_SLOT_LEAD_PS + (capacity - 1) * SIMULATION_SLOT_STEP_PS
    spacing = max(span, int(config.tau_cut_ps["A"]), int(config.tau_cut_ps["B"])) + SIMULATION_SLOT_GAP_PS
    channels = {side: _port_channels(config.port_colours[side]) for side in TIMETAG_SITES}

    setting = {side: ([], []) for side in TIMETAG_SITES}
    outcome = {side: ([], []) for side in TIMETAG_SITES}
    slot = 0
    for i in range(2):
        for j in range(2):
            has_A, out_A, has_B, out_B = _cell_events(counts[i, j], extra_A[i, j], extra_B[j, i])
            if has_A.size == 0:
                continue
            k = np.arange(has_A.size)
            slots = slot + k // capacity
            n_slots = int(slots[-1]) - slot + 1
            starts = SIMULATION_SLOT_GAP_PS + (slot + np.arange(n_slots)) * spacing
            times = SIMULATION_SLOT_GAP_PS + slots * spacing + SIMULATION_SLOT_LEAD_PS \
                + (k % capacity) * SIMULATION_SLOT_STEP_PS
            for side, port in (("A", i), ("B", j)):
                setting[side][0].append(starts)
                setting[side][1].append(np.full(n_slots, channels[side][port], dtype=np.uint8))
            outcome["A"][0].append(times[has_A])
            outcome["A"][1].append(np.where(out_A[has_A] == 1, OUTCOME_MINUS, OUTCOME_PLUS))
            outcome["B"][0].append(times[has_B])
            outcome["B"][1].append(np.where(out_B[has_B] == 1, OUTCOME_MINUS, OUTCOME_PLUS))
            slot += n_slots

    streams = {}
    for side in TIMETAG_SITES:
        times = np.concatenate(setting[side][0] + outcome[side][0] + [np.empty(0, dtype=np.int64)])
        chans = np.concatenate(setting[side][1] + outcome[side][1] + [np.empty(0, dtype=np.uint8)])
        order = np.argsort(times, kind="stable")
        streams[side] = TimeTagStream(side, times[order], chans[order])
    logging.info(f"Synthesized {slot} slots: {len(streams['A'])} events at A, {len(streams['B'])} at B")
    return streams


class ExperimentSimulator:
    def __init__(self, simulation_config: SimulationConfig):
        self.config = simulation_config

    def initiate_simulation(self) -> SimulationArtifact:
        """
        Method Name :   initiate_simulation
        Description :   Generates a synthetic run and writes time tags, truth labels and the used config

        Output      :   Returns the simulation artifact with file paths
        On Failure  :   Write an exception log and then raise an exception
        """
        logging.info("Entered initiate_simulation method of ExperimentSimulator class")
        try:
            streams, truth = simulate_run(self.config)
            data = TimeTagData()
            events = data.write_binary(self.config.timetag_file_path, streams)
            data.write_truth(self.config.truth_file_path, streams, truth)
            os.makedirs(os.path.dirname(self.config.config_file_path) or ".", exist_ok=True)
            with open(self.config.config_file_path, "w", encoding="utf-8") as handle:
                json.dump(to_jsonable(self.config.to_dict()), handle, indent=4)
            logging.info("Exited initiate_simulation method of ExperimentSimulator class")
            return SimulationArtifact(self.config.timetag_file_path, self.config.truth_file_path,
                                      self.config.config_file_path, events)
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

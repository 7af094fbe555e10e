"""
Backsliding bound for hidden-variable strategies with memory.

A trial adds W_alpha - (3 + eps_bar) to the running excess. Given the loser
cell L of the trial, cell kl != L wins with probability q_kl and adds
1 / (q_kl (1 - eps_kl)) - (3 + eps_bar); cell L wins only when corrupt
(probability q_L eps_L) and otherwise loses, adding -(3 + eps_bar).
"""
import itertools
import sys
from typing import Dict, Sequence, Tuple

import numpy as np

from src.constants import MEMORY_N_MAX, SIMULATION_SEED
from src.entity.artifact_entity import MemoryBound, PredictabilityTable, SettingProbabilities
from src.exception import AnalysisError
from src.logger import logging

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))
# values are summed on an integer grid of this spacing so equal sums collide exactly
LATTICE_TOLERANCE = 1e-12


def trial_atoms(probs: SettingProbabilities, pred: PredictabilityTable) -> Tuple[np.ndarray, np.ndarray]:
    """
    Increment values (4 win values in cell order, then the loss value) and the
    4 x 5 matrix of their probabilities for each loser cell.
    """
    q = probs.q.ravel()
    eps = pred.eps_ij.ravel()
    if np.any(q <= 0) or np.any(eps >= 1):
        raise AnalysisError("memory bound needs q_ij > 0 and eps_ij < 1", sys)
    eps_bar = float(np.sum(eps / (1.0 - eps)))
    values = np.append(1.0 / (q * (1.0 - eps)) - (3.0 + eps_bar), -(3.0 + eps_bar))
    weights = np.zeros((4, 5))
    for loser in range(4):
        weights[loser, :4] = q
        weights[loser, loser] = q[loser] * eps[loser]
        weights[loser, 4] = q[loser] * (1.0 - eps[loser])
    return values, weights


def _add_trial(support: np.ndarray, mass: np.ndarray, units: np.ndarray, weights: np.ndarray):
    keys = (support[:, None] + units[None, :]).ravel()
    probs = (mass[:, None] * weights[None, :]).ravel()
    live = probs > 0
    merged, inverse = np.unique(keys[live], return_inverse=True)
    return merged, np.bincount(inverse, weights=probs[live])


def p_left_table(probs: SettingProbabilities, pred: PredictabilityTable, n_max: int) -> Dict[tuple, float]:
    """
    P(excess after n trials < 0) for every loser composition (n_11, n_12, n_21, n_22)
    with 1 <= n <= n_max, by exact convolution on the value lattice.
    """
    values, weights = trial_atoms(probs, pred)
    units = np.rint(values / LATTICE_TOLERANCE).astype(np.int64)
    start = (np.zeros(1, dtype=np.int64), np.ones(1))
    results = {}

    # compositions share prefixes: extend loser-11 trials, then 12, 21 and 22 in turn
    level_1 = {0: start}
    for a in range(1, n_max + 1):
        level_1[a] = _add_trial(*level_1[a - 1], units, weights[0])
    for a, dist_a in level_1.items():
        dist_ab = dist_a
        for b in range(0, n_max - a + 1):
            if b:
                dist_ab = _add_trial(*dist_ab, units, weights[1])
            dist_abc = dist_ab
            for c in range(0, n_max - a - b + 1):
                if c:
                    dist_abc = _add_trial(*dist_abc, units, weights[2])
                dist = dist_abc
                for d in range(0, n_max - a - b - c + 1):
                    if d:
                        dist = _add_trial(*dist, units, weights[3])
                    if a + b + c + d:
                        support, mass = dist
                        results[(a, b, c, d)] = float(mass[support < 0].sum())
    return results


def memory_bound(probs: SettingProbabilities, pred: PredictabilityTable, n_max: int = MEMORY_N_MAX) -> MemoryBound:
    """
    p_left_max(n) = max over loser compositions of n trials of P(excess < 0), and
    B = max_n p_left_max(n). Ties keep the first composition in lexicographic order.
    """
    if n_max < 1:
        raise AnalysisError(f"n_max must be >= 1, got {n_max}", sys)
    table = p_left_table(probs, pred, n_max)
    p_left_max = np.zeros(n_max)
    losers = []
    for n in range(1, n_max + 1):
        best, best_value = None, -1.0
        for composition in itertools.product(range(n + 1), repeat=3):
            if sum(composition) > n:
                continue
            key = composition + (n - sum(composition),)
            if table[key] > best_value + LATTICE_TOLERANCE:
                best, best_value = key, table[key]
        p_left_max[n - 1] = best_value
        losers.append(best)
    n_at_max = int(np.argmax(p_left_max)) + 1
    bound = float(p_left_max[n_at_max - 1])
    logging.info(f"Memory bound B = {bound:.4f} at n = {n_at_max}")
    return MemoryBound(p_left_max, tuple(losers), bound, n_at_max)


def simulate_memory_walk(probs: SettingProbabilities, pred: PredictabilityTable, losers: Sequence[int],
                         samples: int, seed: int = SIMULATION_SEED) -> Tuple[float, float]:
    """
    Monte Carlo estimate of P(excess < 0) for the loser composition `losers`
    (trials per loser cell in cell order), with its standard error.
    """
    values, weights = trial_atoms(probs, pred)
    rng = np.random.Generator(np.random.PCG64(seed))
    total = np.zeros(samples)
    for loser, count in enumerate(losers):
        if count:
            atoms = rng.multinomial(int(count), weights[loser], size=samples)
            total += atoms @ values
    p = float(np.mean(total < 0))
    return p, float(np.sqrt(p * (1.0 - p) / samples))

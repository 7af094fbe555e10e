import math
import sys
from typing import List, NamedTuple, Optional

import numpy as np
from scipy import special, stats

from src.components.memory import memory_bound, simulate_memory_walk
from src.constants import BELLSTATS_KKT_MAX_STEPS, BELLSTATS_NO_SIGNALING_ALPHA, MEMORY_N_MAX
from src.entity.artifact_entity import (
    ChshEstimate,
    Chi2Result,
    NaiveIidEstimate,
    NoSignalingLine,
    NoSignalingReport,
    PredictabilityTable,
    SettingProbabilities,
    SignificanceReport,
    WinStatistic,
)
from src.entity.rates_entity import RateBudget, SideRates
from src.entity.timetag_entity import CoincidenceTable, SinglesTable
from src.exception import (
    AnalysisError,
    ConfigError,
    DegenerateMarginalsError,
    EmptyCellError,
    FullyPredictableCellError,
    MyException,
    NegativeStellarRateError,
    SingularSystemError,
)
from src.logger import logging

# win condition per settings cell: A != B except for a2 b2
WIN_ON_EQUAL = np.array([[False, False], [False, True]])


class StellarRates(NamedTuple):
    s_A: np.ndarray
    s_B: np.ndarray
    total_A: float
    total_B: float


def setting_probabilities(table: CoincidenceTable) -> SettingProbabilities:
    n_ij = table.n_ij.astype(float)
    total = math.fsum(n_ij.ravel())
    if total <= 0:
        raise EmptyCellError("coincidence table has zero total", sys)
    q = n_ij / total
    return SettingProbabilities(q, q.sum(axis=1), q.sum(axis=0), n_ij, total)


def chi2_independence(probs: SettingProbabilities) -> Chi2Result:
    """Pearson chi-square test of q_ij = p(a_i) p(b_j) with one degree of freedom."""
    expected = np.outer(probs.p_a, probs.p_b)
    if np.any(expected <= 0):
        raise DegenerateMarginalsError(f"setting marginals are degenerate: p_a={probs.p_a}, p_b={probs.p_b}", sys)
    chi2 = probs.total * float(np.sum((probs.q - expected) ** 2 / expected))
    return Chi2Result(chi2, float(stats.chi2.sf(chi2, 1)), 1)


def chsh(table: CoincidenceTable) -> ChshEstimate:
    n_ij = table.n_ij.astype(float)
    if np.any(n_ij <= 0):
        raise EmptyCellError(f"empty settings cell in coincidence table: N_ij = {n_ij.ravel().tolist()}", sys)
    counts = table.counts.astype(float)
    p_equal = (counts[:, :, 0, 0] + counts[:, :, 1, 1]) / n_ij
    correlator = float(-p_equal[0, 0] - p_equal[0, 1] - p_equal[1, 0] + p_equal[1, 1])
    return ChshEstimate(p_equal, correlator, 2.0 * p_equal - 1.0, 2.0 * abs(-correlator - 1.0))


def naive_iid_significance(table: CoincidenceTable) -> NaiveIidEstimate:
    """
    Legacy Gaussian estimate assuming i.i.d. trials: S = |E11 + E12 + E21 - E22|
    with sigma_S^2 = sum (1 - E_ij^2) / N_ij.
    """
    estimate = chsh(table)
    e = estimate.e_ij
    s_value = abs(e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1])
    sigma = math.sqrt(float(np.sum((1.0 - e ** 2) / table.n_ij)))
    return NaiveIidEstimate(float(s_value), sigma, float((s_value - 2.0) / sigma))


def _side_stellar(rates: SideRates, side: str) -> np.ndarray:
    f12, f21 = rates.f_12, rates.f_21
    det = 1.0 - f12 - f21
    if abs(det) < 1e-12:
        raise SingularSystemError(f"side {side}: 1 - f_12 - f_21 = 0, stellar rates are not identifiable", sys)
    mixing = np.array([[1.0 - f12, f21], [f12, 1.0 - f21]])
    s = np.linalg.solve(mixing, rates.r - rates.n)
    if np.any(s < 0):
        raise NegativeStellarRateError(f"side {side}: recovered stellar rates {s.tolist()} are negative", sys)
    return s


def stellar_rates(budget: RateBudget) -> StellarRates:
    """
    Inverts r_i = (1 - f_{i->i'}) s_i + f_{i'->i} s_i' + n_i on each side. The
    totals s = sum (r - n) do not depend on f.
    """
    s_A = _side_stellar(budget.alice, "A")
    s_B = _side_stellar(budget.bob, "B")
    return StellarRates(s_A, s_B, float(np.sum(budget.alice.r - budget.alice.n)),
                        float(np.sum(budget.bob.r - budget.bob.n)))


def _side_predictability(rates: SideRates, total: float):
    r, n = rates.r, rates.n
    f = rates.f_into
    sigma_f = rates.sigma_f_rel * f
    r_other, n_other = r[::-1], n[::-1]
    sigma_r_other, sigma_n_other = rates.sigma_r[::-1], rates.sigma_n[::-1]
    eps = (n + f * total) / r
    numerator = r ** 2 * (total ** 2 * sigma_f ** 2 + (1.0 - f) ** 2 * rates.sigma_n ** 2
                          + f ** 2 * (sigma_r_other ** 2 + sigma_n_other ** 2)) \
        + (n * (1.0 - f) + f * (r_other - n_other)) ** 2 * rates.sigma_r ** 2
    return eps, np.sqrt(numerator / r ** 4)


def predictability(budget: RateBudget) -> PredictabilityTable:
    """
    Excess predictabilities eps_{a_i} = (n_i + f_{i'->i} s) / r_i per side with
    first-order uncertainties, combined into eps_ij = eps_{a_i} + eps_{b_j}
    (clamped at 1) and eps_bar = sum eps_ij / (1 - eps_ij).
    """
    for side, rates in (("A", budget.alice), ("B", budget.bob)):
        if np.any(rates.r <= 0):
            raise ConfigError(f"side {side}: total rates must be > 0", sys)
    s_A = float(np.sum(budget.alice.r - budget.alice.n))
    s_B = float(np.sum(budget.bob.r - budget.bob.n))
    eps_a, sigma_a = _side_predictability(budget.alice, s_A)
    eps_b, sigma_b = _side_predictability(budget.bob, s_B)

    raw = eps_a[:, None] + eps_b[None, :]
    if np.any(raw > 1.0):
        logging.warning(f"Predictability exceeds 1 in cells {np.argwhere(raw > 1.0).tolist()}, clamped")
    eps_ij = np.minimum(raw, 1.0)
    sigma_ij = np.sqrt(sigma_a[:, None] ** 2 + sigma_b[None, :] ** 2)
    worst = np.unravel_index(int(np.argmax(eps_ij)), eps_ij.shape)
    with np.errstate(divide="ignore"):
        eps_bar = float(np.sum(eps_ij / (1.0 - eps_ij)))
    return PredictabilityTable(s_A, s_B, eps_a, sigma_a, eps_b, sigma_b, eps_ij, sigma_ij,
                               float(eps_ij[worst]), float(sigma_ij[worst]), eps_bar)


def _check_cells(probs: SettingProbabilities, pred: PredictabilityTable) -> None:
    if np.any(probs.q <= 0):
        raise EmptyCellError("every settings cell needs q_ij > 0", sys)
    if np.any(pred.eps_ij >= 1.0):
        raise FullyPredictableCellError(
            f"fully predictable cell: eps_ij = {pred.eps_ij.ravel().tolist()}", sys)


def win_counts(table: CoincidenceTable) -> np.ndarray:
    counts = table.counts.astype(float)
    equal = counts[:, :, 0, 0] + counts[:, :, 1, 1]
    unequal = counts[:, :, 0, 1] + counts[:, :, 1, 0]
    return np.where(WIN_ON_EQUAL, equal, unequal)


def win_statistic(table: CoincidenceTable, pred: PredictabilityTable,
                  probs: Optional[SettingProbabilities] = None) -> WinStatistic:
    """W = sum N_ij^win / (q_ij (1 - eps_ij)) and its local-realist expectation N (3 + eps_bar)."""
    probs = probs or setting_probabilities(table)
    _check_cells(probs, pred)
    n_win = win_counts(table)
    w = math.fsum((n_win / (probs.q * (1.0 - pred.eps_ij))).ravel())
    return WinStatistic(n_win, w, probs.total * (3.0 + pred.eps_bar), pred.eps_bar)


def expected_win_statistic(n_ij: np.ndarray, eps_ij: np.ndarray, p_win: np.ndarray) -> float:
    """<W> when cell ij wins with probability eps_ij + (1 - eps_ij) P_ij^win."""
    n_ij = np.asarray(n_ij, dtype=float)
    eps_ij = np.asarray(eps_ij, dtype=float)
    q = n_ij / n_ij.sum()
    expected_wins = (eps_ij + (1.0 - eps_ij) * np.asarray(p_win, dtype=float)) * n_ij
    return math.fsum((expected_wins / (q * (1.0 - eps_ij))).ravel())


def win_probabilities(n_win: np.ndarray, n_ij: np.ndarray, eps_ij: np.ndarray) -> np.ndarray:
    """Uncorrupted win probabilities P_ij^win inferred from observed wins."""
    return n_win / (n_ij * (1.0 - eps_ij)) - eps_ij / (1.0 - eps_ij)


def optimal_losers(probs: SettingProbabilities, pred: PredictabilityTable, N: Optional[float] = None) -> np.ndarray:
    """
    Loser-plan fractions f_ij maximising sigma_W subject to sum f = 1 and f >= 0.
    The stationary point is f = a - mu q over the free cells; while a component
    is negative the most negative one is fixed at zero and the rest re-solved.
    """
    _check_cells(probs, pred)
    N = probs.total if N is None else float(N)
    q = probs.q.ravel()
    eps = pred.eps_ij.ravel()
    a = 0.5 + (N - 1.0) / (2.0 * N) * eps / (1.0 - eps)
    free = np.ones(4, dtype=bool)
    f = np.zeros(4)
    for _ in range(BELLSTATS_KKT_MAX_STEPS):
        mu = (a[free].sum() - 1.0) / q[free].sum()
        f = np.where(free, a - mu * q, 0.0)
        if np.all(f >= 0.0):
            break
        free[int(np.argmin(f))] = False
    f = np.clip(f, 0.0, None)
    return (f / f.sum()).reshape(2, 2)


def sigma_w(probs: SettingProbabilities, pred: PredictabilityTable, f_ij: np.ndarray,
            N: Optional[float] = None) -> float:
    N = probs.total if N is None else float(N)
    q, eps, f = probs.q, pred.eps_ij, np.asarray(f_ij, dtype=float)
    variance = N ** 2 / (N - 1.0) * np.sum(f * (1.0 - f) / q) + N * np.sum(f * eps / (q * (1.0 - eps)))
    return float(math.sqrt(max(variance, 0.0)))


def sigma_w_unconstrained(probs: SettingProbabilities, pred: PredictabilityTable,
                          N: Optional[float] = None) -> float:
    """Closed form of sigma_W at the stationary loser plan, negative components allowed."""
    N = probs.total if N is None else float(N)
    q, eps = probs.q, pred.eps_ij
    eps_bar = float(np.sum(eps / (1.0 - eps)))
    variance = (N ** 2 / (4.0 * (N - 1.0)) * (np.sum(1.0 / q) - 4.0) - N * eps_bar
                + N / 4.0 * np.sum(eps / (q * (1.0 - eps)))
                - (N - 1.0) / 4.0 * eps_bar ** 2
                + 0.25 * np.sum((N - eps) * eps / (q * (1.0 - eps) ** 2)))
    return float(math.sqrt(variance))


def log_erfc(x) -> np.ndarray:
    """Natural log of erfc(x), finite far into the tail."""
    x = np.asarray(x, dtype=float)
    return math.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0))


def gaussian_equivalent(p: float, log_p: Optional[float] = None) -> float:
    """nu with p = erfc(nu / sqrt 2) / 2; `log_p` keeps precision once p underflows."""
    if log_p is None:
        if p <= 0:
            return float("inf")
        log_p = math.log(p)
    if log_p >= 0:
        return float("-inf")
    return float(-special.ndtri_exp(log_p))


def memory_adjusted_p(p: float, bound: float) -> float:
    if not 0.0 <= bound < 1.0:
        raise AnalysisError(f"memory bound B must lie in [0, 1), got {bound}", sys)
    return p / (1.0 - bound)


def significance(table: CoincidenceTable, pred: PredictabilityTable, probs: Optional[SettingProbabilities] = None,
                 bound: Optional[float] = None) -> SignificanceReport:
    """
    Number of standard deviations by which W exceeds its local-realist
    expectation, discounted by the propagated predictability uncertainty
    (nu = nu_bar / (1 + Delta_nu)), with p = 2 p_cond and optionally the
    memory-adjusted p_mem = p / (1 - B).
    """
    probs = probs or setting_probabilities(table)
    win = win_statistic(table, pred, probs)
    N = probs.total
    f_opt = optimal_losers(probs, pred, N)
    sigma = sigma_w(probs, pred, f_opt, N)
    if not sigma > 0:
        raise AnalysisError("sigma_W must be > 0", sys)

    nu_bar = (win.w - win.w_expected) / sigma
    residual = win.n_win - N * probs.q - (nu_bar * N / (2.0 * sigma)) * f_opt
    gradient = residual / (probs.q * (1.0 - pred.eps_ij) ** 2)
    delta_nu = math.sqrt(float(np.sum((pred.sigma_eps_a / sigma) ** 2 * gradient.sum(axis=1) ** 2)
                               + np.sum((pred.sigma_eps_b / sigma) ** 2 * gradient.sum(axis=0) ** 2)))
    nu = nu_bar / (1.0 + delta_nu)

    log_p_cond = float(special.log_ndtr(-nu))
    log_p = log_p_cond + math.log(2.0)
    p = math.exp(log_p)
    p_mem = log_p_mem = float("nan")
    nu_equivalent = gaussian_equivalent(p, log_p)
    if bound is not None:
        p_mem = memory_adjusted_p(p, bound)
        log_p_mem = log_p - math.log1p(-bound)
        nu_equivalent = gaussian_equivalent(p_mem, log_p_mem)

    return SignificanceReport(
        n_win=win.n_win, w=win.w, w_expected=win.w_expected, f_opt=f_opt, sigma_w=sigma,
        nu_bar=nu_bar, delta_nu=delta_nu, nu=nu, p_cond=math.exp(log_p_cond), log10_p=log_p / math.log(10.0),
        p=p, p_win=win_probabilities(win.n_win, probs.n_ij, pred.eps_ij),
        bound=float("nan") if bound is None else float(bound), p_mem=p_mem, nu_equivalent=nu_equivalent,
    )


def _pooled_z(label: str, plus_1: float, total_1: float, plus_2: float, total_2: float) -> NoSignalingLine:
    if total_1 <= 0 or total_2 <= 0:
        raise EmptyCellError(f"no-signaling test {label!r} has an empty cell", sys)
    p_1, p_2 = plus_1 / total_1, plus_2 / total_2
    pooled = (plus_1 + plus_2) / (total_1 + total_2)
    spread = pooled * (1.0 - pooled) * (1.0 / total_1 + 1.0 / total_2)
    z = 0.0 if spread <= 0 else (p_1 - p_2) / math.sqrt(spread)
    return NoSignalingLine(label, p_1, p_2, z, float(special.erfc(abs(z) / math.sqrt(2.0))))


def _marginal_lines(alice_plus, alice_total, bob_plus, bob_total) -> List[NoSignalingLine]:
    """alice_* indexed [i, j]; bob_* indexed [j, i]."""
    lines = []
    for i in range(2):
        lines.append(_pooled_z(f"p(A=+|a{i + 1}): b1 vs b2", alice_plus[i, 0], alice_total[i, 0],
                               alice_plus[i, 1], alice_total[i, 1]))
    for j in range(2):
        lines.append(_pooled_z(f"p(B=+|b{j + 1}): a1 vs a2", bob_plus[j, 0], bob_total[j, 0],
                               bob_plus[j, 1], bob_total[j, 1]))
    return lines


def no_signaling(singles: SinglesTable, alpha: float = BELLSTATS_NO_SIGNALING_ALPHA) -> NoSignalingReport:
    """
    Pooled two-proportion z-tests that each local '+' probability does not
    depend on the distant setting.
    """
    alice = singles.alice.astype(float)
    bob = singles.bob.astype(float)
    return NoSignalingReport(_marginal_lines(alice[:, :, 0], alice.sum(axis=2), bob[:, :, 0], bob.sum(axis=2)),
                             alpha)


def efficiency_correction(table: CoincidenceTable, R_A: float = 1.0, R_B: float = 1.0) -> CoincidenceTable:
    """Scales '+' counts by sqrt(R) and '-' counts by 1/sqrt(R) on each side."""
    if not (R_A > 0 and R_B > 0):
        raise ConfigError(f"efficiency ratios must be > 0, got R_A={R_A}, R_B={R_B}", sys)
    scale_A = np.array([math.sqrt(R_A), 1.0 / math.sqrt(R_A)])
    scale_B = np.array([math.sqrt(R_B), 1.0 / math.sqrt(R_B)])
    counts = table.counts.astype(float) * scale_A[None, None, :, None] * scale_B[None, None, None, :]
    return CoincidenceTable(counts.reshape(16))


def coincidence_no_signaling(table: CoincidenceTable, R_A: float = 1.0, R_B: float = 1.0,
                             alpha: float = BELLSTATS_NO_SIGNALING_ALPHA) -> NoSignalingReport:
    """No-signaling z-tests on marginals conditioned on a coincidence, after efficiency correction."""
    counts = efficiency_correction(table, R_A, R_B).counts
    totals = counts.sum(axis=(2, 3))
    alice_plus = counts[:, :, 0, :].sum(axis=2)
    bob_plus = counts[:, :, :, 0].sum(axis=2).T
    return NoSignalingReport(_marginal_lines(alice_plus, totals, bob_plus, totals.T), alpha)


def adapted_bound(estimate: ChshEstimate, pred: PredictabilityTable) -> dict:
    """The CHSH bound adapted to predictable trials reads C <= eps."""
    return {"C": estimate.correlator, "epsilon": pred.eps, "violated": bool(estimate.correlator > pred.eps)}


class BellAnalysis:
    """Stage computing the full statistical report from tabulated counts and rates."""

    def __init__(self, efficiency_ratio: dict = None, alpha: float = BELLSTATS_NO_SIGNALING_ALPHA,
                 n_max: int = MEMORY_N_MAX, monte_carlo_samples: int = 0, monte_carlo_seed: int = 1):
        self.efficiency_ratio = efficiency_ratio or {"A": 1.0, "B": 1.0}
        self.alpha = alpha
        self.n_max = n_max
        self.monte_carlo_samples = monte_carlo_samples
        self.monte_carlo_seed = monte_carlo_seed

    def initiate_bell_analysis(self, table: CoincidenceTable, budget: RateBudget,
                               singles: Optional[SinglesTable] = None) -> dict:
        """
        Method Name :   initiate_bell_analysis
        Description :   Runs CHSH, settings independence, predictability, significance,
                        memory bound and no-signaling checks

        Output      :   Returns the analysis report dictionary
        On Failure  :   Write an exception log and then raise an exception
        """
        logging.info("Entered initiate_bell_analysis method of BellAnalysis class")
        try:
            probs = setting_probabilities(table)
            independence = chi2_independence(probs)
            estimate = chsh(table)
            pred = predictability(budget)
            memory = memory_bound(probs, pred, self.n_max)
            report_significance = significance(table, pred, probs, memory.bound)
            logging.info(f"C = {estimate.correlator:.5f}, S = {estimate.s_value:.5f}, eps = {pred.eps:.5f}, "
                         f"nu = {report_significance.nu:.3f}, p = {report_significance.p:.3e}, "
                         f"B = {memory.bound:.4f}")

            report = {
                "N": probs.total,
                "settings": probs.to_dict(),
                "chi2": independence.to_dict(),
                "chsh": estimate.to_dict(),
                "adapted_bound": adapted_bound(estimate, pred),
                "naive_iid": naive_iid_significance(table).to_dict(),
                "predictability": pred.to_dict(),
                "stellar_rates": stellar_rates(budget)._asdict(),
                "significance": report_significance.to_dict(),
                "memory": {
                    **memory.to_dict(),
                    "p": report_significance.p,
                    "p_mem": report_significance.p_mem,
                    "nu_equivalent": report_significance.nu_equivalent,
                },
                "coincidence_no_signaling": coincidence_no_signaling(
                    table, self.efficiency_ratio["A"], self.efficiency_ratio["B"], self.alpha).to_dict(),
                "figures": {
                    "E_ij": {"cells": ["a1b1", "a1b2", "a2b1", "a2b2"], "values": estimate.e_ij.ravel()},
                    "p_left_max": {"n": list(range(1, memory.p_left_max.size + 1)), "values": memory.p_left_max},
                },
            }
            if self.monte_carlo_samples > 0:
                n = memory.n_at_max
                walk = simulate_memory_walk(probs, pred, memory.losers[n - 1], self.monte_carlo_samples,
                                            self.monte_carlo_seed)
                report["memory"]["monte_carlo"] = {"n": n, "p_left": walk[0], "standard_error": walk[1]}
            if singles is not None:
                report["no_signaling"] = no_signaling(singles, self.alpha).to_dict()
            logging.info("Exited initiate_bell_analysis method of BellAnalysis class")
            return report
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

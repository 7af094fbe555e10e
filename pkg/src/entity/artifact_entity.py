from dataclasses import dataclass, field
from datetime import datetime
from typing import List, Optional, Tuple

import numpy as np

from src.entity.observation_entity import CatalogueRecord
from src.entity.timetag_entity import CoincidenceTable, DriftModel, SinglesTable


@dataclass(frozen=True, eq=False)
class ValidityProfile:
    side: str
    instants: Tuple[datetime, ...]
    tau_valid: np.ndarray
    min_valid: float
    tau_used: float

    @property
    def variation(self) -> float:
        return float(np.max(self.tau_valid) - np.min(self.tau_valid))

    def to_dict(self, include_series: bool = False) -> dict:
        out = {
            "side": self.side,
            "min_tau_valid_s": self.min_valid,
            "tau_used_s": self.tau_used,
            "variation_s": self.variation,
            "samples": len(self.instants),
        }
        if include_series:
            out["series"] = [[t.isoformat(), v] for t, v in zip(self.instants, self.tau_valid.tolist())]
        return out


@dataclass(frozen=True)
class RankedCandidate:
    record: CatalogueRecord
    visibility_duration: float
    min_tau_valid: float
    airmass_at_mid: float
    score: float
    side: str = ""
    azimuth_at_mid: float = float("nan")
    altitude_at_mid: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "hip": self.record.hip_id,
            "side": self.side,
            "distance_ly": self.record.distance,
            "hp_mag": self.record.hp_magnitude,
            "visibility_duration_s": self.visibility_duration,
            "min_tau_valid_s": self.min_tau_valid,
            "airmass_at_mid": self.airmass_at_mid,
            "azimuth_at_mid_deg": self.azimuth_at_mid,
            "altitude_at_mid_deg": self.altitude_at_mid,
            "score": self.score,
        }


@dataclass(frozen=True)
class RankedPair:
    candidate_A: RankedCandidate
    candidate_B: RankedCandidate
    min_tau_valid_A: float
    min_tau_valid_B: float
    score: float
    flag: str = ""

    @property
    def key(self) -> Tuple[str, str]:
        return self.candidate_A.record.hip_id, self.candidate_B.record.hip_id

    @property
    def sort_key(self) -> tuple:
        return self.candidate_A.record.sort_key + self.candidate_B.record.sort_key

    def to_dict(self) -> dict:
        return {
            "hip_A": self.candidate_A.record.hip_id,
            "hip_B": self.candidate_B.record.hip_id,
            "min_tau_valid_A_s": self.min_tau_valid_A,
            "min_tau_valid_B_s": self.min_tau_valid_B,
            "score": self.score,
            "flag": self.flag,
        }


@dataclass(frozen=True)
class PairRanking:
    pairs: List[RankedPair]
    excluded: List[RankedPair]


@dataclass(frozen=True, eq=False)
class SettingProbabilities:
    q: np.ndarray
    p_a: np.ndarray
    p_b: np.ndarray
    n_ij: np.ndarray
    total: float

    def to_dict(self) -> dict:
        return {"q_ij": self.q, "p_a": self.p_a, "p_b": self.p_b, "N_ij": self.n_ij, "N": self.total}


@dataclass(frozen=True)
class Chi2Result:
    chi2: float
    p_value: float
    dof: int = 1

    def to_dict(self) -> dict:
        return {"chi2": self.chi2, "p_value": self.p_value, "dof": self.dof}


@dataclass(frozen=True, eq=False)
class ChshEstimate:
    p_equal: np.ndarray
    correlator: float
    e_ij: np.ndarray
    s_value: float

    def to_dict(self) -> dict:
        return {"p_equal_ij": self.p_equal, "C": self.correlator, "E_ij": self.e_ij, "S": self.s_value}


@dataclass(frozen=True, eq=False)
class PredictabilityTable:
    s_A: float
    s_B: float
    eps_a: np.ndarray
    sigma_eps_a: np.ndarray
    eps_b: np.ndarray
    sigma_eps_b: np.ndarray
    eps_ij: np.ndarray
    sigma_eps_ij: np.ndarray
    eps: float
    sigma_eps: float
    eps_bar: float

    def to_dict(self) -> dict:
        return {
            "s_A": self.s_A, "s_B": self.s_B,
            "eps_a": self.eps_a, "sigma_eps_a": self.sigma_eps_a,
            "eps_b": self.eps_b, "sigma_eps_b": self.sigma_eps_b,
            "eps_ij": self.eps_ij, "sigma_eps_ij": self.sigma_eps_ij,
            "eps": self.eps, "sigma_eps": self.sigma_eps, "eps_bar": self.eps_bar,
        }


@dataclass(frozen=True, eq=False)
class WinStatistic:
    n_win: np.ndarray
    w: float
    w_expected: float
    eps_bar: float


@dataclass(frozen=True, eq=False)
class MemoryBound:
    p_left_max: np.ndarray
    losers: Tuple[Tuple[int, int, int, int], ...]
    bound: float
    n_at_max: int

    def to_dict(self) -> dict:
        return {
            "p_left_max": self.p_left_max,
            "losers": [list(c) for c in self.losers],
            "B": self.bound,
            "n_at_max": self.n_at_max,
        }


@dataclass(frozen=True, eq=False)
class SignificanceReport:
    n_win: np.ndarray
    w: float
    w_expected: float
    f_opt: np.ndarray
    sigma_w: float
    nu_bar: float
    delta_nu: float
    nu: float
    p_cond: float
    log10_p: float
    p: float
    p_win: np.ndarray
    bound: float = float("nan")
    p_mem: float = float("nan")
    nu_equivalent: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "N_win_ij": self.n_win, "W": self.w, "W_expected": self.w_expected,
            "f_opt_ij": self.f_opt, "sigma_W": self.sigma_w,
            "nu_bar": self.nu_bar, "delta_nu": self.delta_nu, "nu": self.nu,
            "p_cond": self.p_cond, "p": self.p, "log10_p": self.log10_p,
            "P_win_ij": self.p_win,
            "B": self.bound, "p_mem": self.p_mem, "nu_equivalent": self.nu_equivalent,
        }


@dataclass(frozen=True)
class NoSignalingLine:
    label: str
    p_first: float
    p_second: float
    z: float
    p_value: float

    def to_dict(self) -> dict:
        return {"condition": self.label, "p_first": self.p_first, "p_second": self.p_second,
                "z": self.z, "p_value": self.p_value}


@dataclass(frozen=True)
class NoSignalingReport:
    lines: List[NoSignalingLine]
    alpha: float

    @property
    def consistent(self) -> bool:
        return all(line.p_value > self.alpha for line in self.lines)

    def to_dict(self) -> dict:
        return {"tests": [line.to_dict() for line in self.lines], "alpha": self.alpha,
                "consistent": self.consistent}


@dataclass(frozen=True)
class NaiveIidEstimate:
    s_value: float
    sigma_s: float
    nu: float

    def to_dict(self) -> dict:
        return {"S": self.s_value, "sigma_S": self.sigma_s, "nu": self.nu}


@dataclass
class PlanArtifact:
    report_file_path: str
    report: dict = field(repr=False, default_factory=dict)


@dataclass
class SpectraArtifact:
    report_file_path: str
    reports: list = field(repr=False, default_factory=list)


@dataclass
class SimulationArtifact:
    timetag_file_path: str
    truth_file_path: str
    config_file_path: str
    events: int = 0


@dataclass
class AnalysisArtifact:
    report_file_path: str
    report: dict = field(repr=False, default_factory=dict)
    coincidences_file_path: Optional[str] = None


@dataclass
class TabulationArtifact:
    coincidences: CoincidenceTable
    singles: SinglesTable
    drift: DriftModel
    diagnostics: dict = field(repr=False, default_factory=dict)

import math
import sys
from dataclasses import dataclass

import numpy as np

from src.constants import SPECTRA_RELATIVE_ERROR_F
from src.exception import ConfigError


@dataclass(frozen=True, eq=False)
class SideRates:
    """
    Setting-reader rates of one side, indexed by setting port (0: port 1, 1: port 2).
    `f_12` is the probability that a photon destined for port 1 is routed to port 2,
    `f_21` the reverse.
    """
    r: np.ndarray
    sigma_r: np.ndarray
    n: np.ndarray
    sigma_n: np.ndarray
    f_12: float
    f_21: float
    sigma_f_rel: float = SPECTRA_RELATIVE_ERROR_F
    duration_r: float = float("nan")
    duration_n: float = float("nan")

    def __post_init__(self):
        for name in ("r", "sigma_r", "n", "sigma_n"):
            array = np.asarray(getattr(self, name), dtype=float)
            if array.shape != (2,):
                raise ConfigError(f"rate field {name} needs two entries", sys)
            if np.any(array < 0) or not np.all(np.isfinite(array)):
                raise ConfigError(f"rate field {name} must be finite and >= 0", sys)
            object.__setattr__(self, name, array)
        if np.any(self.n > self.r):
            raise ConfigError(f"noise rates {self.n} exceed total rates {self.r}", sys)
        if not (0 <= self.f_12 <= 1 and 0 <= self.f_21 <= 1):
            raise ConfigError("wrong-way fractions must lie in [0, 1]", sys)

    @classmethod
    def from_measurement(cls, r, n, duration_r: float, duration_n: float, f_12: float, f_21: float,
                         sigma_f_rel: float = SPECTRA_RELATIVE_ERROR_F) -> "SideRates":
        """Poisson errors sigma = sqrt(rate / duration) rounded up to the next Hz."""
        r = np.asarray(r, dtype=float)
        n = np.asarray(n, dtype=float)
        sigma_r = np.ceil(np.sqrt(r / duration_r))
        sigma_n = np.ceil(np.sqrt(n / duration_n))
        return cls(r, sigma_r, n, sigma_n, f_12, f_21, sigma_f_rel, duration_r, duration_n)

    @property
    def f_into(self) -> np.ndarray:
        """f_{i'->i} for each port i."""
        return np.array([self.f_21, self.f_12])

    @property
    def f_out(self) -> np.ndarray:
        """f_{i->i'} for each port i."""
        return np.array([self.f_12, self.f_21])

    def to_dict(self) -> dict:
        out = {
            "r": self.r, "sigma_r": self.sigma_r, "n": self.n, "sigma_n": self.sigma_n,
            "f_12": self.f_12, "f_21": self.f_21, "sigma_f_rel": self.sigma_f_rel,
        }
        if math.isfinite(self.duration_r):
            out["duration_r"] = self.duration_r
        if math.isfinite(self.duration_n):
            out["duration_n"] = self.duration_n
        return out


@dataclass(frozen=True, eq=False)
class RateBudget:
    alice: SideRates
    bob: SideRates

    def side(self, side: str) -> SideRates:
        return self.alice if side == "A" else self.bob

    def to_dict(self) -> dict:
        return {"A": self.alice.to_dict(), "B": self.bob.to_dict()}

    @classmethod
    def from_dict(cls, content: dict) -> "RateBudget":
        sides = {}
        for side in ("A", "B"):
            if side not in content:
                raise ConfigError(f"rate budget lacks side {side}", sys)
            entry = dict(content[side])
            if "sigma_r" in entry:
                sides[side] = SideRates(
                    entry["r"], entry["sigma_r"], entry["n"], entry["sigma_n"],
                    float(entry["f_12"]), float(entry["f_21"]),
                    float(entry.get("sigma_f_rel", SPECTRA_RELATIVE_ERROR_F)),
                    float(entry.get("duration_r", float("nan"))), float(entry.get("duration_n", float("nan"))),
                )
            else:
                sides[side] = SideRates.from_measurement(
                    entry["r"], entry["n"], float(entry["duration_r"]), float(entry["duration_n"]),
                    float(entry["f_12"]), float(entry["f_21"]),
                    float(entry.get("sigma_f_rel", SPECTRA_RELATIVE_ERROR_F)),
                )
        return cls(sides["A"], sides["B"])

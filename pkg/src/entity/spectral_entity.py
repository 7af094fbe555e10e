import sys
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.constants import SPECTRA_GRID_RANGE_NM, TIMETAG_PORT_COLOURS
from src.exception import SpectralCurveError


@dataclass(frozen=True, eq=False)
class SpectralCurve:
    """
    Wavelength-indexed response. `kind` is "probability" for transmissions,
    reflections and efficiencies (values in [0, 1]) or "flux" for photon number
    spectra (values >= 0, arbitrary normalisation).
    """
    wavelength: np.ndarray
    values: np.ndarray
    kind: str = "probability"
    name: str = ""

    def __post_init__(self):
        wavelength = np.asarray(self.wavelength, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "wavelength", wavelength)
        object.__setattr__(self, "values", values)
        if wavelength.ndim != 1 or wavelength.shape != values.shape:
            raise SpectralCurveError(f"curve {self.name!r}: wavelength/value shapes differ", sys)
        if wavelength.size == 0:
            raise SpectralCurveError(f"curve {self.name!r}: empty grid", sys)
        if np.any(np.diff(wavelength) <= 0):
            raise SpectralCurveError(f"curve {self.name!r}: wavelength grid not strictly ascending", sys)
        lo, hi = SPECTRA_GRID_RANGE_NM
        if wavelength[0] < lo - 1e-9 or wavelength[-1] > hi + 1e-9:
            raise SpectralCurveError(f"curve {self.name!r}: grid outside [{lo}, {hi}] nm", sys)
        if not np.all(np.isfinite(values)):
            raise SpectralCurveError(f"curve {self.name!r}: non-finite values", sys)
        if self.kind == "probability":
            if np.any(values < 0) or np.any(values > 1):
                raise SpectralCurveError(f"curve {self.name!r}: probability outside [0, 1]", sys)
        elif self.kind == "flux":
            if np.any(values < 0):
                raise SpectralCurveError(f"curve {self.name!r}: negative flux", sys)
        else:
            raise SpectralCurveError(f"curve {self.name!r}: unknown kind {self.kind!r}", sys)

    def with_values(self, values, kind: str = None, name: str = None) -> "SpectralCurve":
        return SpectralCurve(self.wavelength, values, kind or self.kind, self.name if name is None else name)

    @property
    def spacing(self) -> float:
        if self.wavelength.size < 2:
            return float("inf")
        return float(np.min(np.diff(self.wavelength)))


@dataclass(frozen=True, eq=False)
class SettingReaderModel:
    """Optics of one colour setting reader: dichroics, relay optics, detectors and sky."""
    shortpass_transmission: SpectralCurve
    shortpass_reflection: SpectralCurve
    longpass_transmission: SpectralCurve
    lens: SpectralCurve
    mirror: SpectralCurve
    detector: SpectralCurve
    atmosphere: SpectralCurve

    def curves(self) -> dict:
        return {
            "shortpass_transmission": self.shortpass_transmission,
            "shortpass_reflection": self.shortpass_reflection,
            "longpass_transmission": self.longpass_transmission,
            "lens": self.lens,
            "mirror": self.mirror,
            "detector": self.detector,
            "atmosphere": self.atmosphere,
        }


@dataclass(frozen=True)
class WrongWayReport:
    cutoff: float
    f_red_to_blue: float
    f_blue_to_red: float
    efficiency: float
    objective: float
    star: str = ""
    side: str = ""

    def port_fractions(self, side: str, port_colours: dict = None) -> Tuple[float, float]:
        """Returns (f_{1->2}, f_{2->1}) for the setting ports of `side`."""
        colours = (port_colours or TIMETAG_PORT_COLOURS)[side]
        if tuple(colours) == ("red", "blue"):
            return self.f_red_to_blue, self.f_blue_to_red
        return self.f_blue_to_red, self.f_red_to_blue

    def to_dict(self) -> dict:
        return {
            "star": self.star,
            "side": self.side,
            "cutoff_nm": self.cutoff,
            "f_red_to_blue": self.f_red_to_blue,
            "f_blue_to_red": self.f_blue_to_red,
            "efficiency": self.efficiency,
            "objective": self.objective,
        }

import math
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional, Tuple

import numpy as np

from src.constants import (
    GEOMETRY_INDEX_AIR,
    GEOMETRY_TAU_ATM_S,
    GEOMETRY_TAU_BUFFER_A_S,
    GEOMETRY_TAU_BUFFER_B_S,
    GEOMETRY_TAU_SET_S,
    PARALLAX_LY_MAS,
    CATALOGUE_MIN_DISTANCE_LY,
    CATALOGUE_MAX_FRACTIONAL_ERROR,
    CATALOGUE_MAGNITUDE_RANGE,
    CATALOGUE_MAGNITUDE_TOLERANCE,
    CATALOGUE_MIN_VISIBLE_S,
    CATALOGUE_SEARCH_SPAN_S,
    CATALOGUE_SEARCH_STEP_S,
    CATALOGUE_SCORE_WEIGHTS,
)
from src.exception import GeometryError, ConfigError, CatalogueError
from src.utils.main_utils import parse_utc


@dataclass(frozen=True)
class GeodeticSite:
    label: str
    latitude: float
    longitude: float
    elevation: float

    def __post_init__(self):
        values = (self.latitude, self.longitude, self.elevation)
        if not all(math.isfinite(float(v)) for v in values):
            raise GeometryError(f"site {self.label}: non-finite coordinates {values}", sys)
        if abs(self.latitude) > 90.0:
            raise GeometryError(f"site {self.label}: latitude {self.latitude} outside [-90, 90]", sys)
        lon = math.fmod(float(self.longitude), 360.0)
        if lon > 180.0:
            lon -= 360.0
        elif lon <= -180.0:
            lon += 360.0
        object.__setattr__(self, "longitude", lon)


@dataclass(frozen=True)
class CelestialTarget:
    catalogue_id: str
    right_ascension: float
    declination: float
    parallax: float
    parallax_error: float
    magnitude: float = float("nan")
    distance: float = field(init=False)
    distance_error: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.right_ascension) and math.isfinite(self.declination)):
            raise GeometryError(f"target {self.catalogue_id}: non-finite coordinates", sys)
        if not self.parallax > 0:
            raise GeometryError(f"target {self.catalogue_id}: nonpositive parallax", sys)
        distance = PARALLAX_LY_MAS / self.parallax
        object.__setattr__(self, "distance", distance)
        object.__setattr__(self, "distance_error", distance * self.parallax_error / self.parallax)


@dataclass(frozen=True)
class TimingBudget:
    tau_set: float = GEOMETRY_TAU_SET_S
    tau_buffer_A: float = GEOMETRY_TAU_BUFFER_A_S
    tau_buffer_B: float = GEOMETRY_TAU_BUFFER_B_S
    tau_atm: float = GEOMETRY_TAU_ATM_S
    index_air: float = GEOMETRY_INDEX_AIR
    cable_delay_A: float = 0.0
    cable_delay_B: float = 0.0

    def __post_init__(self):
        delays = (self.tau_set, self.tau_buffer_A, self.tau_buffer_B, self.tau_atm,
                  self.cable_delay_A, self.cable_delay_B)
        if any(d < 0 for d in delays):
            raise ConfigError(f"timing budget delays must be >= 0, got {delays}", sys)
        if self.index_air < 1:
            raise ConfigError(f"index_air must be >= 1, got {self.index_air}", sys)

    def buffer(self, side: str) -> float:
        return self.tau_buffer_A if side == "A" else self.tau_buffer_B

    def cable_delay(self, side: str) -> float:
        return self.cable_delay_A if side == "A" else self.cable_delay_B


@dataclass(frozen=True)
class SiteLayout:
    """
    ECEF positions (metres) of Alice's stellar receiver r_A, Bob's r_B, the source s
    and the entangled-photon stations m_A, m_B. Without explicit stations the
    co-location approximation m_k = r_k applies.
    """
    r_A: np.ndarray
    r_B: np.ndarray
    s: np.ndarray
    sites: Tuple[GeodeticSite, ...] = ()
    m_A: Optional[np.ndarray] = None
    m_B: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("r_A", "r_B", "s", "m_A", "m_B"):
            value = getattr(self, name)
            if value is None:
                value = getattr(self, "r_" + name[-1])
            value = np.asarray(value, dtype=float)
            if value.shape != (3,) or not np.all(np.isfinite(value)):
                raise GeometryError(f"layout position {name} must be a finite 3-vector", sys)
            object.__setattr__(self, name, value)

    @classmethod
    def from_sites(cls, alice: GeodeticSite, bob: GeodeticSite, source: GeodeticSite) -> "SiteLayout":
        from src.components.geometry import site_to_ecef
        return cls(site_to_ecef(alice), site_to_ecef(bob), site_to_ecef(source), (alice, bob, source))

    def receiver(self, side: str) -> np.ndarray:
        return self.r_A if side == "A" else self.r_B

    def station(self, side: str) -> np.ndarray:
        return self.m_A if side == "A" else self.m_B

    def site(self, side: str) -> Optional[GeodeticSite]:
        if not self.sites:
            return None
        return self.sites[0] if side == "A" else self.sites[1]


@dataclass(frozen=True)
class RunWindow:
    start: datetime
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "start", parse_utc(self.start))
        if self.duration < 0:
            raise ConfigError(f"run duration must be >= 0, got {self.duration}", sys)

    @property
    def end(self) -> datetime:
        return self.start + timedelta(seconds=self.duration)

    @property
    def middle(self) -> datetime:
        return self.start + timedelta(seconds=self.duration / 2)

    def offsets(self, step: float) -> np.ndarray:
        if step <= 0:
            raise ConfigError(f"sampling step must be > 0, got {step}", sys)
        count = int(math.floor(self.duration / step + 1e-9))
        return np.arange(count + 1, dtype=float) * step


@dataclass(frozen=True)
class CatalogueRecord:
    hip_id: str
    ra: float
    dec: float
    parallax: float
    parallax_error: float
    hp_magnitude: float
    line_number: int = 0

    def __post_init__(self):
        values = (self.ra, self.dec, self.parallax, self.parallax_error, self.hp_magnitude)
        if not all(math.isfinite(v) for v in values):
            raise CatalogueError(f"line {self.line_number}: non-finite field in record {self.hip_id}", sys)
        if self.parallax <= 0:
            raise CatalogueError(f"line {self.line_number}: nonpositive parallax for {self.hip_id}", sys)

    @property
    def distance(self) -> float:
        return PARALLAX_LY_MAS / self.parallax

    @property
    def fractional_distance_error(self) -> float:
        return self.parallax_error / self.parallax

    @property
    def sort_key(self) -> Tuple[int, str]:
        """hip ids order by their number, component suffixes (105259A) after the bare number."""
        digits = re.match(r"\d*", self.hip_id).group()
        return (int(digits) if digits else -1, self.hip_id[len(digits):])

    def to_target(self) -> CelestialTarget:
        return CelestialTarget(self.hip_id, self.ra, self.dec, self.parallax, self.parallax_error, self.hp_magnitude)


@dataclass(frozen=True)
class SelectionCriteria:
    azimuth_range: Tuple[float, float]
    altitude_range: Tuple[float, float]
    min_distance_ly: float = CATALOGUE_MIN_DISTANCE_LY
    max_fractional_distance_error: float = CATALOGUE_MAX_FRACTIONAL_ERROR
    magnitude_range: Tuple[float, float] = CATALOGUE_MAGNITUDE_RANGE
    magnitude_tolerance: float = CATALOGUE_MAGNITUDE_TOLERANCE
    min_visible: float = CATALOGUE_MIN_VISIBLE_S
    search_span: float = CATALOGUE_SEARCH_SPAN_S
    search_step: float = CATALOGUE_SEARCH_STEP_S
    weights: dict = field(default_factory=lambda: dict(CATALOGUE_SCORE_WEIGHTS))

    def __post_init__(self):
        for name in ("azimuth_range", "altitude_range", "magnitude_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"selection {name} is empty: [{lo}, {hi}]", sys)
        if self.min_distance_ly <= 0:
            raise ConfigError("selection min_distance_ly must be > 0", sys)
        unknown = set(self.weights) - set(CATALOGUE_SCORE_WEIGHTS)
        if unknown:
            raise ConfigError(f"unknown score weights {sorted(unknown)}", sys)

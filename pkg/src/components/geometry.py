import math
import sys
from datetime import datetime, timedelta
from typing import NamedTuple, Tuple, Union

import numpy as np

from src.constants import (
    GEOMETRY_ATM_SCALE_HEIGHT_M,
    GEOMETRY_VALIDITY_STEP_S,
    J2000_JD,
    SPEED_OF_LIGHT,
    SUPPORTED_YEARS,
    UNIX_EPOCH_JD,
    WGS84_A,
    WGS84_F,
)
from src.entity.artifact_entity import ValidityProfile
from src.entity.observation_entity import CelestialTarget, GeodeticSite, RunWindow, SiteLayout, TimingBudget
from src.exception import CausalMisalignmentError, GeometryError, MyException, WindowExhaustedError
from src.logger import logging
from src.utils.main_utils import parse_utc


class StarDirection(NamedTuple):
    vector: np.ndarray
    azimuth: float
    altitude: float


def site_to_ecef(site: GeodeticSite) -> np.ndarray:
    """WGS-84 geodetic coordinates to Earth-centred, Earth-fixed metres."""
    lat = math.radians(site.latitude)
    lon = math.radians(site.longitude)
    e2 = WGS84_F * (2.0 - WGS84_F)
    prime_vertical = WGS84_A / math.sqrt(1.0 - e2 * math.sin(lat) ** 2)
    x = (prime_vertical + site.elevation) * math.cos(lat) * math.cos(lon)
    y = (prime_vertical + site.elevation) * math.cos(lat) * math.sin(lon)
    z = (prime_vertical * (1.0 - e2) + site.elevation) * math.sin(lat)
    return np.array([x, y, z])


def posix_seconds(utc: Union[datetime, np.ndarray, float]) -> np.ndarray:
    """Seconds since the Unix epoch; naive datetimes are UTC, never host-local."""
    if isinstance(utc, datetime):
        utc = parse_utc(utc)
        if not SUPPORTED_YEARS[0] <= utc.year <= SUPPORTED_YEARS[1]:
            raise GeometryError(f"epoch {utc.isoformat()} outside supported era {SUPPORTED_YEARS}", sys)
        return np.asarray(utc.timestamp(), dtype=float)
    return np.asarray(utc, dtype=float)


def greenwich_sidereal_angle(posix_seconds) -> np.ndarray:
    """Mean sidereal angle of Greenwich in radians (low-order GMST polynomial)."""
    jd = np.asarray(posix_seconds, dtype=float) / 86400.0 + UNIX_EPOCH_JD
    days = jd - J2000_JD
    centuries = days / 36525.0
    gmst = (280.46061837 + 360.98564736629 * days
            + 0.000387933 * centuries ** 2 - centuries ** 3 / 38710000.0)
    return np.radians(np.mod(gmst, 360.0))


def _star_vectors(ra_deg: float, dec_deg: float, posix_seconds) -> np.ndarray:
    theta = greenwich_sidereal_angle(posix_seconds)
    ra = math.radians(ra_deg)
    dec = math.radians(dec_deg)
    hour = ra - theta
    return np.stack([math.cos(dec) * np.cos(hour), math.cos(dec) * np.sin(hour),
                     np.full(np.shape(hour), math.sin(dec))], axis=-1)


def horizontal_coordinates(vectors: np.ndarray, site: GeodeticSite) -> Tuple[np.ndarray, np.ndarray]:
    """Azimuth (clockwise from North) and altitude in degrees of ECEF unit vectors."""
    lat = math.radians(site.latitude)
    lon = math.radians(site.longitude)
    east = np.array([-math.sin(lon), math.cos(lon), 0.0])
    north = np.array([-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon), math.cos(lat)])
    up = np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])
    v = np.asarray(vectors, dtype=float)
    azimuth = np.degrees(np.arctan2(v @ east, v @ north)) % 360.0
    altitude = np.degrees(np.arcsin(np.clip(v @ up, -1.0, 1.0)))
    return azimuth, altitude


def star_direction(target: CelestialTarget, utc: datetime, site: GeodeticSite) -> StarDirection:
    """
    Topocentric direction toward a star. Precession, nutation, aberration and
    refraction are neglected, which bounds the pointing error to about half a degree.
    """
    if not (math.isfinite(target.right_ascension) and math.isfinite(target.declination)):
        raise GeometryError(f"target {target.catalogue_id}: non-finite coordinates", sys)
    vector = _star_vectors(target.right_ascension, target.declination, posix_seconds(utc))
    azimuth, altitude = horizontal_coordinates(vector, site)
    return StarDirection(vector, float(azimuth), float(altitude))


def star_track(target: CelestialTarget, posix_seconds: np.ndarray, site: GeodeticSite):
    """Vectorised star_direction over an array of epochs: (vectors, azimuth, altitude)."""
    vectors = _star_vectors(target.right_ascension, target.declination, posix_seconds)
    azimuth, altitude = horizontal_coordinates(vectors, site)
    return vectors, azimuth, altitude


def ecef_direction_to_radec(vector, utc: datetime) -> Tuple[float, float]:
    """Right ascension and declination (degrees) of the star seen along an ECEF direction."""
    v = np.asarray(vector, dtype=float)
    v = v / np.linalg.norm(v)
    theta = float(greenwich_sidereal_angle(posix_seconds(utc)))
    dec = math.degrees(math.asin(max(-1.0, min(1.0, v[2]))))
    ra = (math.degrees(math.atan2(v[1], v[0]) + theta)) % 360.0
    return ra, dec


def validity_series(layout: SiteLayout, side: str, vectors: np.ndarray, budget: TimingBudget) -> np.ndarray:
    """
    tau_valid for `side` given the star unit vectors (n, 3):
    n.(r_k - m_k')/c + n_air (|m_k - s| - |m_k' - s|)/c - eta_k |r_k - m_k|/c.
    """
    other = "B" if side == "A" else "A"
    baseline = layout.receiver(side) - layout.station(other)
    air_path = (np.linalg.norm(layout.station(side) - layout.s)
                - np.linalg.norm(layout.station(other) - layout.s))
    cable = np.linalg.norm(layout.receiver(side) - layout.station(side))
    return (np.asarray(vectors) @ baseline + budget.index_air * air_path
            - budget.cable_delay(side) * cable) / SPEED_OF_LIGHT


def tau_used(min_valid: float, budget: TimingBudget, side: str) -> float:
    overhead = budget.buffer(side) + budget.tau_set
    if not min_valid > overhead:
        raise WindowExhaustedError(
            f"side {side}: window exhausted, min tau_valid {min_valid:.4e} s <= buffer + set {overhead:.4e} s", sys)
    return min_valid - overhead


def validity_times(layout: SiteLayout, target_A: CelestialTarget, target_B: CelestialTarget,
                   budget: TimingBudget, run_window: RunWindow,
                   step: float = GEOMETRY_VALIDITY_STEP_S) -> Tuple[ValidityProfile, ValidityProfile]:
    offsets = run_window.offsets(step)
    start = posix_seconds(run_window.start)
    epochs = start + offsets
    instants = tuple(run_window.start + timedelta(seconds=float(o)) for o in offsets)
    profiles = []
    for side, target in (("A", target_A), ("B", target_B)):
        vectors = _star_vectors(target.right_ascension, target.declination, epochs)
        series = validity_series(layout, side, vectors, budget)
        if np.any(series <= 0):
            first = int(np.argmax(series <= 0))
            raise CausalMisalignmentError(
                f"side {side}: causal misalignment, tau_valid = {series[first]:.4e} s at {instants[first].isoformat()} "
                f"for star {target.catalogue_id}", sys)
        minimum = float(series.min())
        profiles.append(ValidityProfile(side, instants, series, minimum, tau_used(minimum, budget, side)))
    return profiles[0], profiles[1]


def atmospheric_delay(elevation_h: float, airmass_X: float, scale_height_z0: float = GEOMETRY_ATM_SCALE_HEIGHT_M,
                      n_minus_1: float = 2.7e-4) -> float:
    """Extra light-travel time through the atmosphere above a site: (z0 - h) X (n - 1) / c."""
    if airmass_X == 0:
        return 0.0
    if airmass_X < 1 or scale_height_z0 <= elevation_h:
        raise GeometryError(f"invalid atmosphere X={airmass_X}, z0={scale_height_z0}, h={elevation_h}", sys)
    return (scale_height_z0 - elevation_h) * airmass_X * n_minus_1 / SPEED_OF_LIGHT


def airmass(altitude: float) -> float:
    """Plane-parallel secant airmass."""
    if not 0.0 < altitude <= 90.0:
        raise GeometryError(f"airmass undefined for altitude {altitude} deg", sys)
    return 1.0 / math.sin(math.radians(altitude))


def timing_margin(budget: TimingBudget, min_altitude: float, elevation_h: float,
                  scale_height_z0: float = GEOMETRY_ATM_SCALE_HEIGHT_M) -> dict:
    """Atmospheric delay at the lowest pointing compared with each side's buffer."""
    delay = atmospheric_delay(elevation_h, airmass(min_altitude), scale_height_z0, budget.index_air - 1.0)
    return {
        side: {"atmospheric_delay_s": delay, "buffer_s": budget.buffer(side), "margin_ok": delay <= budget.buffer(side)}
        for side in ("A", "B")
    }


def angular_separation(target_1: CelestialTarget, target_2: CelestialTarget) -> float:
    def unit(t):
        ra, dec = math.radians(t.right_ascension), math.radians(t.declination)
        return np.array([math.cos(dec) * math.cos(ra), math.cos(dec) * math.sin(ra), math.sin(dec)])

    u, v = unit(target_1), unit(target_2)
    return math.degrees(math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v)))


def lookback_intersection(d_A: float, sigma_A: float, d_B: float, sigma_B: float, alpha: float) -> Tuple[float, float]:
    """
    Years since the past light cones of the two emission events intersect,
    with first-order error propagation of the distance errors.
    """
    if d_A <= 0 or d_B <= 0 or sigma_A < 0 or sigma_B < 0:
        raise GeometryError(f"invalid lookback inputs d=({d_A}, {d_B}) sigma=({sigma_A}, {sigma_B})", sys)
    cos_alpha = math.cos(math.radians(alpha))
    chord = math.sqrt(max(0.0, d_A ** 2 + d_B ** 2 - 2.0 * d_A * d_B * cos_alpha))
    t_ab = 0.5 * (d_A + d_B + chord)
    if chord > 0:
        dt_da = 0.5 * (1.0 + (d_A - d_B * cos_alpha) / chord)
        dt_db = 0.5 * (1.0 + (d_B - d_A * cos_alpha) / chord)
    else:
        dt_da = dt_db = 0.5
    return t_ab, math.sqrt((dt_da * sigma_A) ** 2 + (dt_db * sigma_B) ** 2)


def earth_lookback(distance: float, sigma: float = 0.0) -> Tuple[float, float]:
    """Time since a star's past light cone last crossed Earth's worldline: 2d."""
    return 2.0 * distance, 2.0 * sigma


class CausalAlignment:
    """
    Stage that evaluates the validity windows, pointing and lookback times for
    an assigned star pair.
    """

    def __init__(self, layout: SiteLayout, budget: TimingBudget, run_window: RunWindow,
                 step: float = GEOMETRY_VALIDITY_STEP_S):
        self.layout = layout
        self.budget = budget
        self.run_window = run_window
        self.step = step

    def initiate_causal_alignment(self, target_A: CelestialTarget, target_B: CelestialTarget) -> dict:
        """
        Method Name :   initiate_causal_alignment
        Description :   Computes validity profiles, tau_used, pointing, atmospheric margins and lookback times

        Output      :   Returns a report dictionary
        On Failure  :   Write an exception log and then raise an exception
        """
        logging.info("Entered initiate_causal_alignment method of CausalAlignment class")
        try:
            profile_A, profile_B = validity_times(self.layout, target_A, target_B, self.budget,
                                                  self.run_window, self.step)
            logging.info(f"min tau_valid A = {profile_A.min_valid:.6e} s, B = {profile_B.min_valid:.6e} s")

            pointing = {}
            altitudes = []
            for side, target in (("A", target_A), ("B", target_B)):
                site = self.layout.site(side)
                if site is None:
                    continue
                direction = star_direction(target, self.run_window.start, site)
                pointing[side] = {"star": target.catalogue_id, "azimuth_deg": direction.azimuth,
                                  "altitude_deg": direction.altitude}
                altitudes.append(direction.altitude)

            alpha = angular_separation(target_A, target_B)
            t_ab, sigma_t_ab = lookback_intersection(target_A.distance, target_A.distance_error,
                                                     target_B.distance, target_B.distance_error, alpha)
            report = {
                "run_start": self.run_window.start,
                "run_duration_s": self.run_window.duration,
                "validity": {"A": profile_A.to_dict(), "B": profile_B.to_dict()},
                "pointing": pointing,
                "angular_separation_deg": alpha,
                "lookback": {
                    "t_AB_yr": t_ab,
                    "sigma_t_AB_yr": sigma_t_ab,
                    "t_E_A_yr": earth_lookback(target_A.distance, target_A.distance_error)[0],
                    "t_E_B_yr": earth_lookback(target_B.distance, target_B.distance_error)[0],
                },
            }
            if altitudes and min(altitudes) > 0 and self.layout.sites:
                elevation = min(site.elevation for site in self.layout.sites)
                report["atmosphere"] = timing_margin(self.budget, min(altitudes), elevation)
            logging.info(f"Lookback intersection {t_ab:.1f} +/- {sigma_t_ab:.1f} yr")
            logging.info("Exited initiate_causal_alignment method of CausalAlignment class")
            return report
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

import math
import time
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from src.components.catalogue import parallax_to_distance
from src.components.geometry import (
    CausalAlignment,
    angular_separation,
    atmospheric_delay,
    earth_lookback,
    ecef_direction_to_radec,
    greenwich_sidereal_angle,
    lookback_intersection,
    posix_seconds,
    site_to_ecef,
    star_direction,
    tau_used,
    timing_margin,
    validity_series,
    validity_times,
)
from src.constants import SPEED_OF_LIGHT
from src.entity.config_entity import load_sites
from src.entity.observation_entity import CelestialTarget, GeodeticSite, RunWindow, SiteLayout, TimingBudget
from src.exception import CausalMisalignmentError, GeometryError, WindowExhaustedError
from conftest import data_path

RUN1_START = datetime(2016, 4, 21, 21, 23, tzinfo=timezone.utc)
RUN2_START = datetime(2016, 4, 22, 0, 49, tzinfo=timezone.utc)

HIP_56127 = CelestialTarget("HIP 56127", 172.5787, -3.0035, 5.40, 0.31, 4.8877)
HIP_105259A = CelestialTarget("HIP 105259A", 319.8154, 58.6235, 1.69, 0.53, 5.6430)
HIP_80620 = CelestialTarget("HIP 80620", 246.9311, -7.5976, 5.65, 0.39, 5.2899)
HIP_2876 = CelestialTarget("HIP 2876", 9.1139, 60.3262, 0.90, 0.34, 5.8676)


@pytest.fixture(scope="module")
def sites():
    return load_sites({"file": data_path("sites.yaml")})


@pytest.fixture(scope="module")
def layout(sites):
    return SiteLayout.from_sites(sites["A"], sites["B"], sites["S"])


def test_site_to_ecef_reference_points():
    np.testing.assert_allclose(site_to_ecef(GeodeticSite("o", 0.0, 0.0, 0.0)), [6378137.0, 0.0, 0.0], atol=1e-6)
    pole = site_to_ecef(GeodeticSite("p", 90.0, 0.0, 0.0))
    assert pole[2] == pytest.approx(6356752.3, abs=0.5)
    assert abs(pole[0]) < 1e-6


def test_site_longitude_is_normalised():
    assert GeodeticSite("w", 10.0, 190.0, 0.0).longitude == pytest.approx(-170.0)


def test_site_latitude_out_of_range():
    with pytest.raises(GeometryError):
        GeodeticSite("x", 91.0, 0.0, 0.0)


def test_alice_source_chord(sites):
    chord = np.linalg.norm(site_to_ecef(sites["A"]) - site_to_ecef(sites["S"]))
    assert chord == pytest.approx(557.0, abs=10.0)


def test_star_direction_run1_alice(sites):
    direction = star_direction(HIP_56127, RUN1_START, sites["A"])

    assert direction.azimuth == pytest.approx(199.0, abs=1.0)
    assert direction.altitude == pytest.approx(37.0, abs=1.0)
    assert np.linalg.norm(direction.vector) == pytest.approx(1.0)


def test_star_direction_run2_bob(sites):
    direction = star_direction(HIP_2876, RUN2_START, sites["B"])

    assert direction.azimuth == pytest.approx(25.0, abs=1.0)
    assert direction.altitude == pytest.approx(26.0, abs=1.0)


def test_star_direction_zenith(sites):
    site = sites["A"]
    ra = (math.degrees(float(greenwich_sidereal_angle(RUN1_START.timestamp()))) + site.longitude) % 360.0
    zenith = CelestialTarget("zenith", ra, site.latitude, 1.0, 0.0)

    assert star_direction(zenith, RUN1_START, site).altitude == pytest.approx(90.0, abs=0.5)


def test_star_direction_against_ephem(sites):
    ephem = pytest.importorskip("ephem")
    site = sites["A"]
    observer = ephem.Observer()
    observer.lat = str(site.latitude)
    observer.lon = str(site.longitude)
    observer.elevation = site.elevation
    observer.pressure = 0
    observer.date = RUN1_START.replace(tzinfo=None)
    body = ephem.FixedBody()
    body._ra = ephem.hours(math.radians(HIP_56127.right_ascension))
    body._dec = ephem.degrees(math.radians(HIP_56127.declination))
    body._epoch = ephem.J2000
    body.compute(observer)

    direction = star_direction(HIP_56127, RUN1_START, site)
    assert direction.azimuth == pytest.approx(math.degrees(body.az), abs=0.5)
    assert direction.altitude == pytest.approx(math.degrees(body.alt), abs=0.5)


def test_ecef_direction_round_trip(sites):
    direction = star_direction(HIP_105259A, RUN1_START, sites["B"])
    ra, dec = ecef_direction_to_radec(direction.vector, RUN1_START)

    assert ra == pytest.approx(HIP_105259A.right_ascension, abs=1e-6)
    assert dec == pytest.approx(HIP_105259A.declination, abs=1e-6)


def test_star_direction_outside_supported_era(sites):
    with pytest.raises(GeometryError):
        star_direction(HIP_56127, datetime(1950, 1, 1, tzinfo=timezone.utc), sites["A"])


@pytest.fixture
def vienna_local_time(monkeypatch):
    if not hasattr(time, "tzset"):
        pytest.skip("time.tzset is unavailable on this platform")
    monkeypatch.setenv("TZ", "Europe/Vienna")
    time.tzset()
    yield
    monkeypatch.undo()
    time.tzset()


def test_naive_datetimes_are_utc_under_local_timezone(vienna_local_time, sites):
    aware = star_direction(HIP_56127, RUN1_START, sites["A"])
    naive = star_direction(HIP_56127, RUN1_START.replace(tzinfo=None), sites["A"])

    assert naive.azimuth == pytest.approx(aware.azimuth, abs=1e-9)
    assert naive.altitude == pytest.approx(aware.altitude, abs=1e-9)
    assert float(posix_seconds(RUN1_START.replace(tzinfo=None))) == RUN1_START.timestamp()


def test_run_window_start_is_normalised_to_utc():
    naive = RunWindow(RUN1_START.replace(tzinfo=None), 179.0)
    shifted = RunWindow(datetime(2016, 4, 21, 23, 23, tzinfo=timezone(timedelta(hours=2))), 179.0)

    assert naive.start == RUN1_START
    assert naive.start.tzinfo == timezone.utc
    assert shifted.start.utcoffset() == timedelta(0)
    assert shifted.middle == naive.middle


def test_validity_times_run1(layout):
    window = RunWindow(RUN1_START, 179.0)
    profile_A, profile_B = validity_times(layout, HIP_56127, HIP_105259A, TimingBudget(), window, step=10.0)

    assert profile_A.min_valid == pytest.approx(2.55e-6, abs=0.05e-6)
    assert profile_B.min_valid == pytest.approx(6.93e-6, abs=0.05e-6)
    assert profile_A.tau_used == pytest.approx(profile_A.min_valid - 0.38e-6 - 0.17e-6)
    assert profile_B.tau_used == pytest.approx(profile_B.min_valid - 1.76e-6 - 0.17e-6)


def test_validity_times_misaligned_pair(layout):
    window = RunWindow(RUN1_START, 60.0)
    with pytest.raises(CausalMisalignmentError):
        validity_times(layout, HIP_105259A, HIP_56127, TimingBudget(), window, step=10.0)


def test_validity_times_run2(layout):
    window = RunWindow(RUN2_START, 179.0)
    profile_A, profile_B = validity_times(layout, HIP_80620, HIP_2876, TimingBudget(), window, step=10.0)

    assert profile_A.min_valid == pytest.approx(2.58e-6, abs=0.05e-6)
    assert profile_B.min_valid == pytest.approx(6.85e-6, abs=0.05e-6)


def test_validity_barely_changes_during_run1(layout):
    profile_A, profile_B = validity_times(layout, HIP_56127, HIP_105259A, TimingBudget(),
                                          RunWindow(RUN1_START, 179.0), step=1.0)

    assert profile_A.variation == pytest.approx(2.96e-9, rel=0.2)
    assert profile_B.variation == pytest.approx(17.26e-9, rel=0.2)
    assert profile_A.variation < 0.01 * profile_A.min_valid
    assert profile_B.variation < 0.01 * profile_B.min_valid


# Receivers on the x axis, 2 km apart; sources on the bisector plane x = 0.
AXIS_A = np.array([1000.0, 0.0, 0.0])
AXIS_B = np.array([-1000.0, 0.0, 0.0])


def test_collinear_star_gives_full_baseline():
    layout = SiteLayout(AXIS_A, AXIS_B, np.array([0.0, 500.0, 0.0]))
    along_baseline = np.array([[1.0, 0.0, 0.0]])

    tau = validity_series(layout, "A", along_baseline, TimingBudget())
    assert tau[0] == pytest.approx(2000.0 / SPEED_OF_LIGHT, rel=1e-12)


def test_balanced_source_position_does_not_matter():
    rng = np.random.default_rng(7)
    vectors = rng.normal(size=(50, 3))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)

    near = SiteLayout(AXIS_A, AXIS_B, np.array([0.0, 300.0, 0.0]))
    far = SiteLayout(AXIS_A, AXIS_B, np.array([0.0, -40.0, 2500.0]))
    for side in ("A", "B"):
        np.testing.assert_allclose(validity_series(near, side, vectors, TimingBudget()),
                                   validity_series(far, side, vectors, TimingBudget()), rtol=0, atol=1e-18)


def test_cable_term_vanishes_under_co_location():
    layout = SiteLayout(AXIS_A, AXIS_B, np.array([0.0, 300.0, 0.0]))
    vectors = np.array([[0.6, 0.8, 0.0], [0.0, 0.0, 1.0]])

    np.testing.assert_array_equal(validity_series(layout, "A", vectors, TimingBudget()),
                                  validity_series(layout, "A", vectors, TimingBudget(cable_delay_A=1.5)))


def test_tau_used_window_exhausted():
    with pytest.raises(WindowExhaustedError):
        tau_used(0.4e-6, TimingBudget(), "A")
    assert tau_used(2.0e-6, TimingBudget(), "A") == pytest.approx(1.45e-6)


def test_atmospheric_delay():
    assert atmospheric_delay(200.0, 2.5, 8000.0, 2.7e-4) == pytest.approx(17.6e-9, abs=0.1e-9)
    assert atmospheric_delay(0.0, 1.0) == pytest.approx(7.2e-9, abs=0.05e-9)
    assert atmospheric_delay(200.0, 0.0) == 0.0
    with pytest.raises(GeometryError):
        atmospheric_delay(200.0, 0.5)


def test_timing_margin_fits_buffers():
    margin = timing_margin(TimingBudget(), min_altitude=30.0, elevation_h=200.0)

    assert margin["A"]["margin_ok"]
    assert margin["B"]["margin_ok"]
    assert margin["A"]["atmospheric_delay_s"] < 20e-9


def test_angular_separation_run_pairs():
    assert angular_separation(HIP_56127, HIP_105259A) == pytest.approx(119.0, abs=1.0)
    assert angular_separation(HIP_80620, HIP_2876) == pytest.approx(112.0, abs=1.0)
    assert angular_separation(HIP_56127, HIP_56127) == pytest.approx(0.0, abs=1e-6)


def test_lookback_intersection_run1():
    t_ab, sigma = lookback_intersection(604.0, 35.0, 1930.0, 605.0, 119.0)

    assert t_ab == pytest.approx(2409.0, abs=1.0)
    assert sigma == pytest.approx(598.0, abs=2.0)


def test_lookback_intersection_run2_from_parallaxes():
    alpha = angular_separation(HIP_80620, HIP_2876)
    t_ab, sigma = lookback_intersection(HIP_80620.distance, HIP_80620.distance_error,
                                        HIP_2876.distance, HIP_2876.distance_error, alpha)

    assert t_ab == pytest.approx(4040.0, abs=1.5)
    assert sigma == pytest.approx(1363.0, abs=2.0)


def test_lookback_intersection_same_direction():
    t_ab, _ = lookback_intersection(100.0, 1.0, 300.0, 1.0, 0.0)
    assert t_ab == pytest.approx(300.0)


def test_lookback_intersection_equal_distances():
    assert lookback_intersection(500.0, 0.0, 500.0, 0.0, 180.0)[0] == pytest.approx(1000.0)
    assert lookback_intersection(500.0, 0.0, 500.0, 0.0, 0.0)[0] == pytest.approx(500.0)


@pytest.mark.parametrize("d_A,d_B", [(604.0, 1930.0), (577.0, 3624.0), (800.0, 800.0), (50.0, 10.0)])
def test_lookback_intersection_grows_with_separation(d_A, d_B):
    alphas = np.linspace(0.0, 180.0, 181)
    t_ab = np.array([lookback_intersection(d_A, 1.0, d_B, 1.0, a)[0] for a in alphas])

    assert np.all(np.diff(t_ab) >= -1e-9)
    assert np.all(t_ab >= max(d_A, d_B) - 1e-9)
    if d_A != d_B:
        assert t_ab[0] == pytest.approx(max(d_A, d_B))
    else:
        assert t_ab[1] > max(d_A, d_B)


@pytest.mark.parametrize("d_A,s_A,d_B,s_B,alpha", [(604.0, 35.0, 1930.0, 605.0, 119.0),
                                                  (577.0, 40.0, 3624.0, 1370.0, 112.0)])
def test_lookback_error_matches_finite_differences(d_A, s_A, d_B, s_B, alpha):
    _, sigma = lookback_intersection(d_A, s_A, d_B, s_B, alpha)
    h = 1e-3

    def t(a, b):
        return lookback_intersection(a, 0.0, b, 0.0, alpha)[0]

    dt_da = (t(d_A + h, d_B) - t(d_A - h, d_B)) / (2 * h)
    dt_db = (t(d_A, d_B + h) - t(d_A, d_B - h)) / (2 * h)
    assert sigma == pytest.approx(math.hypot(dt_da * s_A, dt_db * s_B), rel=0.01)


def test_lookback_intersection_rejects_bad_input():
    with pytest.raises(GeometryError):
        lookback_intersection(-1.0, 1.0, 300.0, 1.0, 10.0)


def test_earth_lookback():
    assert earth_lookback(604.0, 35.0) == (1208.0, 70.0)


def test_parallax_to_distance():
    distance, error = parallax_to_distance(5.40, 0.31)

    assert distance == pytest.approx(604.0, abs=0.5)
    assert error == pytest.approx(35.0, abs=0.5)
    assert parallax_to_distance(0.90, 0.34)[0] == pytest.approx(3624.0, abs=1.0)


def test_causal_alignment_report(layout):
    report = CausalAlignment(layout, TimingBudget(), RunWindow(RUN1_START, 179.0), step=30.0) \
        .initiate_causal_alignment(HIP_56127, HIP_105259A)

    assert report["validity"]["A"]["min_tau_valid_s"] == pytest.approx(2.55e-6, abs=0.05e-6)
    assert report["pointing"]["A"]["azimuth_deg"] == pytest.approx(199.0, abs=1.0)
    assert report["angular_separation_deg"] == pytest.approx(119.0, abs=1.0)

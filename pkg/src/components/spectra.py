import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import constants
from scipy.integrate import cumulative_trapezoid, trapezoid

from src.constants import SPECTRA_TRANSMISSION_FLOOR, TIMETAG_PORT_COLOURS
from src.entity.spectral_entity import SettingReaderModel, SpectralCurve, WrongWayReport
from src.exception import MyException, NoPhotonsInBandError, SpectralCurveError
from src.logger import logging


def resample_to_common_grid(curves: Sequence[SpectralCurve], spacing: Optional[float] = None) -> List[SpectralCurve]:
    """
    Linear interpolation of every curve onto a uniform grid spanning the
    overlapping support, at the finest native spacing unless `spacing` is given.
    """
    lo = max(float(c.wavelength[0]) for c in curves)
    hi = min(float(c.wavelength[-1]) for c in curves)
    if not lo < hi:
        raise SpectralCurveError(f"curves do not overlap: [{lo}, {hi}] nm", sys)
    step = spacing or min(c.spacing for c in curves)
    count = int(round((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, count)
    return [SpectralCurve(grid, np.interp(grid, c.wavelength, c.values), c.kind, c.name) for c in curves]


def _on_grid(curve: SpectralCurve, grid: np.ndarray) -> np.ndarray:
    if curve.wavelength.shape == grid.shape and np.allclose(curve.wavelength, grid):
        return curve.values
    if grid[0] < curve.wavelength[0] - 1e-9 or grid[-1] > curve.wavelength[-1] + 1e-9:
        raise SpectralCurveError(f"curve {curve.name!r} does not cover the grid", sys)
    return np.interp(grid, curve.wavelength, curve.values)


def blackbody(temperature: float, grid) -> SpectralCurve:
    """Planck photon number flux per unit wavelength, 2c / lambda^4 / (exp(hc / lambda k T) - 1)."""
    if not temperature > 0:
        raise SpectralCurveError(f"temperature must be > 0 K, got {temperature}", sys)
    wavelength_nm = np.asarray(grid, dtype=float)
    wavelength = wavelength_nm * 1e-9
    exponent = constants.h * constants.c / (wavelength * constants.k * temperature)
    flux = 2.0 * constants.c / wavelength ** 4 / np.expm1(exponent)
    return SpectralCurve(wavelength_nm, flux, "flux", f"blackbody_{temperature:g}K")


def apply_airmass(zenith_transmission: SpectralCurve, X: float) -> SpectralCurve:
    """Slant transmission exp(-X tau) with optical depth tau = -ln T_zenith."""
    if X < 1:
        raise SpectralCurveError(f"airmass must be >= 1, got {X}", sys)
    values = zenith_transmission.values
    if np.any(values <= 0):
        logging.warning(f"zero zenith transmission in {zenith_transmission.name!r}; floored at "
                        f"{SPECTRA_TRANSMISSION_FLOOR}")
        values = np.maximum(values, SPECTRA_TRANSMISSION_FLOOR)
    return zenith_transmission.with_values(np.exp(X * np.log(values)), name=f"atmosphere_X{X:g}")


def compose_input_spectrum(star: SpectralCurve, model: SettingReaderModel, X: float) -> SpectralCurve:
    """
    Photon spectrum reaching the setting-reader detectors: star through the
    slant atmosphere, two lenses, one mirror and the detector efficiency.
    """
    star_grid, atmosphere, lens, mirror, detector = resample_to_common_grid(
        [star, model.atmosphere, model.lens, model.mirror, model.detector])
    grid = star_grid.wavelength
    for curve in (atmosphere, lens, mirror, detector):
        if curve.wavelength.shape != grid.shape:
            raise SpectralCurveError("grid mismatch after resampling", sys)
    slant = apply_airmass(atmosphere, X)
    n_in = star_grid.values * slant.values * lens.values ** 2 * mirror.values * detector.values
    return SpectralCurve(grid, n_in, "flux", f"input_{star.name}")


def reader_arms(model: SettingReaderModel, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(rho_blue, rho_red) on `grid`: blue = shortpass transmission, red = shortpass reflection x longpass."""
    blue = _on_grid(model.shortpass_transmission, grid)
    red = _on_grid(model.shortpass_reflection, grid) * _on_grid(model.longpass_transmission, grid)
    return blue, red


def _band_integrals(n_in: SpectralCurve, model: SettingReaderModel):
    grid = n_in.wavelength
    blue, red = reader_arms(model, grid)
    cum_blue = cumulative_trapezoid(blue * n_in.values, grid, initial=0.0)
    cum_red = cumulative_trapezoid(red * n_in.values, grid, initial=0.0)
    return grid, cum_blue, cum_red


def _fractions(cum_blue, cum_red, blue_below, red_below):
    n_rb = cum_blue[-1] - blue_below
    n_rr = cum_red[-1] - red_below
    n_br = red_below
    n_bb = blue_below
    if n_rb + n_rr <= 0 or n_br + n_bb <= 0:
        raise NoPhotonsInBandError("no photons in band on one side of the cutoff", sys)
    return n_rb / (n_rb + n_rr), n_br / (n_br + n_bb)


def wrong_way_fractions(n_in: SpectralCurve, model: SettingReaderModel, cutoff: float) -> Tuple[float, float]:
    """
    (f_{r->b}, f_{b->r}) at cutoff wavelength `cutoff` in nm: the fraction of
    photons redder than the cutoff that land in the blue arm, and vice versa.
    """
    grid, cum_blue, cum_red = _band_integrals(n_in, model)
    if not grid[0] <= cutoff <= grid[-1]:
        raise SpectralCurveError(f"cutoff {cutoff} nm outside grid [{grid[0]}, {grid[-1]}]", sys)
    blue_below = float(np.interp(cutoff, grid, cum_blue))
    red_below = float(np.interp(cutoff, grid, cum_red))
    return _fractions(cum_blue, cum_red, blue_below, red_below)


def objective_curve(n_in: SpectralCurve, model: SettingReaderModel) -> Tuple[np.ndarray, np.ndarray]:
    """Overall wrong-way fraction (N_rb + N_br) / N_total for every grid cutoff."""
    grid, cum_blue, cum_red = _band_integrals(n_in, model)
    total = cum_blue[-1] + cum_red[-1]
    if total <= 0:
        raise NoPhotonsInBandError("no photons reach either arm", sys)
    wrong = (cum_blue[-1] - cum_blue) + cum_red
    return grid, wrong / total


def optimal_cutoff(n_in: SpectralCurve, model: SettingReaderModel,
                   aperture: Optional[SpectralCurve] = None) -> WrongWayReport:
    """
    Grid cutoff minimising the overall wrong-way fraction; ties go to the
    shortest wavelength. Efficiency is detected settings over photons at the
    aperture (`aperture`, the unattenuated star spectrum) or over N_in when absent.
    """
    grid, cum_blue, cum_red = _band_integrals(n_in, model)
    total = cum_blue[-1] + cum_red[-1]
    if total <= 0 or grid.size < 3:
        raise NoPhotonsInBandError("no photons reach either arm", sys)
    objective = ((cum_blue[-1] - cum_blue) + cum_red) / total
    # both bands must be non-empty, so the end points are excluded
    best = 1 + int(np.argmin(objective[1:-1]))
    f_rb, f_br = _fractions(cum_blue, cum_red, cum_blue[best], cum_red[best])
    reference = aperture if aperture is not None else n_in
    photons = trapezoid(_on_grid(reference, grid), grid)
    efficiency = float(total / photons) if photons > 0 else 0.0
    return WrongWayReport(float(grid[best]), float(f_rb), float(f_br), efficiency, float(objective[best]))


class SettingReaderCharacterization:
    """Stage computing the wrong-way report of each configured star."""

    def __init__(self, model: SettingReaderModel, port_colours: dict = None):
        self.model = model
        self.port_colours = port_colours or TIMETAG_PORT_COLOURS

    def characterize_star(self, star_id: str, temperature: float, X: float, side: str = "") -> WrongWayReport:
        grid = self.model.shortpass_transmission.wavelength
        star = blackbody(temperature, grid)
        n_in = compose_input_spectrum(star, self.model, X)
        report = optimal_cutoff(n_in, self.model, aperture=star)
        return WrongWayReport(report.cutoff, report.f_red_to_blue, report.f_blue_to_red, report.efficiency,
                              report.objective, star_id, side)

    def initiate_characterization(self, stars: Sequence[dict]) -> List[dict]:
        """
        Method Name :   initiate_characterization
        Description :   Computes cutoff, wrong-way fractions and efficiency per star

        Output      :   Returns one report dictionary per star
        On Failure  :   Write an exception log and then raise an exception
        """
        logging.info("Entered initiate_characterization method of SettingReaderCharacterization class")
        try:
            reports = []
            for star in stars:
                report = self.characterize_star(str(star["id"]), float(star["temperature_K"]),
                                                float(star["airmass"]), star.get("side", ""))
                entry = report.to_dict()
                entry["temperature_K"] = float(star["temperature_K"])
                entry["airmass"] = float(star["airmass"])
                if report.side:
                    f_12, f_21 = report.port_fractions(report.side, self.port_colours)
                    entry["f_12"], entry["f_21"] = f_12, f_21
                logging.info(f"Star {report.star}: cutoff {report.cutoff:.1f} nm, f_rb {report.f_red_to_blue:.5f}, "
                             f"f_br {report.f_blue_to_red:.5f}, efficiency {report.efficiency:.4f}")
                reports.append(entry)
            logging.info("Exited initiate_characterization method of SettingReaderCharacterization class")
            return reports
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

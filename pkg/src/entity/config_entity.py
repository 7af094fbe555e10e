import os
import sys
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Tuple

from from_root import from_root

from src.constants import *
from src.entity.observation_entity import (
    CelestialTarget,
    GeodeticSite,
    RunWindow,
    SelectionCriteria,
    SiteLayout,
    TimingBudget,
)
from src.entity.rates_entity import RateBudget
from src.exception import ConfigError
from src.utils.main_utils import parse_utc, read_yaml_file

TIMESTAMP: str = datetime.now().strftime("%m_%d_%Y_%H_%M_%S")


def resolve_path(path: Optional[str]) -> Optional[str]:
    """Absolute paths pass through; relative ones resolve against the working directory, then the project root."""
    if path is None or os.path.isabs(path) or os.path.exists(path):
        return path
    rooted = os.path.join(from_root(), path)
    return rooted if os.path.exists(rooted) else path


@dataclass
class PipelineConfig:
    pipeline_name: str = PIPELINE_NAME
    artifact_dir: str = os.path.join(ARTIFACT_DIR, TIMESTAMP)
    timestamp: str = TIMESTAMP


@dataclass
class PlanningConfig:
    planning_dir: str
    report_file_path: str

    @classmethod
    def under(cls, artifact_dir: str) -> "PlanningConfig":
        planning_dir = os.path.join(artifact_dir, GEOMETRY_DIR_NAME)
        return cls(planning_dir, os.path.join(planning_dir, "plan.json"))


@dataclass
class SpectraConfig:
    directory: str = SPECTRA_FIXTURE_DIR
    files: Dict[str, str] = field(default_factory=lambda: dict(SPECTRA_FIXTURE_FILES))
    stars: List[dict] = field(default_factory=list)
    port_colours: Dict[str, Tuple[str, str]] = field(default_factory=lambda: dict(TIMETAG_PORT_COLOURS))
    spectra_dir: str = ""
    report_file_path: str = ""

    def placed_under(self, artifact_dir: str) -> "SpectraConfig":
        self.spectra_dir = os.path.join(artifact_dir, SPECTRA_DIR_NAME)
        self.report_file_path = os.path.join(self.spectra_dir, "spectra.json")
        return self


@dataclass
class DriftConfig:
    enabled: bool = True
    block_s: float = TIMETAG_DRIFT_BLOCK_S
    bin_ps: int = TIMETAG_DRIFT_BIN_PS
    range_ps: int = TIMETAG_DRIFT_RANGE_PS
    min_prominence: float = TIMETAG_DRIFT_MIN_PROMINENCE


@dataclass
class AnalysisConfig:
    coincidences_file: Optional[str] = None
    singles_file: Optional[str] = None
    timetag_file: Optional[str] = None
    timetag_format: str = "binary"
    window_ps: int = TIMETAG_COINCIDENCE_WINDOW_PS
    tau_used_ps: Dict[str, int] = field(default_factory=lambda: dict(TIMETAG_TAU_USED_PS))
    tau_cut_ps: Dict[str, int] = field(default_factory=lambda: {"A": TIMETAG_TAU_CUT_PS, "B": TIMETAG_TAU_CUT_PS})
    drift: DriftConfig = field(default_factory=DriftConfig)
    port_colours: Dict[str, Tuple[str, str]] = field(default_factory=lambda: dict(TIMETAG_PORT_COLOURS))
    efficiency_ratio: Dict[str, float] = field(default_factory=lambda: {"A": 1.0, "B": 1.0})
    alpha: float = BELLSTATS_NO_SIGNALING_ALPHA
    rates_from_streams: bool = False
    memory_n_max: int = MEMORY_N_MAX
    monte_carlo_samples: int = 0
    monte_carlo_seed: int = SIMULATION_SEED
    analysis_dir: str = ""
    report_file_path: str = ""
    coincidences_out_path: str = ""

    def __post_init__(self):
        if self.window_ps <= 0:
            raise ConfigError(f"analysis.window_ps must be > 0, got {self.window_ps}", sys)
        if self.timetag_format not in ("binary", "text"):
            raise ConfigError(f"analysis.timetag_format must be 'binary' or 'text'", sys)
        if self.memory_n_max < 1:
            raise ConfigError("memory.n_max must be >= 1", sys)

    def placed_under(self, artifact_dir: str) -> "AnalysisConfig":
        self.analysis_dir = os.path.join(artifact_dir, BELLSTATS_DIR_NAME)
        self.report_file_path = os.path.join(self.analysis_dir, BELLSTATS_REPORT_FILE_NAME)
        self.coincidences_out_path = os.path.join(self.analysis_dir, "coincidences.json")
        return self


@dataclass
class SimulationConfig:
    """
    Parameters of a synthetic run. Rates are per setting port (index 0: port 1);
    `setting_rates_hz` are stellar photons whose colour belongs to that port,
    `wrong_way` holds (f_12, f_21) per side.
    """
    seed: int = SIMULATION_SEED
    duration_s: float = SIMULATION_DURATION_S
    pair_rate_hz: float = 1e5
    visibility: float = 1.0
    angles_deg: Dict[str, Dict[str, float]] = field(default_factory=lambda: {
        side: dict(angles) for side, angles in SIMULATION_ANGLES_DEG.items()})
    setting_rates_hz: Dict[str, Tuple[float, float]] = field(default_factory=lambda: {
        "A": (5e5, 5e5), "B": (5e5, 5e5)})
    noise_rates_hz: Dict[str, Tuple[float, float]] = field(default_factory=lambda: {"A": (0.0, 0.0), "B": (0.0, 0.0)})
    wrong_way: Dict[str, Tuple[float, float]] = field(default_factory=lambda: {"A": (0.0, 0.0), "B": (0.0, 0.0)})
    tau_used_ps: Dict[str, int] = field(default_factory=lambda: dict(TIMETAG_TAU_USED_PS))
    setting_dead_time_ps: int = 0
    drift_offset_ps: float = 0.0
    drift_rate_ps_per_s: float = 0.0
    jitter_ps: float = 0.0
    detection_efficiency: float = 1.0
    efficiency_ratio: Dict[str, float] = field(default_factory=lambda: {"A": 1.0, "B": 1.0})
    dark_rate_hz: Dict[str, float] = field(default_factory=lambda: {"A": 0.0, "B": 0.0})
    port_colours: Dict[str, Tuple[str, str]] = field(default_factory=lambda: dict(TIMETAG_PORT_COLOURS))
    start_offset_ps: int = 1_000_000
    from_rates: bool = False
    simulation_dir: str = ""
    timetag_file_path: str = ""
    truth_file_path: str = ""
    config_file_path: str = ""

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError(f"simulation.duration_s must be > 0, got {self.duration_s}", sys)
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError(f"simulation.visibility must lie in [0, 1], got {self.visibility}", sys)
        if not 0.0 <= self.detection_efficiency <= 1.0:
            raise ConfigError("simulation.detection_efficiency must lie in [0, 1]", sys)
        rates = [self.pair_rate_hz, self.setting_dead_time_ps, self.jitter_ps]
        for side in TIMETAG_SITES:
            rates.extend(self.setting_rates_hz[side])
            rates.extend(self.noise_rates_hz[side])
            rates.append(self.dark_rate_hz[side])
            if not all(0.0 <= f <= 1.0 for f in self.wrong_way[side]):
                raise ConfigError(f"simulation.wrong_way for side {side} must lie in [0, 1]", sys)
            if self.efficiency_ratio[side] <= 0:
                raise ConfigError("simulation.efficiency_ratio must be > 0", sys)
            for colour in ("red", "blue"):
                if colour not in self.angles_deg.get(side, {}):
                    raise ConfigError(f"simulation.angles_deg lacks {side}.{colour}", sys)
        if any(r < 0 for r in rates):
            raise ConfigError("simulation rates, dead time and jitter must be >= 0", sys)

    def placed_under(self, artifact_dir: str) -> "SimulationConfig":
        self.simulation_dir = os.path.join(artifact_dir, SIMULATION_DIR_NAME)
        self.timetag_file_path = os.path.join(self.simulation_dir, TIMETAG_FILE_NAME)
        self.truth_file_path = os.path.join(self.simulation_dir, TIMETAG_TRUTH_FILE_NAME)
        self.config_file_path = os.path.join(self.simulation_dir, "simulation_config.json")
        return self

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "duration_s": self.duration_s, "pair_rate_hz": self.pair_rate_hz,
            "visibility": self.visibility, "angles_deg": self.angles_deg,
            "setting_rates_hz": self.setting_rates_hz, "noise_rates_hz": self.noise_rates_hz,
            "wrong_way": self.wrong_way, "tau_used_ps": self.tau_used_ps,
            "setting_dead_time_ps": self.setting_dead_time_ps, "drift_offset_ps": self.drift_offset_ps,
            "drift_rate_ps_per_s": self.drift_rate_ps_per_s, "jitter_ps": self.jitter_ps,
            "detection_efficiency": self.detection_efficiency, "efficiency_ratio": self.efficiency_ratio,
            "dark_rate_hz": self.dark_rate_hz, "port_colours": self.port_colours,
            "start_offset_ps": self.start_offset_ps, "from_rates": self.from_rates,
        }


def _pairs(mapping: dict, name: str) -> Dict[str, Tuple]:
    out = {}
    for side in TIMETAG_SITES:
        if side not in mapping:
            raise ConfigError(f"{name} lacks side {side}", sys)
        out[side] = tuple(mapping[side])
    return out


def _site(entry: dict, label: str) -> GeodeticSite:
    try:
        return GeodeticSite(entry.get("label", label), float(entry["lat_deg"]), float(entry["lon_deg"]),
                            float(entry.get("elev_m", 0.0)))
    except KeyError as e:
        raise ConfigError(f"site {label} lacks {e}", sys) from e


def load_sites(content: dict) -> Dict[str, GeodeticSite]:
    """Sites from an inline mapping {A, B, S} or from a YAML file named under `file`."""
    if "file" in content:
        content = read_yaml_file(resolve_path(content["file"]))
    if isinstance(content, list):
        content = {entry.get("label"): entry for entry in content}
    sites = {}
    for label in ("A", "B", "S"):
        if label not in content:
            raise ConfigError(f"sites lack entry {label}", sys)
        sites[label] = _site(content[label], label)
    return sites


def _target(entry: dict, side: str) -> CelestialTarget:
    try:
        return CelestialTarget(str(entry["id"]), float(entry["ra_deg"]), float(entry["dec_deg"]),
                               float(entry["parallax_mas"]), float(entry.get("parallax_error_mas", 0.0)),
                               float(entry.get("hp_mag", float("nan"))))
    except KeyError as e:
        raise ConfigError(f"star for side {side} lacks {e}", sys) from e


def _criteria(entry: dict) -> SelectionCriteria:
    keys = {
        "azimuth_range_deg": "azimuth_range", "altitude_range_deg": "altitude_range",
        "min_distance_ly": "min_distance_ly", "max_fractional_distance_error": "max_fractional_distance_error",
        "magnitude_range": "magnitude_range", "magnitude_tolerance": "magnitude_tolerance",
        "min_visible_s": "min_visible", "search_span_s": "search_span", "search_step_s": "search_step",
        "weights": "weights",
    }
    kwargs = {keys[k]: (tuple(v) if isinstance(v, list) else v) for k, v in entry.items()}
    if "azimuth_range" not in kwargs or "altitude_range" not in kwargs:
        raise ConfigError("selection criteria need azimuth_range_deg and altitude_range_deg", sys)
    if "weights" in kwargs:
        kwargs["weights"] = {**CATALOGUE_SCORE_WEIGHTS, **kwargs["weights"]}
    return SelectionCriteria(**kwargs)


@dataclass
class RunConfig:
    """Validated run configuration assembled from one JSON document."""
    label: str
    sites: Dict[str, GeodeticSite]
    layout: SiteLayout
    run_window: RunWindow
    budget: TimingBudget
    validity_step: float
    stars: Dict[str, CelestialTarget]
    star_details: Dict[str, dict]
    selection: Dict[str, SelectionCriteria]
    catalogue_path: str
    catalogue_lenient: bool
    spectra: SpectraConfig
    rates: Optional[RateBudget]
    analysis: AnalysisConfig
    simulation: SimulationConfig
    artifact_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, content: dict) -> "RunConfig":
        try:
            sites = load_sites(content.get("sites", {"file": os.path.join(DATA_DIR, "sites.yaml")}))
            layout = SiteLayout.from_sites(sites["A"], sites["B"], sites["S"])

            run = content.get("run", {})
            if "start" not in run:
                raise ConfigError("run.start is required", sys)
            run_window = RunWindow(parse_utc(run["start"]), float(run.get("duration_s", 179.0)))

            timing = dict(content.get("timing", {}))
            validity_step = float(timing.pop("validity_step_s", GEOMETRY_VALIDITY_STEP_S))
            budget = TimingBudget(**{k[:-2] if k.endswith("_s") else k: float(v) for k, v in timing.items()})

            star_entries = content.get("stars", {})
            stars = {side: _target(entry, side) for side, entry in star_entries.items()}
            selection = {side: _criteria(entry) for side, entry in content.get("selection", {}).items()}

            catalogue = content.get("catalogue", {})
            spectra_entry = content.get("spectra", {})
            port_colours = {side: tuple(v) for side, v in
                            spectra_entry.get("port_colours", TIMETAG_PORT_COLOURS).items()}
            spectra = SpectraConfig(
                directory=resolve_path(spectra_entry.get("directory", SPECTRA_FIXTURE_DIR)),
                files={**SPECTRA_FIXTURE_FILES, **spectra_entry.get("files", {})},
                stars=[{"id": entry["id"], "temperature_K": entry["temperature_K"],
                        "airmass": entry.get("airmass", 1.0), "side": side}
                       for side, entry in star_entries.items() if "temperature_K" in entry],
                port_colours=port_colours,
            )

            rates_entry = content.get("rates")
            if isinstance(rates_entry, dict) and "file" in rates_entry:
                rates_entry = read_yaml_file(resolve_path(rates_entry["file"]))
            rates = RateBudget.from_dict(rates_entry) if rates_entry else None

            analysis = cls._analysis(content.get("analysis", {}), content.get("memory", {}), port_colours)
            simulation = cls._simulation(content.get("simulation", {}), port_colours, analysis)

            output = content.get("output", {})
            artifact_dir = output.get("dir") or PipelineConfig().artifact_dir
            analysis.placed_under(artifact_dir)
            simulation.placed_under(artifact_dir)
            spectra.placed_under(artifact_dir)

            return cls(
                label=str(run.get("label", "run")),
                sites=sites, layout=layout, run_window=run_window, budget=budget, validity_step=validity_step,
                stars=stars, star_details=dict(star_entries), selection=selection,
                catalogue_path=resolve_path(catalogue.get("path", CATALOGUE_FILE_PATH)),
                catalogue_lenient=bool(catalogue.get("lenient", False)),
                spectra=spectra, rates=rates, analysis=analysis, simulation=simulation,
                artifact_dir=artifact_dir, raw=content,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration value: {e}", sys) from e

    @staticmethod
    def _analysis(entry: dict, memory: dict, port_colours: dict) -> AnalysisConfig:
        drift = DriftConfig(**entry.get("drift", {}))
        defaults = AnalysisConfig()
        return AnalysisConfig(
            coincidences_file=resolve_path(entry.get("coincidences")),
            singles_file=resolve_path(entry.get("singles")),
            timetag_file=resolve_path(entry.get("timetags")),
            timetag_format=entry.get("timetag_format", "binary"),
            window_ps=int(entry.get("window_ps", TIMETAG_COINCIDENCE_WINDOW_PS)),
            tau_used_ps={**defaults.tau_used_ps, **entry.get("tau_used_ps", {})},
            tau_cut_ps={**defaults.tau_cut_ps, **entry.get("tau_cut_ps", {})},
            drift=drift,
            port_colours=port_colours,
            efficiency_ratio={**defaults.efficiency_ratio, **entry.get("efficiency_ratio", {})},
            alpha=float(entry.get("alpha", BELLSTATS_NO_SIGNALING_ALPHA)),
            rates_from_streams=bool(entry.get("rates_from_streams", False)),
            memory_n_max=int(memory.get("n_max", MEMORY_N_MAX)),
            monte_carlo_samples=int(memory.get("monte_carlo_samples", 0)),
            monte_carlo_seed=int(memory.get("seed", SIMULATION_SEED)),
        )

    @staticmethod
    def _simulation(entry: dict, port_colours: dict, analysis: AnalysisConfig) -> SimulationConfig:
        kwargs = dict(entry)
        for name in ("setting_rates_hz", "noise_rates_hz", "wrong_way"):
            if name in kwargs:
                kwargs[name] = _pairs(kwargs[name], f"simulation.{name}")
        defaults = SimulationConfig()
        for name in ("efficiency_ratio", "dark_rate_hz"):
            kwargs[name] = {**getattr(defaults, name), **kwargs.get(name, {})}
        if "angles_deg" in kwargs:
            kwargs["angles_deg"] = {side: {**defaults.angles_deg[side], **kwargs["angles_deg"].get(side, {})}
                                    for side in TIMETAG_SITES}
        kwargs.setdefault("tau_used_ps", dict(analysis.tau_used_ps))
        kwargs["port_colours"] = port_colours
        try:
            return SimulationConfig(**kwargs)
        except TypeError as e:
            raise ConfigError(f"unknown simulation parameter: {e}", sys) from e

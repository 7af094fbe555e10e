import dataclasses
import sys
from typing import Optional

import numpy as np

from src.components.bellstats import BellAnalysis
from src.components.simulate import ExperimentSimulator, from_rate_budget
from src.components.timetag import CoincidenceIdentification
from src.data_access.count_data import CountData
from src.data_access.timetag_data import parse_timetags
from src.entity.artifact_entity import AnalysisArtifact, SimulationArtifact, TabulationArtifact
from src.entity.config_entity import RunConfig
from src.entity.rates_entity import RateBudget
from src.exception import ConfigError, MyException
from src.logger import logging
from src.utils.main_utils import read_yaml_file, write_json_report

HEADLINE_KEYS = (
    ("N", ("N",)),
    ("p_a1", ("settings", "p_a", 0)),
    ("p_b1", ("settings", "p_b", 0)),
    ("chi2", ("chi2", "chi2")),
    ("chi2_p_value", ("chi2", "p_value")),
    ("C", ("chsh", "C")),
    ("S", ("chsh", "S")),
    ("epsilon", ("predictability", "eps")),
    ("eps_bar", ("predictability", "eps_bar")),
    ("W", ("significance", "W")),
    ("sigma_W", ("significance", "sigma_W")),
    ("nu_bar", ("significance", "nu_bar")),
    ("delta_nu", ("significance", "delta_nu")),
    ("nu", ("significance", "nu")),
    ("p", ("memory", "p")),
    ("B", ("memory", "B")),
    ("p_mem", ("memory", "p_mem")),
    ("nu_equivalent", ("memory", "nu_equivalent")),
    ("naive_nu", ("naive_iid", "nu")),
)


class SimulationPipeline:
    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        self.simulation_config = run_config.simulation

    def start_simulation(self) -> SimulationArtifact:
        """
        This method of SimulationPipeline class is responsible for starting the experiment simulator
        """
        logging.info("Entered the start_simulation method of SimulationPipeline class")
        config = self.simulation_config
        if config.from_rates:
            if self.run_config.rates is None:
                raise ConfigError("simulation.from_rates needs a rate budget", sys)
            config = from_rate_budget(self.run_config.rates, config)
        artifact = ExperimentSimulator(config).initiate_simulation()
        logging.info("Exited the start_simulation method of SimulationPipeline class")
        return artifact

    def run_pipeline(self) -> SimulationArtifact:
        try:
            return self.start_simulation()
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e


class AnalysisPipeline:
    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        self.analysis_config = run_config.analysis

    def start_tabulation(self) -> TabulationArtifact:
        """
        This method of AnalysisPipeline class is responsible for producing the coincidence and singles tables,
        from raw time tags when configured, otherwise from pre-tabulated count files
        """
        logging.info("Entered the start_tabulation method of AnalysisPipeline class")
        config = self.analysis_config
        if config.timetag_file:
            streams = parse_timetags(config.timetag_file, config.timetag_format)
            tabulation = CoincidenceIdentification(config).initiate_coincidence_identification(streams)
            CountData.write_coincidences(config.coincidences_out_path, tabulation.coincidences)
        elif config.coincidences_file:
            data = CountData()
            table = data.read_coincidences(config.coincidences_file)
            singles = data.read_singles(config.singles_file) if config.singles_file else None
            tabulation = TabulationArtifact(table, singles, None, {})
        else:
            raise ConfigError("analysis needs either analysis.timetags or analysis.coincidences", sys)
        logging.info("Exited the start_tabulation method of AnalysisPipeline class")
        return tabulation

    def start_rate_budget(self, tabulation: TabulationArtifact) -> RateBudget:
        """
        This method of AnalysisPipeline class is responsible for the rate budget; with rates_from_streams the
        total rates r come from the setting streams while noise rates and wrong-way fractions stay configured
        """
        budget = self.run_config.rates
        if budget is None:
            raise ConfigError("analysis needs a rate budget (rates section)", sys)
        if not (self.analysis_config.rates_from_streams and tabulation.diagnostics):
            return budget
        sides = {}
        for side in ("A", "B"):
            measured = tabulation.diagnostics[side]
            span = measured["settings_span_s"]
            if span <= 0:
                raise ConfigError(f"side {side}: setting stream too short to measure rates", sys)
            r = np.asarray(measured["setting_rates_hz"], dtype=float)
            sides[side] = dataclasses.replace(budget.side(side), r=r, sigma_r=np.sqrt(r / span),
                                              duration_r=span)
            logging.info(f"Measured setting rates at {side}: {r.tolist()} Hz over {span:.3f} s")
        return RateBudget(sides["A"], sides["B"])

    def start_bell_analysis(self, tabulation: TabulationArtifact, budget: RateBudget) -> dict:
        """
        This method of AnalysisPipeline class is responsible for starting the statistics component
        """
        logging.info("Entered the start_bell_analysis method of AnalysisPipeline class")
        config = self.analysis_config
        stage = BellAnalysis(config.efficiency_ratio, config.alpha, config.memory_n_max,
                             config.monte_carlo_samples, config.monte_carlo_seed)
        report = stage.initiate_bell_analysis(tabulation.coincidences, budget, tabulation.singles)
        logging.info("Exited the start_bell_analysis method of AnalysisPipeline class")
        return report

    def run_pipeline(self) -> AnalysisArtifact:
        """
        This method of AnalysisPipeline class is responsible for running the complete analysis pipeline
        """
        try:
            tabulation = self.start_tabulation()
            budget = self.start_rate_budget(tabulation)
            report = {"run": self.run_config.label, **self.start_bell_analysis(tabulation, budget)}
            report["coincidences"] = tabulation.coincidences.to_dict()
            if tabulation.singles is not None:
                report["singles"] = tabulation.singles.to_dict()
            report["rates"] = budget.to_dict()
            if tabulation.diagnostics:
                report["tabulation"] = tabulation.diagnostics
            write_json_report(self.analysis_config.report_file_path, report)
            out = self.analysis_config.coincidences_out_path if self.analysis_config.timetag_file else None
            return AnalysisArtifact(self.analysis_config.report_file_path, report, out)
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e


def _lookup(report: dict, path: tuple):
    node = report
    for key in path:
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            return None
    return node


class ReportPipeline:
    """Summary and figure data of an analysis report, read from disk or produced by a fresh analysis."""

    def __init__(self, report_file_path: Optional[str] = None, run_config: Optional[RunConfig] = None):
        if report_file_path is None and run_config is None:
            raise ConfigError("report needs an analysis report file or a run configuration", sys)
        self.report_file_path = report_file_path
        self.run_config = run_config

    def start_report_loading(self) -> dict:
        if self.report_file_path:
            return read_yaml_file(self.report_file_path)
        return AnalysisPipeline(self.run_config).run_pipeline().report

    def run_pipeline(self) -> dict:
        try:
            report = self.start_report_loading()
            summary = {name: _lookup(report, path) for name, path in HEADLINE_KEYS}
            summary = {name: value for name, value in summary.items() if value is not None}
            out = {"run": report.get("run", ""), "summary": summary, "figures": report.get("figures", {})}
            if "no_signaling" in report:
                out["no_signaling"] = report["no_signaling"]
            return out
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

import sys
from typing import Optional

from src.components.catalogue import SourceSelection
from src.components.geometry import (
    CausalAlignment,
    angular_separation,
    lookback_intersection,
    tau_used,
)
from src.components.spectra import SettingReaderCharacterization
from src.data_access.spectral_data import SpectralData
from src.entity.artifact_entity import PairRanking, PlanArtifact, RankedPair, SpectraArtifact
from src.entity.config_entity import PlanningConfig, RunConfig
from src.exception import CatalogueError, ConfigError, MyException
from src.logger import logging
from src.utils.main_utils import write_json_report


class PlanningPipeline:
    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        self.planning_config = PlanningConfig.under(run_config.artifact_dir)

    def _pair_entry(self, pair: RankedPair) -> dict:
        budget = self.run_config.budget
        target_A = pair.candidate_A.record.to_target()
        target_B = pair.candidate_B.record.to_target()
        alpha = angular_separation(target_A, target_B)
        t_ab, sigma = lookback_intersection(target_A.distance, target_A.distance_error,
                                            target_B.distance, target_B.distance_error, alpha)
        return {
            **pair.to_dict(),
            "tau_used_A_s": tau_used(pair.min_tau_valid_A, budget, "A"),
            "tau_used_B_s": tau_used(pair.min_tau_valid_B, budget, "B"),
            "angular_separation_deg": alpha,
            "t_AB_yr": t_ab,
            "sigma_t_AB_yr": sigma,
        }

    def start_source_selection(self) -> Optional[PairRanking]:
        """
        This method of PlanningPipeline class is responsible for starting the source selection component
        """
        config = self.run_config
        if not {"A", "B"} <= set(config.selection):
            logging.info("No selection criteria configured, skipping source selection")
            return None
        logging.info("Entered the start_source_selection method of PlanningPipeline class")
        selection = SourceSelection(config.catalogue_path, config.selection["A"], config.selection["B"],
                                    config.layout, config.budget, config.run_window, config.catalogue_lenient)
        ranking = selection.initiate_source_selection()
        logging.info("Exited the start_source_selection method of PlanningPipeline class")
        return ranking

    def start_causal_alignment(self) -> Optional[dict]:
        """
        This method of PlanningPipeline class is responsible for evaluating the assigned star pair
        """
        config = self.run_config
        if not {"A", "B"} <= set(config.stars):
            return None
        logging.info("Entered the start_causal_alignment method of PlanningPipeline class")
        alignment = CausalAlignment(config.layout, config.budget, config.run_window, config.validity_step)
        report = alignment.initiate_causal_alignment(config.stars["A"], config.stars["B"])
        logging.info("Exited the start_causal_alignment method of PlanningPipeline class")
        return report

    def run_pipeline(self) -> PlanArtifact:
        """
        This method of PlanningPipeline class is responsible for running the complete planning pipeline
        """
        try:
            report = {"run": self.run_config.label}
            ranking = self.start_source_selection()
            if ranking is not None:
                if not ranking.pairs:
                    flags = [f"{p.key[0]}/{p.key[1]}: {p.flag}" for p in ranking.excluded]
                    raise CatalogueError("no candidate pairs for this run window", sys, flags)
                report["pairs"] = [self._pair_entry(pair) for pair in ranking.pairs]
                report["excluded"] = [pair.to_dict() for pair in ranking.excluded]
            assigned = self.start_causal_alignment()
            if assigned is not None:
                report["assigned"] = assigned
            write_json_report(self.planning_config.report_file_path, report)
            return PlanArtifact(self.planning_config.report_file_path, report)
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e


class SpectraPipeline:
    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        self.spectra_config = run_config.spectra

    def start_characterization(self) -> list:
        """
        This method of SpectraPipeline class is responsible for starting the setting reader characterization
        """
        logging.info("Entered the start_characterization method of SpectraPipeline class")
        model = SpectralData(self.spectra_config.directory, self.spectra_config.files).load_setting_reader_model()
        stage = SettingReaderCharacterization(model, self.spectra_config.port_colours)
        reports = stage.initiate_characterization(self.spectra_config.stars)
        logging.info("Exited the start_characterization method of SpectraPipeline class")
        return reports

    def run_pipeline(self) -> SpectraArtifact:
        try:
            if not self.spectra_config.stars:
                raise ConfigError("no stars with temperature_K configured for the spectral model", sys)
            reports = self.start_characterization()
            write_json_report(self.spectra_config.report_file_path, {"run": self.run_config.label, "stars": reports})
            return SpectraArtifact(self.spectra_config.report_file_path, reports)
        except MyException:
            raise
        except Exception as e:
            raise MyException(e, sys) from e

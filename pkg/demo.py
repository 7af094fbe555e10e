# Offline walkthrough of both published runs: plan, spectra and analysis from
# the shipped fixtures, with the headline numbers printed at the end.

from src.cli import load_run_config
from src.pipline.analysis_pipeline import AnalysisPipeline, ReportPipeline
from src.pipline.planning_pipeline import PlanningPipeline, SpectraPipeline

for config_path in ("config/run1.json", "config/run2.json"):
    run_config = load_run_config(config_path)
    plan = PlanningPipeline(run_config).run_pipeline()
    SpectraPipeline(run_config).run_pipeline()
    analysis = AnalysisPipeline(run_config).run_pipeline()
    summary = ReportPipeline(analysis.report_file_path).run_pipeline()["summary"]

    lookback = plan.report["assigned"]["lookback"]
    print(f"{run_config.label}: t_AB = {lookback['t_AB_yr']:.0f} +/- {lookback['sigma_t_AB_yr']:.0f} yr")
    print(f"  N = {summary['N']:.0f}, S = {summary['S']:.3f}, C = {summary['C']:.4f}, eps = {summary['epsilon']:.4f}")
    print(f"  nu = {summary['nu']:.2f}, p = {summary['p']:.3e}, B = {summary['B']:.4f}, p_mem = {summary['p_mem']:.3e}")

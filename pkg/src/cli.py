"""
Command-line front end: plan, spectra, simulate, analyze, report.

Every command reads one run configuration (JSON), applies --set overrides,
validates it against config/schema.yaml and prints its result on stdout.
Exit status: 0 success, 2 bad input, 3 analysis failure.
"""
import argparse
import logging as std_logging
import os
import sys
from typing import List, Optional

from src.components.config_validation import ConfigValidation
from src.entity.config_entity import RunConfig, resolve_path
from src.exception import ConfigError, MyException
from src.logger import logging, set_console_level
from src.pipline.analysis_pipeline import AnalysisPipeline, ReportPipeline, SimulationPipeline
from src.pipline.planning_pipeline import PlanningPipeline, SpectraPipeline
from src.utils.main_utils import apply_overrides, dumps_report, read_yaml_file, report_to_frame


def load_run_config(config_path: str, overrides: Optional[List[str]] = None,
                    output_dir: Optional[str] = None, extra: Optional[dict] = None) -> RunConfig:
    path = resolve_path(config_path)
    if not path or not os.path.isfile(path):
        raise ConfigError(f"configuration file not found: {config_path}", sys)
    content = read_yaml_file(path)
    if not isinstance(content, dict):
        raise ConfigError(f"configuration {config_path} must hold a mapping", sys)
    for key, value in (extra or {}).items():
        section, name = key.split(".")
        content.setdefault(section, {})[name] = value
    apply_overrides(content, overrides)
    if output_dir:
        content.setdefault("output", {})["dir"] = output_dir
    return ConfigValidation().initiate_config_validation(content)


def _emit(result: dict, as_table: bool) -> None:
    if as_table:
        print(report_to_frame(result).to_string(index=False))
    else:
        print(dumps_report(result))


def cmd_plan(args) -> dict:
    run_config = load_run_config(args.config, args.set, args.output_dir)
    return PlanningPipeline(run_config).run_pipeline().report


def cmd_spectra(args) -> dict:
    run_config = load_run_config(args.config, args.set, args.output_dir)
    artifact = SpectraPipeline(run_config).run_pipeline()
    return {"report_file_path": artifact.report_file_path, "stars": artifact.reports}


def cmd_simulate(args) -> dict:
    run_config = load_run_config(args.config, args.set, args.output_dir)
    artifact = SimulationPipeline(run_config).run_pipeline()
    return {"timetags": artifact.timetag_file_path, "truth": artifact.truth_file_path,
            "config": artifact.config_file_path, "events": artifact.events}


def _analysis_inputs(args) -> dict:
    extra = {}
    if args.timetags:
        extra["analysis.timetags"] = os.path.abspath(args.timetags)
    if args.format:
        extra["analysis.timetag_format"] = args.format
    if args.coincidences:
        extra["analysis.coincidences"] = os.path.abspath(args.coincidences)
    if args.singles:
        extra["analysis.singles"] = os.path.abspath(args.singles)
    return extra


def cmd_analyze(args) -> dict:
    run_config = load_run_config(args.config, args.set, args.output_dir, _analysis_inputs(args))
    return AnalysisPipeline(run_config).run_pipeline().report


def cmd_report(args) -> dict:
    if args.report:
        path = resolve_path(args.report)
        if not os.path.isfile(path):
            raise ConfigError(f"analysis report not found: {args.report}", sys)
        return ReportPipeline(report_file_path=path).run_pipeline()
    if not args.config:
        raise ConfigError("report needs a run configuration or --report", sys)
    run_config = load_run_config(args.config, args.set, args.output_dir, _analysis_inputs(args))
    return ReportPipeline(run_config=run_config).run_pipeline()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosmic-bell", description="Cosmic Bell test planning and analysis")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration value by dotted key")
    common.add_argument("--output-dir", help="artifact directory (default artifact/<timestamp>)")
    common.add_argument("--table", action="store_true", help="print a flat text table instead of JSON")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors to stderr")

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("--timetags", help="time-tag file to analyze")
    inputs.add_argument("--format", choices=("binary", "text"), help="time-tag file format")
    inputs.add_argument("--coincidences", help="pre-tabulated coincidence table (JSON)")
    inputs.add_argument("--singles", help="pre-tabulated singles table (JSON)")

    commands = parser.add_subparsers(dest="command", required=True)
    for name, handler, helptext in (("plan", cmd_plan, "rank star pairs and evaluate causal alignment"),
                                    ("spectra", cmd_spectra, "model setting-reader wrong-way fractions"),
                                    ("simulate", cmd_simulate, "generate a synthetic time-tag run")):
        command = commands.add_parser(name, parents=[common], help=helptext)
        command.add_argument("config", help="run configuration (JSON)")
        command.set_defaults(handler=handler)

    analyze = commands.add_parser("analyze", parents=[common, inputs], help="compute the significance report")
    analyze.add_argument("config", help="run configuration (JSON)")
    analyze.set_defaults(handler=cmd_analyze)

    report = commands.add_parser("report", parents=[common, inputs], help="summarise an analysis report")
    report.add_argument("config", nargs="?", help="run configuration (JSON) to analyze afresh")
    report.add_argument("--report", help="existing analysis report (JSON)")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        set_console_level(std_logging.WARNING)
    try:
        result = args.handler(args)
    except MyException as e:
        print(f"error: {e.reason}", file=sys.stderr)
        logging.error(e.error_message)
        return e.exit_code
    _emit(result, args.table)
    logging.info(f"Command {args.command} finished")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Configuration, orchestration and report output for the ``fde-lab`` command."""

from fdelab.cli_report.cli import main
from fdelab.cli_report.config import ExperimentConfig, dump_config, load_config, parse_config
from fdelab.cli_report.report import write_report

__all__ = ["ExperimentConfig", "dump_config", "load_config", "main", "parse_config", "write_report"]

"""Experiment harness: configs, seed ensembles, statistics and the CLI."""

from .config import ConfigError, ExperimentConfig, SweepSpec, load, loads
from .runner import build_problem, configured_problem, initial_control, optimize, run
from .stats import (EnsembleSummary, RobustnessTable, emit_plot_data, read_summary, robustness_scan,
                    summarize, summarize_files)

__all__ = ["ConfigError", "ExperimentConfig", "SweepSpec", "load", "loads", "build_problem",
           "configured_problem", "initial_control", "optimize", "run", "EnsembleSummary",
           "RobustnessTable", "emit_plot_data", "read_summary", "robustness_scan", "summarize",
           "summarize_files"]

"""Experiment harness: configs, reference solutions, runs, rate fits and plot data."""
from .analysis import BoundReport, RateFit, check_theorem_bounds, fit_rate
from .config import ConfigError, ExperimentConfig, build_problem, load_config, parse_config
from .experiment import (
    ExperimentResult,
    load_traces,
    prepare_problem,
    problem_from_manifest,
    read_manifest,
    run_experiment,
    verify_manifest,
)
from .plotdata import emit_plot_data, read_plot_data, read_summary
from .reference import ReferenceError, compute_reference, with_computed_reference

__all__ = [
    "BoundReport",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "RateFit",
    "ReferenceError",
    "build_problem",
    "check_theorem_bounds",
    "compute_reference",
    "emit_plot_data",
    "fit_rate",
    "load_config",
    "load_traces",
    "parse_config",
    "prepare_problem",
    "problem_from_manifest",
    "read_manifest",
    "read_plot_data",
    "read_summary",
    "run_experiment",
    "verify_manifest",
    "with_computed_reference",
]

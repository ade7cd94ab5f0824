"""Config-driven experiments, sweeps, reports and the command line."""

from .checks import run_checks
from .config import ExperimentConfig, apply_overrides, load_config, parse_config_text
from .experiment import fit_loglog_slope, run_certify, run_experiment, run_sweep
from .report import emit_report

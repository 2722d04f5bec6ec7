__all__ = [
    "ExperimentConfig", "parse_config", "read_ini",
    "ExperimentSummary", "TimingRow", "run_experiment", "run_timing_study", "sweep_k", "sweep_warmup", "read_metrics", "write_metrics", "comparison_table",
    "main",
]

from .config import ExperimentConfig, parse_config, read_ini
from .experiment import ExperimentSummary, TimingRow, run_experiment, run_timing_study, sweep_k, sweep_warmup, read_metrics, write_metrics, comparison_table
from .cli import main

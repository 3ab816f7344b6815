"""Benchmark orchestration: config, grid runner, reports, sweeps."""
from .config import BenchConfig, ConfigError, DatasetConfig, derive_seed, load_config, parse_config
from .report import BenchmarkReport, ReportRow, model_impact_summary, summary_csv
from .runner import run_benchmark, sample_instances
from .sweep import sweep_csv, sweep_hyperparameter

__all__ = ["BenchConfig", "BenchmarkReport", "ConfigError", "DatasetConfig", "ReportRow", "derive_seed",
           "load_config", "model_impact_summary", "parse_config", "run_benchmark", "sample_instances",
           "summary_csv", "sweep_csv", "sweep_hyperparameter"]

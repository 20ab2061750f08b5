"""Experiment driver: configs, training runs, sweeps, timing, diagnostics."""

from .config import PRESETS, RunConfig, SweepConfig, build_config, format_config, parse_config_text
from .runner import RunResult, error_rate, run_train
from .sweep import histogram, run_sweep, sample_log_uniform, sample_trials
from .tools import diagnose, export_checkpoint, run_diagnose, run_timing, time_epochs

"""Run orchestration: configuration, training, checkpoints, reports, CLI."""

from .checkpoint import load_weights, read_manifest, save_checkpoint
from .config import NetConfig, OptimizerConfig, RunConfig, config_from_dict, config_to_dict, load_config
from .report import emit_report, render_table
from .runner import build_amortizer, evaluate_npe, make_posterior_sampler, parameter_counts, run_training

__all__ = [
    "RunConfig", "NetConfig", "OptimizerConfig",
    "load_config", "config_from_dict", "config_to_dict",
    "save_checkpoint", "load_weights", "read_manifest",
    "run_training", "build_amortizer", "evaluate_npe",
    "make_posterior_sampler", "parameter_counts",
    "emit_report", "render_table",
]

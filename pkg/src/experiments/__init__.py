"""
Experiment harness for the gd_experiments.py command script.

- config: TOML configuration, per-command defaults, validation
- manifest: JSON run manifests and timing logs
- runner: seeds, worker pool, Experiment base class
- plots: SVG line plot and heatmap
- path_experiment, grid_experiment, bounds_experiment,
  rademacher_experiment, verification: one class per command
"""

from .bounds_experiment import BoundsExperiment, schedule
from .config import ConfigError, ExperimentConfig, command_defaults, config_from_dict, resolve_config
from .grid_experiment import GridExperiment, early_stop_diagnostics, equal_product_spreads
from .manifest import SCHEMA_VERSION, RunManifest
from .path_experiment import PathExperiment, path_diagnostics
from .rademacher_experiment import RademacherExperiment
from .runner import ordered_map, repetition_seeds
from .verification import CheckResult, VerificationSuite

EXPERIMENTS = {
    "path-experiment": PathExperiment,
    "grid-experiment": GridExperiment,
    "bounds": BoundsExperiment,
    "rademacher": RademacherExperiment,
    "verify": VerificationSuite,
}

__all__ = [
    'BoundsExperiment',
    'CheckResult',
    'ConfigError',
    'EXPERIMENTS',
    'ExperimentConfig',
    'GridExperiment',
    'PathExperiment',
    'RademacherExperiment',
    'RunManifest',
    'SCHEMA_VERSION',
    'VerificationSuite',
    'command_defaults',
    'config_from_dict',
    'early_stop_diagnostics',
    'equal_product_spreads',
    'ordered_map',
    'path_diagnostics',
    'repetition_seeds',
    'resolve_config',
    'schedule',
]

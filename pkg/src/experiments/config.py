"""
Experiment configuration.

One TOML file holds the experiment parameters. Top-level keys apply to every
command; a table named after a command (e.g. [grid-experiment]) overrides
them for that command. Command-line flags override both.

Defaults are desk scale; `--full-scale` restores the full-size synthetic
experiment (n_train = 10^4, 100 repetitions, every T from 1 to 1000).
"""

import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..losses import LossKind

OUTPUT_DIR_ENV = "GDREG_OUTPUT_DIR"
COMMANDS = ("path-experiment", "grid-experiment", "bounds", "rademacher", "verify")
ORACLE_MODES = ("auto", "analytic_squared", "monte_carlo")
RADEMACHER_METHODS = ("both", "exhaustive", "monte_carlo")


class ConfigError(ValueError):
    """Invalid configuration value; `field` names the offending key."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field '{field_name}': {message}")


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "results")


def default_T_grid(T_max: int = 1000, count: int = 30) -> List[int]:
    """About `count` log-spaced stopping times in [1, T_max], always containing 1, 100, 200, 500."""
    grid = set(int(t) for t in np.unique(np.round(np.logspace(0, np.log10(T_max), count - 4))))
    grid.update(t for t in (1, 100, 200, 500, T_max) if t <= T_max)
    return sorted(grid)


@dataclass
class ExperimentConfig:
    """
    Resolved parameters of one command.

    Attributes:
        loss: loss kind name
        d: dimension of the synthetic model
        noise_sd: label noise standard deviation
        labels: 'regression' or 'sign' (None picks by loss kind)
        n_train: training sample size
        n_test: test sample size (None means n_train // 3)
        gammas: step size grid
        Ts: stopping time grid
        repetitions: independent repetitions per cell
        delta: confidence parameter
        seed: root seed; repetition seeds are spawned from it
        output_dir: where files are written
        oracle: 'auto', 'analytic_squared' or 'monte_carlo'
        oracle_m: Monte-Carlo holdout size (None means 10 * n_train)
        kappa_cap: truncate covariates above this norm (None keeps the Gaussian design)
        jobs: worker processes
        draws: Rademacher sign draws
        rademacher_n: sample size for the Rademacher command
        rademacher_method: 'both', 'exhaustive' or 'monte_carlo'
        radius: ball radius for the Rademacher command (None means max{1, 3||w*||})
    """
    loss: str = "logistic_regression"
    d: int = 100
    noise_sd: float = 1.0
    labels: Optional[str] = None
    n_train: int = 2000
    n_test: Optional[int] = None
    gammas: List[float] = field(default_factory=lambda: [1.0])
    Ts: List[int] = field(default_factory=lambda: [1000])
    repetitions: int = 20
    delta: float = 0.05
    seed: int = 0
    output_dir: str = field(default_factory=default_output_dir)
    oracle: str = "auto"
    oracle_m: Optional[int] = None
    kappa_cap: Optional[float] = None
    jobs: int = 1
    draws: int = 2000
    rademacher_n: int = 10
    rademacher_method: str = "both"
    radius: Optional[float] = None

    def __post_init__(self):
        self.validate()

    @property
    def label_mode(self) -> str:
        if self.labels is not None:
            return self.labels
        return "sign" if LossKind(self.loss).is_classification else "regression"

    @property
    def test_size(self) -> int:
        return self.n_test if self.n_test is not None else max(1, self.n_train // 3)

    @property
    def holdout_m(self) -> int:
        return self.oracle_m if self.oracle_m is not None else 10 * self.n_train

    @property
    def T_max(self) -> int:
        return max(self.Ts)

    def validate(self):
        try:
            LossKind(self.loss)
        except ValueError:
            raise ConfigError('loss', f"unknown loss '{self.loss}', expected one of "
                                      f"{[k.value for k in LossKind]}") from None
        if self.labels not in (None, "regression", "sign"):
            raise ConfigError('labels', f"expected 'regression' or 'sign', got '{self.labels}'")
        if LossKind(self.loss).is_classification and self.label_mode != "sign":
            raise ConfigError('labels', f"loss '{self.loss}' needs sign labels")
        for name in ('d', 'n_train', 'repetitions', 'jobs', 'draws', 'rademacher_n'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, f"must be >= 1, got {getattr(self, name)}")
        if self.n_test is not None and self.n_test < 1:
            raise ConfigError('n_test', f"must be >= 1, got {self.n_test}")
        if self.oracle_m is not None and self.oracle_m < 1:
            raise ConfigError('oracle_m', f"must be >= 1, got {self.oracle_m}")
        if not self.gammas:
            raise ConfigError('gammas', "grid must not be empty")
        if any(g <= 0 for g in self.gammas):
            raise ConfigError('gammas', f"step sizes must be positive, got {self.gammas}")
        if not self.Ts:
            raise ConfigError('Ts', "grid must not be empty")
        if any(int(t) != t or t < 1 for t in self.Ts):
            raise ConfigError('Ts', f"stopping times must be integers >= 1, got {self.Ts}")
        if not 0 < self.delta <= 1:
            raise ConfigError('delta', f"must lie in (0, 1], got {self.delta}")
        if self.noise_sd < 0:
            raise ConfigError('noise_sd', f"must be >= 0, got {self.noise_sd}")
        if self.oracle not in ORACLE_MODES:
            raise ConfigError('oracle', f"expected one of {ORACLE_MODES}, got '{self.oracle}'")
        if self.oracle == "analytic_squared" and (self.loss != "squared" or self.label_mode != "regression"):
            raise ConfigError('oracle', "analytic_squared needs the squared loss with regression labels")
        if self.kappa_cap is not None and self.kappa_cap < 1:
            raise ConfigError('kappa_cap', f"must be >= 1 (κ >= 1), got {self.kappa_cap}")
        if self.rademacher_method not in RADEMACHER_METHODS:
            raise ConfigError('rademacher_method',
                              f"expected one of {RADEMACHER_METHODS}, got '{self.rademacher_method}'")
        if self.radius is not None and self.radius <= 0:
            raise ConfigError('radius', f"must be positive, got {self.radius}")
        self.Ts = sorted({int(t) for t in self.Ts})
        self.gammas = sorted({float(g) for g in self.gammas})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ============================================================================
# DEFAULTS PER COMMAND
# ============================================================================

def command_defaults(command: str, full_scale: bool = False) -> Dict[str, Any]:
    """Per-command defaults; full_scale restores the full-size experiment."""
    if command not in COMMANDS:
        raise ConfigError('command', f"unknown command '{command}'")
    n_train = 10_000 if full_scale else 2000
    repetitions = 100 if full_scale else 20

    if command == "path-experiment":
        return {'loss': 'logistic_regression', 'n_train': n_train, 'repetitions': repetitions,
                'gammas': [1.0], 'Ts': [1000]}
    if command == "grid-experiment":
        Ts = list(range(1, 1001)) if full_scale else default_T_grid(1000)
        return {'loss': 'logistic_regression', 'n_train': n_train, 'repetitions': repetitions,
                'gammas': [float(g) for g in range(2, 11)], 'Ts': Ts}
    if command == "bounds":
        return {'loss': 'squared', 'n_train': 10_000, 'repetitions': repetitions,
                'gammas': [1.0], 'Ts': [3]}
    if command == "rademacher":
        return {'loss': 'squared', 'rademacher_n': 10,
                'draws': 10_000 if full_scale else 2000}
    return {'loss': 'squared', 'n_train': 2000, 'repetitions': repetitions}


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def _check_keys(values: Dict[str, Any], source: str):
    for key in values:
        if key not in _FIELD_NAMES:
            raise ConfigError(key, f"unknown key in {source}")


def load_toml(path: str) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError('config', f"file not found: {path}")
    with open(path, 'rb') as f:
        try:
            return tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError('config', f"cannot parse {path}: {exc}") from None


def resolve_config(command: str, config_path: Optional[str] = None,
                   overrides: Optional[Dict[str, Any]] = None,
                   full_scale: bool = False) -> ExperimentConfig:
    """
    Merge command defaults, the TOML file and command-line overrides (in that order).

    Raises:
        ConfigError: unknown key or invalid value
    """
    values = command_defaults(command, full_scale)
    if config_path is not None:
        document = load_toml(config_path)
        top = {k: v for k, v in document.items() if not isinstance(v, dict)}
        _check_keys(top, str(config_path))
        values.update(top)
        section = document.get(command, {})
        _check_keys(section, f"[{command}] of {config_path}")
        values.update(section)
    if overrides:
        clean = {k: v for k, v in overrides.items() if v is not None}
        _check_keys(clean, "command-line overrides")
        values.update(clean)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError('config', str(exc)) from None


def config_from_dict(values: Dict[str, Any]) -> ExperimentConfig:
    """Rebuild a config stored in a run manifest."""
    _check_keys(values, "manifest")
    return ExperimentConfig(**values)

"""
Datasets and the synthetic Gaussian design.

The synthetic model draws covariates X ~ N(0, Σ) with diagonal Σ and labels

    regression:  Y = ⟨X, w*⟩ + ε
    sign:        Y = sign(⟨X, w*⟩ + ε)      (for classification losses)

with ε ~ N(0, noise_sd^2). The Gaussian design is unbounded, so by default
κ is set to the largest realized covariate norm (at least 1). The truncated
mode instead resamples every covariate whose norm exceeds a hard cap.

Randomness comes from numpy's Philox counter-based generator keyed by the
seed, so a (model, n, seed) triple gives the same dataset on every platform.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

log = logging.getLogger(__name__)

LABEL_MODES = ("regression", "sign")

# independent random streams derived from one seed
TRAIN_STREAM = 0
HOLDOUT_STREAM = 1
ORACLE_STREAM = 2

# truncated design: rounds of redraws before the cap is deemed unreachable
MAX_REDRAW_ROUNDS = 1000


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(seed: int, stream: int) -> int:
    """A 64-bit seed for an independent stream, fixed across platforms."""
    state = np.random.SeedSequence([seed, stream]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """
    n paired samples (x_j, y_j) with a covariate norm bound κ.

    Attributes:
        xs: covariates, shape (n, d)
        ys: labels, shape (n,)
        kappa: norm bound, κ >= max_j ||x_j|| and κ >= 1
        seed: seed the data was drawn with (None for imported data)
    """
    xs: np.ndarray
    ys: np.ndarray
    kappa: float
    seed: Optional[int] = None
    meta: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        xs = _frozen(self.xs)
        ys = _frozen(self.ys)
        if xs.ndim != 2 or xs.shape[0] < 1:
            raise ValueError(f"xs must have shape (n, d) with n >= 1, got {xs.shape}")
        if ys.shape != (xs.shape[0],):
            raise ValueError(f"ys must have shape ({xs.shape[0]},), got {ys.shape}")
        max_norm = float(np.max(np.linalg.norm(xs, axis=1)))
        if self.kappa < 1 or self.kappa < max_norm * (1 - 1e-12):
            raise ValueError(
                f"kappa={self.kappa} must be >= 1 and >= max ||x_j|| = {max_norm}"
            )
        object.__setattr__(self, 'xs', xs)
        object.__setattr__(self, 'ys', ys)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    @property
    def label_bound(self) -> float:
        """b = max |y_j|, used as the squared-loss label bound."""
        return float(np.max(np.abs(self.ys)))

    @classmethod
    def from_arrays(cls, xs: np.ndarray, ys: np.ndarray, seed: Optional[int] = None) -> 'Dataset':
        """Dataset with κ = max(1, max ||x_j||)."""
        xs = np.asarray(xs, dtype=float)
        kappa = max(1.0, float(np.max(np.linalg.norm(xs, axis=1))))
        return cls(xs=xs, ys=ys, kappa=kappa, seed=seed)


@dataclass(frozen=True)
class SyntheticModel:
    """
    Gaussian linear model with diagonal covariance.

    Attributes:
        sigma_diag: diagonal of Σ, strictly positive
        w_star: generating vector
        noise_sd: standard deviation of the label noise
        seed: default seed for sampling
        labels: 'regression' or 'sign'
    """
    sigma_diag: np.ndarray
    w_star: np.ndarray
    noise_sd: float = 1.0
    seed: int = 0
    labels: str = "regression"

    def __post_init__(self):
        sigma = _frozen(self.sigma_diag)
        w_star = _frozen(self.w_star)
        if sigma.ndim != 1 or np.any(sigma <= 0):
            raise ValueError("sigma_diag must be a vector of strictly positive entries")
        if w_star.shape != sigma.shape:
            raise ValueError(f"w_star has shape {w_star.shape}, expected {sigma.shape}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.labels not in LABEL_MODES:
            raise ValueError(f"labels must be one of {LABEL_MODES}, got '{self.labels}'")
        object.__setattr__(self, 'sigma_diag', sigma)
        object.__setattr__(self, 'w_star', w_star)

    @property
    def d(self) -> int:
        return self.sigma_diag.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.sigma_diag)

    def to_dict(self) -> Dict:
        return {
            'd': self.d,
            'sigma_diag': self.sigma_diag.tolist(),
            'w_star': self.w_star.tolist(),
            'noise_sd': self.noise_sd,
            'seed': self.seed,
            'labels': self.labels,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SyntheticModel':
        return cls(sigma_diag=np.asarray(data['sigma_diag']), w_star=np.asarray(data['w_star']),
                   noise_sd=data['noise_sd'], seed=data['seed'], labels=data['labels'])


def make_power_law_model(d: int, noise_sd: float = 1.0, labels: str = "regression",
                     seed: int = 0) -> SyntheticModel:
    """Σ_jj = j^-2 and w* = Σ e, i.e. w*_j = j^-2 (j = 1..d)."""
    if d < 1:
        raise ValueError(f"Dimension must be >= 1, got {d}")
    j = np.arange(1, d + 1, dtype=float)
    sigma = j ** -2
    return SyntheticModel(sigma_diag=sigma, w_star=sigma.copy(), noise_sd=noise_sd,
                          seed=seed, labels=labels)


def _draw_covariates(model: SyntheticModel, rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal((n, model.d)) * np.sqrt(model.sigma_diag)


def _labels(model: SyntheticModel, xs: np.ndarray, noise: np.ndarray) -> np.ndarray:
    signal = xs @ model.w_star + noise
    if model.labels == "sign":
        return np.where(signal >= 0.0, 1.0, -1.0)
    return signal


def sample(model: SyntheticModel, n: int, seed: Optional[int] = None,
           kappa_cap: Optional[float] = None) -> Dataset:
    """
    Draw n samples from the model.

    Args:
        model: synthetic model
        n: sample size
        seed: generator seed (defaults to model.seed)
        kappa_cap: if given, covariates with norm above the cap are redrawn
                   and κ = max(1, kappa_cap)

    Returns:
        Dataset with κ >= max ||x_j||
    """
    if n < 1:
        raise ValueError(f"Sample size must be >= 1, got {n}")
    seed = model.seed if seed is None else seed
    rng = make_rng(seed)

    xs = _draw_covariates(model, rng, n)
    if kappa_cap is not None:
        if kappa_cap <= 0:
            raise ValueError(f"kappa_cap must be positive, got {kappa_cap}")
        drawn, redraws = n, 0
        for _ in range(MAX_REDRAW_ROUNDS):
            outside = np.linalg.norm(xs, axis=1) > kappa_cap
            count = int(np.count_nonzero(outside))
            if count == 0:
                break
            xs[outside] = _draw_covariates(model, rng, count)
            drawn += count
            redraws += count
        else:
            remaining = int(np.count_nonzero(np.linalg.norm(xs, axis=1) > kappa_cap))
            if remaining:
                rate = (drawn - redraws - remaining) / drawn
                raise ValueError(f"kappa_cap={kappa_cap} accepts only {rate:.2%} of the draws; "
                                 f"gave up after {MAX_REDRAW_ROUNDS} redraw rounds")
        if redraws:
            log.debug("Truncated design: redrew %d covariates above cap %.3f", redraws, kappa_cap)

    noise = rng.standard_normal(n) * model.noise_sd
    ys = _labels(model, xs, noise)

    max_norm = float(np.max(np.linalg.norm(xs, axis=1)))
    kappa = max(1.0, kappa_cap) if kappa_cap is not None else max(1.0, max_norm)
    return Dataset(xs=xs, ys=ys, kappa=kappa, seed=seed,
                   meta={'model': model.to_dict(), 'kappa_cap': kappa_cap})


def holdout_size(n_train: int) -> int:
    """n_test = n_train / 3."""
    return max(1, n_train // 3)


def train_test(model: SyntheticModel, n_train: int, seed: int,
               n_test: Optional[int] = None,
               kappa_cap: Optional[float] = None) -> Tuple[Dataset, Dataset]:
    """Training sample and an independent test sample drawn from disjoint streams."""
    n_test = holdout_size(n_train) if n_test is None else n_test
    train = sample(model, n_train, derive_seed(seed, TRAIN_STREAM), kappa_cap)
    test = sample(model, n_test, derive_seed(seed, HOLDOUT_STREAM), kappa_cap)
    return train, test


# ============================================================================
# CSV + JSON SIDECAR
# ============================================================================

def save_dataset(data: Dataset, csv_path: str) -> Tuple[Path, Path]:
    """
    Write columns x_1..x_d, y to CSV and d, n, kappa, seed, model to a JSON sidecar.

    Returns:
        Tuple of (csv_path, sidecar_path)
    """
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow([f"x_{i + 1}" for i in range(data.d)] + ['y'])
        for x, y in zip(data.xs, data.ys):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])

    sidecar = csv_path.with_suffix('.json')
    meta = {
        'd': data.d,
        'n': data.n,
        'kappa': data.kappa,
        'seed': data.seed,
        'model': data.meta.get('model'),
        'kappa_cap': data.meta.get('kappa_cap'),
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding='utf-8')
    return csv_path, sidecar


def load_dataset(csv_path: str) -> Dataset:
    """Read a dataset written by save_dataset."""
    csv_path = Path(csv_path)
    with open(csv_path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        columns = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader], dtype=float)
    if columns[-1] != 'y':
        raise ValueError(f"Last CSV column must be 'y', got '{columns[-1]}'")

    sidecar = csv_path.with_suffix('.json')
    meta = json.loads(sidecar.read_text(encoding='utf-8')) if sidecar.exists() else {}
    xs, ys = rows[:, :-1], rows[:, -1]
    if 'd' in meta and meta['d'] != xs.shape[1]:
        raise ValueError(f"Sidecar says d={meta['d']}, CSV has {xs.shape[1]} covariate columns")
    kappa = meta.get('kappa', max(1.0, float(np.max(np.linalg.norm(xs, axis=1)))))
    return Dataset(xs=xs, ys=ys, kappa=kappa, seed=meta.get('seed'),
                   meta={'model': meta.get('model'), 'kappa_cap': meta.get('kappa_cap')})

"""
Batch gradient descent on the empirical risk.

    v_{t+1} = v_t - γ ∇L̂(v_t),   ∇L̂(w) = (1/n) Σ_j ℓ'(y_j, ⟨x_j, w⟩) x_j

with a constant step size γ and no projection, clipping or penalty: the only
regularization is the choice of γ and the stopping time T.

Two recording modes:
- full:      all iterates v_0..v_T and gradients ∇L̂(v_0)..∇L̂(v_{T-1})
- streaming: last iterate, running average, per-step scalars and the
             averaged iterate at requested checkpoints
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .data import Dataset
from .losses import LossModel

log = logging.getLogger(__name__)

# iterates beyond this norm abort the run
DIVERGENCE_NORM = 1e12

RECORD_MODES = ("full", "streaming")


class DimensionError(ValueError):
    """Vector dimension does not match the data."""


class DivergenceError(ArithmeticError):
    """Non-finite or exploding iterate."""

    def __init__(self, iteration: int, norm: float):
        self.iteration = iteration
        self.norm = norm
        super().__init__(
            f"Gradient descent diverged at iteration t={iteration} (||v_t|| = {norm:.3e})"
        )


def _check_dim(data: Dataset, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (data.d,):
        raise DimensionError(f"Expected a vector of dimension {data.d}, got shape {w.shape}")
    return w


def empirical_risk(loss: LossModel, data: Dataset, w: np.ndarray) -> float:
    """L̂(w) = (1/n) Σ_j ℓ(y_j, ⟨x_j, w⟩)."""
    w = _check_dim(data, w)
    return float(np.mean(loss.value(data.ys, data.xs @ w)))


def empirical_gradient(loss: LossModel, data: Dataset, w: np.ndarray) -> np.ndarray:
    """∇L̂(w) = (1/n) Σ_j ℓ'(y_j, ⟨x_j, w⟩) x_j."""
    w = _check_dim(data, w)
    return data.xs.T @ loss.derivative(data.ys, data.xs @ w) / data.n


def _risk_and_gradient(loss: LossModel, data: Dataset, w: np.ndarray) -> Tuple[float, np.ndarray]:
    margins = data.xs @ w
    risk = float(np.mean(loss.value(data.ys, margins)))
    grad = data.xs.T @ loss.derivative(data.ys, margins) / data.n
    return risk, grad


@dataclass(frozen=True)
class DescentConfig:
    """
    Attributes:
        gamma: constant step size γ
        T: number of iterations, T >= 1
        v0: initial iterate (zero vector if None)
    """
    gamma: float
    T: int
    v0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"Step size must be >= 0, got gamma={self.gamma}")
        if self.T < 1:
            raise ValueError(f"Iteration count must be >= 1, got T={self.T}")

    def initial(self, d: int) -> np.ndarray:
        if self.v0 is None:
            return np.zeros(d)
        v0 = np.array(self.v0, dtype=float)
        if v0.shape != (d,):
            raise DimensionError(f"v0 has shape {v0.shape}, expected ({d},)")
        return v0


@dataclass
class DescentPath:
    """
    Result of a gradient descent run.

    In full mode `iterates` has shape (T+1, d) and `empirical_gradients`
    shape (T, d); in streaming mode both are None.
    """
    gamma: float
    T: int
    mode: str
    v0: np.ndarray
    last: np.ndarray
    average: np.ndarray
    norms: np.ndarray
    empirical_risks: np.ndarray
    iterates: Optional[np.ndarray] = None
    empirical_gradients: Optional[np.ndarray] = None
    distances: Optional[np.ndarray] = None
    checkpoint_averages: Dict[int, np.ndarray] = field(default_factory=dict)
    metrics: Dict = field(default_factory=dict)

    @property
    def is_full(self) -> bool:
        return self.iterates is not None

    def require_full(self):
        if not self.is_full:
            raise ValueError("This operation needs a path recorded in 'full' mode")


def run(
    loss: LossModel,
    data: Dataset,
    cfg: DescentConfig,
    record: str = "full",
    reference: Optional[np.ndarray] = None,
    checkpoints: Optional[Iterable[int]] = None,
) -> DescentPath:
    """
    Run T steps of gradient descent on the empirical risk.

    Args:
        loss: loss model
        data: training data
        cfg: step size, iteration count, initial point
        record: 'full' or 'streaming'
        reference: if given, ||v_t - reference|| is recorded for every t
        checkpoints: iteration counts at which the averaged iterate is kept

    Returns:
        DescentPath

    Raises:
        DivergenceError: an iterate is not finite or its norm exceeds 1e12
    """
    if record not in RECORD_MODES:
        raise ValueError(f"record must be one of {RECORD_MODES}, got '{record}'")
    start = time.perf_counter()
    d, T, gamma = data.d, cfg.T, cfg.gamma

    v = cfg.initial(d)
    v0 = v.copy()
    if reference is not None:
        reference = _check_dim(data, reference)
    wanted = sorted({int(c) for c in checkpoints}) if checkpoints is not None else []
    if wanted and (wanted[0] < 1 or wanted[-1] > T):
        raise ValueError(f"Checkpoints must lie in [1, {T}], got {wanted}")
    wanted_set = set(wanted)

    full = record == "full"
    iterates = np.empty((T + 1, d)) if full else None
    gradients = np.empty((T, d)) if full else None
    norms = np.empty(T + 1)
    risks = np.empty(T + 1)
    distances = np.empty(T + 1) if reference is not None else None
    checkpoint_averages: Dict[int, np.ndarray] = {}
    running_sum = np.zeros(d)

    if full:
        iterates[0] = v
    norms[0] = np.linalg.norm(v)
    if distances is not None:
        distances[0] = np.linalg.norm(v - reference)

    debug = log.isEnabledFor(logging.DEBUG)
    for t in range(T):
        risks[t], g = _risk_and_gradient(loss, data, v)
        v = v - gamma * g
        norm = float(np.linalg.norm(v))
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise DivergenceError(t + 1, norm)

        if full:
            gradients[t] = g
            iterates[t + 1] = v
        norms[t + 1] = norm
        if distances is not None:
            distances[t + 1] = np.linalg.norm(v - reference)
        running_sum += v
        if t + 1 in wanted_set:
            checkpoint_averages[t + 1] = running_sum / (t + 1)

        if debug:
            log.debug("t=%d  L_hat=%.6e  ||grad||=%.3e  ||v||=%.4f",
                      t, risks[t], np.linalg.norm(g), norm)

    risks[T] = empirical_risk(loss, data, v)
    average = np.mean(iterates[1:], axis=0) if full else running_sum / T

    elapsed = (time.perf_counter() - start) * 1000
    log.info("GD run: gamma=%g T=%d mode=%s final L_hat=%.6e (%.1f ms)",
             gamma, T, record, risks[T], elapsed)

    return DescentPath(
        gamma=gamma, T=T, mode=record, v0=v0, last=v, average=average,
        norms=norms, empirical_risks=risks, iterates=iterates,
        empirical_gradients=gradients, distances=distances,
        checkpoint_averages=checkpoint_averages,
        metrics={'total_time_ms': elapsed, 'loss': loss.name, 'n': data.n, 'd': d},
    )


def averaged_iterate(path: DescentPath) -> np.ndarray:
    """v̄_T = (1/T) Σ_{t=1}^T v_t (v_0 excluded)."""
    if path.is_full:
        return np.mean(path.iterates[1:], axis=0)
    return path.average


def last_iterate(path: DescentPath) -> np.ndarray:
    """v_T."""
    return path.last


def reconstruct_last(path: DescentPath) -> np.ndarray:
    """v_0 - γ Σ_t ∇L̂(v_t), which telescopes to v_T."""
    path.require_full()
    return path.v0 - path.gamma * np.sum(path.empirical_gradients, axis=0)


def check_descent(path: DescentPath, tol: float = 1e-10) -> Tuple[bool, Dict]:
    """L̂(v_{t+1}) <= L̂(v_t) + tol for every t."""
    increases = np.diff(path.empirical_risks)
    worst = float(np.max(increases)) if increases.size else 0.0
    first = int(np.argmax(increases > tol)) if np.any(increases > tol) else None
    return worst <= tol, {'worst_increase': worst, 'first_violation': first}


def export_path_csv(path: DescentPath, filename: str) -> Path:
    """Columns t, norm, dist_to_w_star (if a reference was given), empirical_risk."""
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    with open(filename, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        columns = ['t', 'norm']
        if path.distances is not None:
            columns.append('dist_to_w_star')
        writer.writerow(columns + ['empirical_risk'])
        for t in range(path.T + 1):
            row = [t, repr(float(path.norms[t]))]
            if path.distances is not None:
                row.append(repr(float(path.distances[t])))
            writer.writerow(row + [repr(float(path.empirical_risks[t]))])
    return filename

"""
Loss functions for linear models.

Four convex, differentiable losses ℓ(y, a) with a = ⟨x, w⟩:

- squared:                  (y - a)^2
- logistic_regression:      -log(4 e^{y-a} / (1 + e^{y-a})^2)
- logistic_classification:  log(1 + e^{-ya}),  y in {-1, 1}
- exponential:              e^{-ya},           y in {-1, 1}

Each loss comes with a Lipschitz constant L and a smoothness constant M that
are valid on the working interval [-κR, κR] of predictions. The constants are
always computed locally from (κ, R), also for losses that are globally
Lipschitz, so every caller gets the same contract.

The check_* functions test the loss assumptions (convexity, Lipschitz,
smoothness, nonnegativity) on random points and return (holds, metrics).
"""

import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# exponents are clipped to this range before exp()
EXP_CLAMP = 700.0


class LossKind(str, Enum):
    SQUARED = "squared"
    LOGISTIC_REGRESSION = "logistic_regression"
    LOGISTIC_CLASSIFICATION = "logistic_classification"
    EXPONENTIAL = "exponential"

    @property
    def is_classification(self) -> bool:
        return self in (LossKind.LOGISTIC_CLASSIFICATION, LossKind.EXPONENTIAL)


class LabelDomainError(ValueError):
    """Label outside the label set of the loss."""


@dataclass(frozen=True)
class LossModel:
    """
    A loss together with its constants on the working interval.

    Attributes:
        kind: which of the four losses
        lipschitz: L, Lipschitz constant of ℓ(y, ·) on the working interval
        smoothness: M, Lipschitz constant of ℓ'(y, ·) on the working interval
        working_interval: (-κR, κR)
        label_bound: b for the squared loss (labels in [-b, b])
    """
    kind: LossKind
    lipschitz: float
    smoothness: float
    working_interval: Tuple[float, float]
    label_bound: Optional[float] = None

    def __post_init__(self):
        if not self.lipschitz > 0 or not self.smoothness > 0:
            raise ValueError(
                f"Loss constants must be positive, got L={self.lipschitz}, M={self.smoothness}"
            )
        lo, hi = self.working_interval
        if lo != -hi or hi < 0:
            raise ValueError(f"Working interval must be symmetric around 0, got {self.working_interval}")

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def half_width(self) -> float:
        """κR, the half width of the working interval."""
        return self.working_interval[1]

    def value(self, y: ArrayLike, a: ArrayLike) -> ArrayLike:
        return loss_value(self, y, a)

    def derivative(self, y: ArrayLike, a: ArrayLike) -> ArrayLike:
        return loss_derivative(self, y, a)

    def second_derivative(self, y: ArrayLike, a: ArrayLike) -> ArrayLike:
        return loss_second_derivative(self, y, a)

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind.value,
            'L': self.lipschitz,
            'M': self.smoothness,
            'working_interval': list(self.working_interval),
            'label_bound': self.label_bound,
        }


def _output(values: np.ndarray) -> ArrayLike:
    return values if values.ndim else float(values)


def _validate_labels(kind: LossKind, y: np.ndarray):
    if kind.is_classification and not np.all((y == 1.0) | (y == -1.0)):
        bad = y[(y != 1.0) & (y != -1.0)]
        raise LabelDomainError(
            f"Loss '{kind.value}' needs labels in {{-1, 1}}, got {bad.ravel()[:5].tolist()}"
        )


def _prepare(model: LossModel, y: ArrayLike, a: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    _validate_labels(model.kind, y)
    return y, a


def loss_value(model: LossModel, y: ArrayLike, a: ArrayLike) -> ArrayLike:
    """ℓ(y, a), elementwise over broadcast arrays."""
    y, a = _prepare(model, y, a)
    kind = model.kind

    if kind is LossKind.SQUARED:
        out = (y - a) ** 2
    elif kind is LossKind.LOGISTIC_REGRESSION:
        # 2 log(1 + e^u) - u - log 4, written in |u| to stay finite
        u = np.abs(y - a)
        out = np.maximum(u + 2.0 * np.log1p(np.exp(-u)) - math.log(4.0), 0.0)
    elif kind is LossKind.LOGISTIC_CLASSIFICATION:
        out = np.logaddexp(0.0, -y * a)
    else:
        out = np.exp(np.clip(-y * a, -EXP_CLAMP, EXP_CLAMP))

    return _output(out)


def loss_derivative(model: LossModel, y: ArrayLike, a: ArrayLike) -> ArrayLike:
    """ℓ'(y, a), the derivative in the second argument."""
    y, a = _prepare(model, y, a)
    kind = model.kind

    if kind is LossKind.SQUARED:
        out = 2.0 * (a - y)
    elif kind is LossKind.LOGISTIC_REGRESSION:
        out = np.tanh((a - y) / 2.0)
    elif kind is LossKind.LOGISTIC_CLASSIFICATION:
        out = -y * expit(-y * a)
    else:
        out = -y * np.exp(np.clip(-y * a, -EXP_CLAMP, EXP_CLAMP))

    return _output(out)


def loss_second_derivative(model: LossModel, y: ArrayLike, a: ArrayLike) -> ArrayLike:
    """ℓ''(y, a)."""
    y, a = _prepare(model, y, a)
    kind = model.kind

    if kind is LossKind.SQUARED:
        out = np.full(np.broadcast(y, a).shape, 2.0)
    elif kind is LossKind.LOGISTIC_REGRESSION:
        t = np.tanh((a - y) / 2.0)
        out = 0.5 * (1.0 - t * t)
    elif kind is LossKind.LOGISTIC_CLASSIFICATION:
        s = expit(-y * a)
        out = s * (1.0 - s)
    else:
        out = np.exp(np.clip(-y * a, -EXP_CLAMP, EXP_CLAMP))

    return _output(out)


def loss_constants(
    kind: Union[LossKind, str],
    kappa: float,
    radius: float,
    label_bound: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Lipschitz and smoothness constants (L, M) on [-κR, κR].

    Args:
        kind: loss kind or its config name
        kappa: norm bound of the covariates, κ >= 1
        radius: R >= 0, radius of the ball the iterates live in
        label_bound: b, required for the squared loss

    Returns:
        Tuple of (L, M)
    """
    kind = LossKind(kind)
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")

    if kind is LossKind.SQUARED:
        if label_bound is None:
            raise ValueError("The squared loss needs a label bound b (labels in [-b, b])")
        return 2.0 * (label_bound + kappa * radius), 2.0
    if kind is LossKind.LOGISTIC_REGRESSION:
        return 1.0, 1.0
    if kind is LossKind.LOGISTIC_CLASSIFICATION:
        return 1.0, 0.25
    bound = math.exp(min(kappa * radius, EXP_CLAMP))
    return bound, bound


def make_loss(
    kind: Union[LossKind, str],
    kappa: float = 1.0,
    radius: float = 1.0,
    label_bound: Optional[float] = None,
) -> LossModel:
    """Build a LossModel whose constants are valid on [-κR, κR]."""
    kind = LossKind(kind)
    L, M = loss_constants(kind, kappa, radius, label_bound)
    half = kappa * radius
    return LossModel(kind=kind, lipschitz=L, smoothness=M,
                     working_interval=(-half, half), label_bound=label_bound)


# ============================================================================
# ASSUMPTION CHECKS
# ============================================================================

def _random_labels(model: LossModel, rng: np.random.Generator, size: int) -> np.ndarray:
    if model.kind.is_classification:
        return rng.choice([-1.0, 1.0], size=size)
    bound = model.label_bound if model.label_bound is not None else max(model.half_width, 1.0)
    return rng.uniform(-bound, bound, size=size)


def _random_points(model: LossModel, n_points: int, seed: int):
    rng = np.random.Generator(np.random.Philox(seed))
    half = model.half_width
    y = _random_labels(model, rng, n_points)
    a = rng.uniform(-half, half, size=n_points)
    b = rng.uniform(-half, half, size=n_points)
    return rng, y, a, b


def _report(name: str, violation: np.ndarray, n_points: int, start: float) -> Tuple[bool, Dict]:
    worst = float(np.max(violation)) if violation.size else 0.0
    holds = worst <= 0.0
    metrics = {
        'check': name,
        'points': n_points,
        'worst_violation': worst,
        'failures': int(np.sum(violation > 0.0)),
        'total_time_ms': (time.perf_counter() - start) * 1000,
    }
    if not holds:
        log.warning("%s failed on %d of %d points (worst %.3e)",
                    name, metrics['failures'], n_points, worst)
    return holds, metrics


def check_lipschitz(model: LossModel, n_points: int = 10_000, seed: int = 0) -> Tuple[bool, Dict]:
    """|ℓ(y,a) - ℓ(y,b)| <= L|a - b| on random pairs of the working interval."""
    start = time.perf_counter()
    _, y, a, b = _random_points(model, n_points, seed)
    lhs = np.abs(loss_value(model, y, a) - loss_value(model, y, b))
    rhs = model.lipschitz * np.abs(a - b)
    violation = lhs - rhs - 1e-12 * np.maximum(1.0, lhs)
    return _report('lipschitz', violation, n_points, start)


def check_smoothness(model: LossModel, n_points: int = 10_000, seed: int = 0) -> Tuple[bool, Dict]:
    """|ℓ'(y,a) - ℓ'(y,b)| <= M|a - b| on random pairs of the working interval."""
    start = time.perf_counter()
    _, y, a, b = _random_points(model, n_points, seed)
    lhs = np.abs(loss_derivative(model, y, a) - loss_derivative(model, y, b))
    rhs = model.smoothness * np.abs(a - b)
    violation = lhs - rhs - 1e-12 * np.maximum(1.0, lhs)
    return _report('smoothness', violation, n_points, start)


def check_convexity(model: LossModel, n_points: int = 10_000, seed: int = 0) -> Tuple[bool, Dict]:
    """ℓ(y, λa + (1-λ)b) <= λℓ(y,a) + (1-λ)ℓ(y,b) + 1e-12."""
    start = time.perf_counter()
    rng, y, a, b = _random_points(model, n_points, seed)
    lam = rng.uniform(0.0, 1.0, size=n_points)
    lhs = loss_value(model, y, lam * a + (1 - lam) * b)
    rhs = lam * loss_value(model, y, a) + (1 - lam) * loss_value(model, y, b)
    violation = lhs - rhs - 1e-12 * np.maximum(1.0, rhs)
    return _report('convexity', violation, n_points, start)


def check_nonnegative(model: LossModel, n_points: int = 10_000, seed: int = 0) -> Tuple[bool, Dict]:
    """ℓ >= 0 on the working interval."""
    start = time.perf_counter()
    _, y, a, _ = _random_points(model, n_points, seed)
    violation = -np.asarray(loss_value(model, y, a))
    return _report('nonnegative', violation, n_points, start)


def check_quadratic_upper_bound(model: LossModel, n_points: int = 10_000,
                                seed: int = 0, tol: float = 1e-10) -> Tuple[bool, Dict]:
    """ℓ(y,b) <= ℓ(y,a) + ℓ'(y,a)(b - a) + (M/2)(b - a)^2."""
    start = time.perf_counter()
    _, y, a, b = _random_points(model, n_points, seed)
    lhs = loss_value(model, y, b)
    rhs = (loss_value(model, y, a) + loss_derivative(model, y, a) * (b - a)
           + 0.5 * model.smoothness * (b - a) ** 2)
    violation = lhs - rhs - tol * np.maximum(1.0, np.abs(rhs))
    return _report('quadratic_upper_bound', violation, n_points, start)


def check_derivative_consistency(model: LossModel, n_points: int = 10_000, seed: int = 0,
                                 h: float = 1e-5, rtol: float = 1e-6) -> Tuple[bool, Dict]:
    """ℓ' matches the central finite difference of ℓ within relative error rtol."""
    start = time.perf_counter()
    _, y, a, _ = _random_points(model, n_points, seed)
    fd = (loss_value(model, y, a + h) - loss_value(model, y, a - h)) / (2 * h)
    exact = loss_derivative(model, y, a)
    violation = np.abs(fd - exact) - rtol * np.maximum(1.0, np.abs(exact))
    return _report('derivative_consistency', violation, n_points, start)


def check_assumptions(model: LossModel, n_points: int = 10_000, seed: int = 0) -> Tuple[bool, Dict]:
    """Run every loss check; holds only if all of them hold."""
    checks = [check_derivative_consistency, check_lipschitz, check_smoothness,
              check_convexity, check_nonnegative, check_quadratic_upper_bound]
    results = {}
    for check in checks:
        holds, metrics = check(model, n_points=n_points, seed=seed)
        results[metrics['check']] = {'holds': holds, **metrics}
    return all(r['holds'] for r in results.values()), results

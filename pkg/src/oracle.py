"""
Population risk oracle.

Evaluates the population risk L(w) = E[ℓ(Y, ⟨X, w⟩)], its gradient ∇L(w),
the minimizer w* and the excess risk L(w) - L(w*) for a synthetic model.

Two modes:
- analytic_squared: squared loss with Gaussian regression labels,
      L(w)  = (w - w*)ᵀ Σ (w - w*) + noise_sd^2
      ∇L(w) = 2 Σ (w - w*)
- monte_carlo: averages over m fresh draws (a holdout sample) with
  standard errors. Sums are taken over fixed-size chunks in a fixed order
  so the result does not depend on how the work is split.

w* is the generating vector when the loss is an even function of y - a and
the noise is symmetric (squared, logistic regression). Otherwise it is
located numerically on the holdout risk and flagged as approximate.
"""

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .data import ORACLE_STREAM, Dataset, SyntheticModel, derive_seed, make_rng, sample
from .engine import DimensionError, empirical_gradient
from .losses import LossKind, LossModel

log = logging.getLogger(__name__)

CHUNK_SIZE = 8192
# stationarity target for the numerically located minimizer
W_STAR_GTOL = 1e-6


class OracleMode(str, Enum):
    ANALYTIC_SQUARED = "analytic_squared"
    MONTE_CARLO = "monte_carlo"


class OracleModeError(ValueError):
    """Oracle mode incompatible with the loss or the model."""


def has_symmetric_minimizer(kind: LossKind, labels: str) -> bool:
    """w* is the generating vector: the loss is even in y - a and the label noise symmetric."""
    return labels == "regression" and LossKind(kind) in (LossKind.SQUARED, LossKind.LOGISTIC_REGRESSION)


@dataclass(frozen=True)
class RiskEstimate:
    """Estimated quantity with its standard error (0 for analytic values)."""
    value: float
    std_error: float = 0.0
    raw: Optional[float] = None


def _chunked_sums(xs: np.ndarray, ys: np.ndarray, w: np.ndarray, fn, weights: bool):
    """Chunked sums of f and f^2 where f = fn(y, ⟨x, w⟩) (times x when weights)."""
    total, total_sq = None, None
    for lo in range(0, xs.shape[0], CHUNK_SIZE):
        x_c, y_c = xs[lo:lo + CHUNK_SIZE], ys[lo:lo + CHUNK_SIZE]
        values = fn(y_c, x_c @ w)
        if weights:
            s = x_c.T @ values
            s2 = (x_c ** 2).T @ (values ** 2)
        else:
            s = np.sum(values)
            s2 = np.sum(values ** 2)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
    return total, total_sq


def _mean_and_se(total, total_sq, m: int):
    mean = total / m
    if m < 2:
        return mean, np.zeros_like(mean) if np.ndim(mean) else 0.0
    var = np.maximum(total_sq / m - mean ** 2, 0.0) * m / (m - 1)
    return mean, np.sqrt(var / m)


class PopulationOracle:
    """
    Population quantities for one (loss, synthetic model) pair.

    Usage:
        oracle = build_oracle(loss, model)
        oracle.excess_risk(w)
        oracle.population_gradient(w)
    """

    def __init__(
        self,
        loss: LossModel,
        model: SyntheticModel,
        mode: OracleMode = OracleMode.MONTE_CARLO,
        m: Optional[int] = None,
        seed: int = 0,
        holdout: Optional[Dataset] = None,
    ):
        """
        Initialize the oracle.

        Args:
            loss: loss model
            model: synthetic data model
            mode: analytic_squared or monte_carlo
            m: holdout size for monte_carlo (ignored when holdout is given)
            seed: holdout seed; the holdout is drawn from a stream disjoint from training data
            holdout: explicit holdout sample for monte_carlo
        """
        start = time.perf_counter()
        self.loss = loss
        self.model = model
        self.mode = OracleMode(mode)
        self.seed = seed
        self.holdout: Optional[Dataset] = None
        self.w_star_is_approximate = False

        if self.mode is OracleMode.ANALYTIC_SQUARED:
            if loss.kind is not LossKind.SQUARED or model.labels != "regression":
                raise OracleModeError(
                    f"analytic_squared needs the squared loss with regression labels, "
                    f"got loss '{loss.name}' and labels '{model.labels}'"
                )
            self.m = None
        else:
            if holdout is None:
                if m is None or m < 1:
                    raise ValueError(f"monte_carlo mode needs a holdout size m >= 1, got {m}")
                holdout = sample(model, m, derive_seed(seed, ORACLE_STREAM))
            if holdout.d != model.d:
                raise DimensionError(f"Holdout has d={holdout.d}, model has d={model.d}")
            self.holdout = holdout
            self.m = holdout.n

        self.w_star = self._locate_w_star()
        self.metrics = {'setup_time_ms': (time.perf_counter() - start) * 1000}

    # ------------------------------------------------------------------
    # minimizer
    # ------------------------------------------------------------------

    def _locate_w_star(self) -> np.ndarray:
        if has_symmetric_minimizer(self.loss.kind, self.model.labels):
            return np.array(self.model.w_star)

        self.w_star_is_approximate = True
        xs, ys, m = self.holdout.xs, self.holdout.ys, self.holdout.n

        def objective(w):
            margins = xs @ w
            value = float(np.mean(self.loss.value(ys, margins)))
            grad = xs.T @ self.loss.derivative(ys, margins) / m
            return value, grad

        result = minimize(objective, np.array(self.model.w_star), jac=True, method="L-BFGS-B",
                          options={'gtol': W_STAR_GTOL * 1e-2, 'maxiter': 20_000})
        grad_norm = float(np.linalg.norm(objective(result.x)[1]))
        if grad_norm > W_STAR_GTOL:
            log.warning("Minimizer search for '%s' stopped at ||grad|| = %.2e (target %.0e)",
                        self.loss.name, grad_norm, W_STAR_GTOL)
        else:
            log.info("Located w* for '%s' in %d iterations (||grad|| = %.2e)",
                     self.loss.name, result.nit, grad_norm)
        return result.x

    # ------------------------------------------------------------------
    # risk and gradient
    # ------------------------------------------------------------------

    def _check(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.model.d,):
            raise DimensionError(f"Expected a vector of dimension {self.model.d}, got shape {w.shape}")
        return w

    def risk_estimate(self, w: np.ndarray) -> RiskEstimate:
        w = self._check(w)
        if self.mode is OracleMode.ANALYTIC_SQUARED:
            delta = w - self.model.w_star
            value = float(np.sum(self.model.sigma_diag * delta ** 2) + self.model.noise_sd ** 2)
            return RiskEstimate(value)
        total, total_sq = _chunked_sums(self.holdout.xs, self.holdout.ys, w, self.loss.value, False)
        mean, se = _mean_and_se(total, total_sq, self.m)
        return RiskEstimate(float(mean), float(se))

    def population_risk(self, w: np.ndarray) -> float:
        """L(w)."""
        return self.risk_estimate(w).value

    def gradient_estimate(self, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(∇L(w), coordinatewise standard errors)."""
        w = self._check(w)
        if self.mode is OracleMode.ANALYTIC_SQUARED:
            return 2.0 * self.model.sigma_diag * (w - self.model.w_star), np.zeros(self.model.d)
        if self.m <= CHUNK_SIZE:
            # one chunk: bitwise identical to the empirical gradient on the holdout
            mean = empirical_gradient(self.loss, self.holdout, w)
            _, total_sq = _chunked_sums(self.holdout.xs, self.holdout.ys, w, self.loss.derivative, True)
            _, se = _mean_and_se(mean * self.m, total_sq, self.m)
            return mean, se
        total, total_sq = _chunked_sums(self.holdout.xs, self.holdout.ys, w, self.loss.derivative, True)
        return _mean_and_se(total, total_sq, self.m)

    def population_gradient(self, w: np.ndarray) -> np.ndarray:
        """∇L(w)."""
        return self.gradient_estimate(w)[0]

    def risk_difference(self, v: np.ndarray, w: np.ndarray) -> RiskEstimate:
        """
        L(v) - L(w) with its standard error.

        In monte_carlo mode the difference is taken sample by sample on the
        holdout, so the error of the two risks largely cancels.
        """
        v, w = self._check(v), self._check(w)
        if self.mode is OracleMode.ANALYTIC_SQUARED:
            dv, dw = v - self.model.w_star, w - self.model.w_star
            value = float(np.sum(self.model.sigma_diag * (dv - dw) * (dv + dw)))
            return RiskEstimate(value, 0.0, value)

        total, total_sq = 0.0, 0.0
        for lo in range(0, self.m, CHUNK_SIZE):
            x_c, y_c = self.holdout.xs[lo:lo + CHUNK_SIZE], self.holdout.ys[lo:lo + CHUNK_SIZE]
            diff = self.loss.value(y_c, x_c @ v) - self.loss.value(y_c, x_c @ w)
            total += np.sum(diff)
            total_sq += np.sum(diff ** 2)
        raw, se = _mean_and_se(total, total_sq, self.m)
        return RiskEstimate(float(raw), float(se), float(raw))

    def excess_estimate(self, w: np.ndarray) -> RiskEstimate:
        """
        L(w) - L(w*) with its standard error.

        A negative Monte-Carlo value within 3 standard errors is reported as 0
        (the raw value is kept in `raw`).
        """
        w = self._check(w)
        if self.mode is OracleMode.ANALYTIC_SQUARED:
            delta = w - self.model.w_star
            value = float(np.sum(self.model.sigma_diag * delta ** 2))
            return RiskEstimate(value, 0.0, value)
        diff = self.risk_difference(w, self.w_star)
        value = 0.0 if -3.0 * diff.std_error <= diff.value < 0.0 else diff.value
        return RiskEstimate(value, diff.std_error, diff.value)

    def excess_risk(self, w: np.ndarray) -> float:
        """L(w) - L(w*)."""
        return self.excess_estimate(w).value

    # ------------------------------------------------------------------
    # reporting
    # ------------------------------------------------------------------

    @property
    def tolerance_scale(self) -> float:
        """0 for analytic values, 1 for Monte-Carlo estimates (multiplies 3·SE slack)."""
        return 0.0 if self.mode is OracleMode.ANALYTIC_SQUARED else 1.0

    def summary(self) -> Dict:
        """Oracle record for the JSON run manifest."""
        at_star = self.risk_estimate(self.w_star)
        return {
            'mode': self.mode.value,
            'm': self.m,
            'seed': self.seed,
            'loss': self.loss.name,
            'w_star': self.w_star.tolist(),
            'w_star_norm': float(np.linalg.norm(self.w_star)),
            'w_star_is_approximate': self.w_star_is_approximate,
            'risk_at_w_star': at_star.value,
            'risk_at_w_star_se': at_star.std_error,
        }


def build_oracle(
    loss: LossModel,
    model: SyntheticModel,
    mode: str = "auto",
    m: Optional[int] = None,
    seed: int = 0,
    holdout: Optional[Dataset] = None,
) -> PopulationOracle:
    """Analytic oracle when the loss/model allow it (mode='auto'), Monte Carlo otherwise."""
    if mode == "auto":
        analytic = loss.kind is LossKind.SQUARED and model.labels == "regression"
        mode = OracleMode.ANALYTIC_SQUARED if analytic else OracleMode.MONTE_CARLO
    return PopulationOracle(loss, model, OracleMode(mode), m=m, seed=seed, holdout=holdout)


def gradient_noise(oracle: PopulationOracle, loss: LossModel, data: Dataset,
                   w: np.ndarray) -> np.ndarray:
    """e(w) = ∇L̂(w) - ∇L(w)."""
    return empirical_gradient(loss, data, w) - oracle.population_gradient(w)


# ============================================================================
# POPULATION RISK PROPERTIES
# ============================================================================

def _ball_points(rng: np.random.Generator, d: int, radius: float, count: int) -> np.ndarray:
    directions = rng.standard_normal((count, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / d)
    return directions * radii


def check_risk_properties(oracle: PopulationOracle, kappa: float, radius: float,
                          n_pairs: int = 100, seed: int = 0,
                          tol: float = 1e-10) -> Tuple[bool, Dict]:
    """
    Convexity, κL-Lipschitzness and κ²M-smoothness of L on random pairs in the
    ball of the given radius around 0.

    Slack is 3 standard errors in monte_carlo mode and `tol` for the analytic oracle.
    """
    start = time.perf_counter()
    rng = make_rng(seed)
    d = oracle.model.d
    L, M = oracle.loss.lipschitz, oracle.loss.smoothness
    vs = _ball_points(rng, d, radius, n_pairs)
    ws = _ball_points(rng, d, radius, n_pairs)
    lams = rng.uniform(0.0, 1.0, size=n_pairs)

    worst = {'convexity': -np.inf, 'lipschitz': -np.inf, 'smoothness': -np.inf}
    for v, w, lam in zip(vs, ws, lams):
        rv, rw = oracle.risk_estimate(v), oracle.risk_estimate(w)
        rm = oracle.risk_estimate(lam * v + (1 - lam) * w)
        gv, sev = oracle.gradient_estimate(v)
        gw, sew = oracle.gradient_estimate(w)
        dist = float(np.linalg.norm(v - w))
        slack_r = 3.0 * (rv.std_error + rw.std_error + rm.std_error) + tol
        slack_g = 3.0 * float(np.linalg.norm(sev) + np.linalg.norm(sew)) + tol

        worst['convexity'] = max(worst['convexity'],
                                 rm.value - lam * rv.value - (1 - lam) * rw.value - slack_r)
        worst['lipschitz'] = max(worst['lipschitz'],
                                 abs(rv.value - rw.value) - kappa * L * dist - slack_r)
        worst['smoothness'] = max(worst['smoothness'],
                                  float(np.linalg.norm(gv - gw)) - kappa ** 2 * M * dist - slack_g)

    holds = all(v <= 0.0 for v in worst.values())
    metrics = {f'worst_{k}_violation': float(v) for k, v in worst.items()}
    metrics.update({'pairs': n_pairs, 'total_time_ms': (time.perf_counter() - start) * 1000})
    return holds, metrics


def check_minimizer(oracle: PopulationOracle, n_perturbations: int = 100, scale: float = 0.1,
                    seed: int = 0) -> Tuple[bool, Dict]:
    """L(w*) <= L(w* + u) for random perturbations u (up to 3 standard errors)."""
    rng = make_rng(seed)
    worst = -np.inf
    for _ in range(n_perturbations):
        u = rng.standard_normal(oracle.model.d) * scale
        est = oracle.excess_estimate(oracle.w_star + u)
        raw = est.raw if est.raw is not None else est.value
        worst = max(worst, -raw - 3.0 * est.std_error)
    grad, se = oracle.gradient_estimate(oracle.w_star)
    metrics = {
        'worst_violation': float(worst),
        'gradient_norm_at_w_star': float(np.linalg.norm(grad)),
        'gradient_se_norm': float(np.linalg.norm(se)),
        'perturbations': n_perturbations,
    }
    return worst <= 0.0, metrics

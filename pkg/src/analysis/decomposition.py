"""
Excess-risk decomposition along a recorded gradient path.

Empirical GD is read as inexact GD on the population risk, with gradient
noise g_t = ∇L(v_{t-1}) - ∇L̂(v_{t-1}). For any comparator w and
γ <= 1/(κ²M):

    averaged iterate:
        L(v̄_T) - L(w) <= (1/T) Σ_t (L(v_t) - L(w))
                      <= ||v_0 - w||²/(2γT) + (1/T) Σ_t ⟨g_t, v_t - w⟩

    last iterate:
        L(v_T) - L(w) <= (1/T) Σ_t (L(v_t) - L(w))
                         + Σ_{t=1}^{T-1} 1/(t(t+1)) Σ_{s=T-t+1}^T ⟨g_s, v_s - v_{T-t}⟩

The last-iterate form rests on an exact identity for real sequences
(`averaging_identity`). Every term is computed from the stored path and the
oracle's population gradients.
"""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..data import Dataset
from ..engine import DescentPath
from ..losses import LossModel
from ..oracle import PopulationOracle

log = logging.getLogger(__name__)

EXACT_TOL = 1e-8


# ============================================================================
# LAST-ITERATE IDENTITY
# ============================================================================

def correction_weights(T: int) -> np.ndarray:
    """1/(t(t+1)) for t = 1..T-1."""
    t = np.arange(1, T, dtype=float)
    return 1.0 / (t * (t + 1.0))


def averaging_identity(q: Sequence[float]) -> Tuple[float, float]:
    """
    Both sides of the averaging identity for q_1..q_T:

        q_T = (1/T) Σ_t q_t + Σ_{t=1}^{T-1} 1/(t(t+1)) Σ_{s=T-t+1}^T (q_s - q_{T-t})

    Returns:
        Tuple of (lhs, rhs)
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("The sequence must be a non-empty 1-d array")
    T = q.size
    # tail[k-1] = sum of the last k entries
    tail = np.cumsum(q[::-1])[:-1]
    t = np.arange(1, T)
    # q_{T-t} in 1-based indexing is q[T-t-1]
    inner = tail - t * q[T - t - 1]
    rhs = float(np.mean(q) + np.sum(correction_weights(T) * inner))
    return float(q[-1]), rhs


# ============================================================================
# STEP INEQUALITIES
# ============================================================================

def _population_gradients(oracle: PopulationOracle, path: DescentPath) -> Tuple[np.ndarray, np.ndarray]:
    """∇L(v_t) and its coordinatewise standard error for t = 0..T-1."""
    grads = np.empty((path.T, path.v0.size))
    ses = np.empty_like(grads)
    for t in range(path.T):
        grads[t], ses[t] = oracle.gradient_estimate(path.iterates[t])
    return grads, ses


def _step_condition(loss: LossModel, data: Dataset, gamma: float) -> bool:
    return gamma <= 1.0 / (data.kappa ** 2 * loss.smoothness)


def check_risk_step(loss: LossModel, data: Dataset, oracle: PopulationOracle,
                    path: DescentPath, t: int, w: np.ndarray) -> Tuple[float, Dict]:
    """
    Residual of the one-step risk inequality at step t (1 <= t <= T):

        [L(v_t) - L(w)] - [(||v_{t-1} - w||² - ||v_t - w||²)/(2γ)
                           + ⟨∇L(v_{t-1}) - ∇L̂(v_{t-1}), v_t - w⟩]

    The inequality asserts residual <= 0 when γ <= 1/(κ²M).

    Returns:
        Tuple of (residual, metrics) with the precondition flag and the
        standard error of the residual (0 for the analytic oracle)
    """
    path.require_full()
    if not 1 <= t <= path.T:
        raise ValueError(f"Step index must lie in [1, {path.T}], got t={t}")
    if path.gamma <= 0:
        raise ValueError("The step inequality needs a positive step size")
    w = np.asarray(w, dtype=float)
    v_prev, v_t = path.iterates[t - 1], path.iterates[t]

    diff = oracle.risk_difference(v_t, w)
    grad, grad_se = oracle.gradient_estimate(v_prev)
    noise = grad - path.empirical_gradients[t - 1]
    step = (np.sum((v_prev - w) ** 2) - np.sum((v_t - w) ** 2)) / (2 * path.gamma)
    residual = diff.value - (step + float(noise @ (v_t - w)))
    se = diff.std_error + float(np.linalg.norm(grad_se) * np.linalg.norm(v_t - w))

    return float(residual), {
        'precondition_ok': _step_condition(loss, data, path.gamma),
        'std_error': se,
    }


def check_path_recursion(loss: LossModel, data: Dataset, oracle: PopulationOracle,
                         path: DescentPath, t: int) -> Tuple[float, Dict]:
    """
    Residual of the recursive distance bound at step t (0 <= t <= T-1):

        ||v_{t+1} - w*||² - [||v_0 - w*||²
            + 2γ Σ_{s=0}^t (⟨∇L(v_s) - ∇L̂(v_s), v_s - w*⟩ + κL ||∇L(v_s) - ∇L̂(v_s)||)]

    The bound asserts residual <= 0 when γ <= min{1/(κ²M), 1}.
    """
    residuals, metrics = path_recursion_residuals(loss, data, oracle, path)
    if not 0 <= t < path.T:
        raise ValueError(f"Step index must lie in [0, {path.T - 1}], got t={t}")
    return float(residuals[t]), {
        'precondition_ok': metrics['precondition_ok'],
        'std_error': float(metrics['std_errors'][t]),
    }


def path_recursion_residuals(loss: LossModel, data: Dataset, oracle: PopulationOracle,
                             path: DescentPath) -> Tuple[np.ndarray, Dict]:
    """Recursive distance bound residuals for every t = 0..T-1 in one pass."""
    path.require_full()
    w_star = oracle.w_star
    grads, ses = _population_gradients(oracle, path)
    noise = grads - path.empirical_gradients
    offsets = path.iterates[:-1] - w_star
    terms = (np.einsum('ij,ij->i', noise, offsets)
             + data.kappa * loss.lipschitz * np.linalg.norm(noise, axis=1))
    term_se = (np.linalg.norm(ses, axis=1) * np.linalg.norm(offsets, axis=1)
               + data.kappa * loss.lipschitz * np.linalg.norm(ses, axis=1))

    start_dist = float(np.sum((path.v0 - w_star) ** 2))
    dists = np.sum((path.iterates[1:] - w_star) ** 2, axis=1)
    residuals = dists - (start_dist + 2 * path.gamma * np.cumsum(terms))
    std_errors = 2 * path.gamma * np.cumsum(term_se)

    precondition = path.gamma <= min(1.0 / (data.kappa ** 2 * loss.smoothness), 1.0)
    return residuals, {'precondition_ok': precondition, 'std_errors': std_errors}


# ============================================================================
# DECOMPOSITION
# ============================================================================

@dataclass
class DecompositionReport:
    """
    Measured and assembled sides of the averaged and last-iterate decompositions.

    rhs_avg = bias_term + mean(variance_terms) by construction. rhs_last uses
    the measured average risk gap; rhs_last_bounded replaces it by rhs_avg.
    """
    gamma: float
    T: int
    bias_term: float
    variance_terms: np.ndarray
    correction_terms: np.ndarray
    mean_risk_gap: float
    lhs_avg: float
    rhs_avg: float
    lhs_last: float
    rhs_last: float
    rhs_last_bounded: float
    precondition_ok: bool
    tolerance: float
    comparator: np.ndarray
    distance_terms: np.ndarray
    step_residuals: np.ndarray
    metrics: Dict = field(default_factory=dict)

    @property
    def margin_avg(self) -> float:
        return self.rhs_avg - self.lhs_avg

    @property
    def margin_last(self) -> float:
        return self.rhs_last - self.lhs_last

    @property
    def holds_avg(self) -> bool:
        return (self.lhs_avg <= self.mean_risk_gap + self.tolerance
                and self.mean_risk_gap <= self.rhs_avg + self.tolerance)

    @property
    def holds_last(self) -> bool:
        return (self.lhs_last <= self.rhs_last + self.tolerance
                and self.lhs_last <= self.rhs_last_bounded + self.tolerance)

    @property
    def holds(self) -> bool:
        return self.holds_avg and self.holds_last

    def to_dict(self) -> Dict:
        data = asdict(self)
        for key in ('variance_terms', 'correction_terms', 'comparator',
                    'distance_terms', 'step_residuals'):
            data[key] = np.asarray(data[key]).tolist()
        data.update({'margin_avg': self.margin_avg, 'margin_last': self.margin_last,
                     'holds_avg': self.holds_avg, 'holds_last': self.holds_last})
        return data


def _variance_terms(path: DescentPath, noise: np.ndarray, w: np.ndarray) -> np.ndarray:
    # ⟨g_t, v_t - w⟩ for t = 1..T
    return np.einsum('ij,ij->i', noise, path.iterates[1:] - w)


def _correction_terms(path: DescentPath, noise: np.ndarray) -> np.ndarray:
    """
    Weighted last-iterate corrections for t = 1..T-1:

        1/(t(t+1)) Σ_{s=T-t+1}^T ⟨g_s, v_s - v_{T-t}⟩

    computed with suffix sums in O(Td).
    """
    T = path.T
    if T < 2:
        return np.zeros(0)
    inner = np.einsum('ij,ij->i', noise, path.iterates[1:])
    # sums over the last k steps, k = 1..T-1
    tail_inner = np.cumsum(inner[::-1])[:-1]
    tail_noise = np.cumsum(noise[::-1], axis=0)[:-1]
    t = np.arange(1, T)
    anchors = path.iterates[T - t]
    sums = tail_inner - np.einsum('ij,ij->i', tail_noise, anchors)
    return correction_weights(T) * sums


def decompose(loss: LossModel, data: Dataset, oracle: PopulationOracle,
              path: DescentPath, w: Optional[np.ndarray] = None,
              tol: float = EXACT_TOL) -> DecompositionReport:
    """
    Assemble both decompositions for the comparator w (default w*).

    Args:
        loss: loss model used for the run
        data: training data
        oracle: population oracle
        path: full-mode descent path
        w: comparator
        tol: absolute slack; 3 standard errors are added for Monte-Carlo oracles

    Returns:
        DecompositionReport
    """
    start = time.perf_counter()
    path.require_full()
    if path.gamma <= 0:
        raise ValueError("The decomposition needs a positive step size")
    w = oracle.w_star if w is None else np.asarray(w, dtype=float)
    T, gamma = path.T, path.gamma

    grads, ses = _population_gradients(oracle, path)
    noise = grads - path.empirical_gradients

    bias = float(np.sum((path.v0 - w) ** 2) / (2 * gamma * T))
    variance = _variance_terms(path, noise, w)
    correction = _correction_terms(path, noise)

    gaps = [oracle.risk_difference(path.iterates[t], w) for t in range(1, T + 1)]
    gap_values = np.array([g.value for g in gaps])
    avg_gap = oracle.risk_difference(np.mean(path.iterates[1:], axis=0), w)
    last_gap = gaps[-1]

    mean_gap = float(np.mean(gap_values))
    rhs_avg = bias + float(np.mean(variance))
    rhs_last = mean_gap + float(np.sum(correction))
    rhs_last_bounded = rhs_avg + float(np.sum(correction))

    noise_se = float(np.max(np.linalg.norm(ses, axis=1))) if T else 0.0
    max_offset = float(np.max(np.linalg.norm(path.iterates - w, axis=1)))
    se = (max(g.std_error for g in gaps) + avg_gap.std_error
          + noise_se * max_offset * (1.0 + float(np.sum(correction_weights(T)))))
    tolerance = tol + 3.0 * se

    # (||v_{t-1} - w||² - ||v_t - w||²)/(2γ) for t = 1..T
    distance_terms = (np.sum((path.iterates[:-1] - w) ** 2, axis=1)
                      - np.sum((path.iterates[1:] - w) ** 2, axis=1)) / (2 * gamma)
    residuals = gap_values - distance_terms - variance

    precondition = _step_condition(loss, data, gamma)
    if not precondition:
        log.warning("Step size %g exceeds 1/(kappa^2 M) = %g; decomposition not guaranteed",
                    gamma, 1.0 / (data.kappa ** 2 * loss.smoothness))

    report = DecompositionReport(
        gamma=gamma, T=T, bias_term=bias, variance_terms=variance,
        correction_terms=correction, mean_risk_gap=mean_gap,
        lhs_avg=avg_gap.value, rhs_avg=rhs_avg,
        lhs_last=last_gap.value, rhs_last=rhs_last, rhs_last_bounded=rhs_last_bounded,
        precondition_ok=precondition, tolerance=tolerance,
        comparator=np.array(w), distance_terms=distance_terms, step_residuals=residuals,
        metrics={'total_time_ms': (time.perf_counter() - start) * 1000,
                 'oracle_mode': oracle.mode.value},
    )
    log.info("Decomposition (gamma=%g, T=%d): avg %.4e <= %.4e, last %.4e <= %.4e",
             gamma, T, report.lhs_avg, report.rhs_avg, report.lhs_last, report.rhs_last)
    return report


# ============================================================================
# EXPORT
# ============================================================================

def export_step_terms_csv(report: DecompositionReport, recursion_residuals: np.ndarray,
                          filename: str) -> Path:
    """
    Per-step terms with columns t, bias_contrib, variance_term,
    residual_risk_step, residual_recursion.

    bias_contrib is the telescoping distance term of step t divided by T; the
    column sums to at most the bias term.
    """
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    with open(filename, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['t', 'bias_contrib', 'variance_term', 'residual_risk_step', 'residual_recursion'])
        for t in range(1, report.T + 1):
            writer.writerow([
                t,
                repr(float(report.distance_terms[t - 1] / report.T)),
                repr(float(report.variance_terms[t - 1])),
                repr(float(report.step_residuals[t - 1])),
                repr(float(recursion_residuals[t - 1])),
            ])
    return filename


def save_report_json(report, filename: str) -> Path:
    """Write a report (anything with to_dict) as sorted, indented JSON."""
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    filename.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding='utf-8')
    return filename

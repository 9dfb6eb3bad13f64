"""
High-probability excess-risk bounds for early-stopped gradient descent.

With probability at least 1 - δ, when γ <= min{1/(κ²M), 1}, v_0 = 0, T >= 3 and

    √n >= max{1, 90 γT κ²(1 + κL)(M + L)} √log(4/δ),

the averaged and last iterates satisfy

    L(v̄_T) - L(w*) <= ||w*||²/(2γT) + 180 max{1, ||w*||²} κ²(M + L) √(log(4/δ)/n)
    L(v_T) - L(w*) <= ||w*||²/(2γT) + 425 max{1, ||w*||²} κ²(M + L) log(T) √(log(4/δ)/n)

and the path stays in the ball ||v_t|| <= R, ||v_t - w*|| <= 2R/3 with
R = max{1, 3||w*||}. Choosing γT at the largest value the sample-size
condition allows gives the scheduled forms with constants 225 and 470.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..concentration import concentration_bound
from ..engine import DescentPath

log = logging.getLogger(__name__)

SAMPLE_SIZE_CONSTANT = 90.0
AVG_CONSTANT = 180.0
LAST_CONSTANT = 425.0
SCHEDULED_AVG_CONSTANT = 225.0
SCHEDULED_LAST_CONSTANT = 470.0

# relative slack when comparing the two sides of the sample-size condition
_REL_TOL = 1e-12


def log_term(delta: float) -> float:
    """log(4/δ)."""
    if not 0 < delta < 4:
        raise ValueError(f"delta must lie in (0, 4) so that log(4/delta) > 0, got {delta}")
    return math.log(4.0 / delta)


def path_radius(w_star: np.ndarray) -> float:
    """R = max{1, 3||w*||}."""
    return max(1.0, 3.0 * float(np.linalg.norm(w_star)))


def check_bounded_path(path: DescentPath, w_star: np.ndarray,
                       R: float) -> Tuple[bool, Optional[int]]:
    """
    Whether ||v_t|| <= R and ||v_t - w*|| <= 2R/3 for all 1 <= t <= T.

    Returns:
        Tuple of (holds, index of the first violating t or None)
    """
    w_star = np.asarray(w_star, dtype=float)
    if path.is_full:
        norms = np.linalg.norm(path.iterates[1:], axis=1)
        dists = np.linalg.norm(path.iterates[1:] - w_star, axis=1)
    else:
        if path.distances is None:
            raise ValueError("A streaming path needs recorded distances to w* (run with reference=w*)")
        norms, dists = path.norms[1:], path.distances[1:]
    bad = (norms > R) | (dists > 2.0 * R / 3.0)
    if not np.any(bad):
        return True, None
    return False, int(np.argmax(bad)) + 1


def step_size_condition(gamma: float, kappa: float, M: float) -> bool:
    """γ <= min{1/(κ²M), 1}."""
    return gamma <= min(1.0 / (kappa ** 2 * M), 1.0)


def _complexity(kappa: float, L: float, M: float) -> float:
    return kappa ** 2 * (1.0 + kappa * L) * (M + L)


def sample_size_condition(n: int, gamma_T: float, kappa: float, L: float, M: float,
                          delta: float) -> bool:
    """√n >= max{1, 90 γT κ²(1 + κL)(M + L)} √log(4/δ)."""
    needed = max(1.0, SAMPLE_SIZE_CONSTANT * gamma_T * _complexity(kappa, L, M))
    rhs = needed * math.sqrt(log_term(delta))
    return math.sqrt(n) >= rhs * (1.0 - _REL_TOL)


def schedule_gamma_T(n: int, kappa: float, L: float, M: float, delta: float) -> float:
    """γT = √n / (90 κ²(1 + κL)(M + L) √log(4/δ))."""
    return math.sqrt(n) / (SAMPLE_SIZE_CONSTANT * _complexity(kappa, L, M)
                           * math.sqrt(log_term(delta)))


def excess_risk_bounds(n: int, gamma: float, T: float, delta: float, w_star: np.ndarray,
                   kappa: float, L: float, M: float) -> Tuple[float, float]:
    """
    Right-hand sides of the averaged and last-iterate excess-risk bounds.

    Returns:
        Tuple of (avg_bound, last_bound)
    """
    if gamma <= 0 or T < 1:
        raise ValueError(f"Need gamma > 0 and T >= 1, got gamma={gamma}, T={T}")
    norm_sq = float(np.sum(np.asarray(w_star, dtype=float) ** 2))
    bias = norm_sq / (2.0 * gamma * T)
    rate = max(1.0, norm_sq) * kappa ** 2 * (M + L) * math.sqrt(log_term(delta) / n)
    return bias + AVG_CONSTANT * rate, bias + LAST_CONSTANT * math.log(T) * rate


def scheduled_bounds(n: int, T: float, delta: float, w_star: np.ndarray,
                     kappa: float, L: float, M: float) -> Tuple[float, float]:
    """Bounds with γT at the schedule: constants 225 and 470 times κ²(1+κL)(M+L)."""
    norm_sq = float(np.sum(np.asarray(w_star, dtype=float) ** 2))
    rate = max(1.0, norm_sq) * _complexity(kappa, L, M) * math.sqrt(log_term(delta) / n)
    return SCHEDULED_AVG_CONSTANT * rate, SCHEDULED_LAST_CONSTANT * math.log(T) * rate


@dataclass
class BoundReport:
    """
    Bound quantities next to their measured counterparts for one configuration.

    `measured` holds keys such as excess_avg, excess_last, sup_noise and their
    standard errors; `checks` holds the one-sided comparisons.
    """
    n: int
    gamma: float
    T: int
    delta: float
    kappa: float
    L: float
    M: float
    w_star_norm: float
    R: float
    n_condition_ok: bool
    step_condition_ok: bool
    gamma_T: float
    gamma_T_schedule: float
    avg_bound: float
    last_bound: float
    scheduled_avg_bound: float
    scheduled_last_bound: float
    concentration_bound: float
    concentration_bound_raw: float
    concentration_valid: bool
    measured: Dict = field(default_factory=dict)
    checks: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)


def build_bound_report(n: int, gamma: float, T: int, delta: float, w_star: np.ndarray,
                       kappa: float, L: float, M: float) -> BoundReport:
    """Every bound for one (n, γ, T, δ) configuration; measured values are filled in by the caller."""
    R = path_radius(w_star)
    avg, last = excess_risk_bounds(n, gamma, T, delta, w_star, kappa, L, M)
    sched_avg, sched_last = scheduled_bounds(n, T, delta, w_star, kappa, L, M)
    conc = concentration_bound(kappa, L, M, R, n, delta)
    n_ok = sample_size_condition(n, gamma * T, kappa, L, M, delta)
    step_ok = step_size_condition(gamma, kappa, M)
    if not n_ok:
        log.warning("Sample-size condition fails: n=%d, gamma*T=%g (schedule %g)",
                    n, gamma * T, schedule_gamma_T(n, kappa, L, M, delta))
    if not step_ok:
        log.warning("Step size %g exceeds min(1/(kappa^2 M), 1) = %g",
                    gamma, min(1.0 / (kappa ** 2 * M), 1.0))
    return BoundReport(
        n=n, gamma=gamma, T=T, delta=delta, kappa=kappa, L=L, M=M,
        w_star_norm=float(np.linalg.norm(w_star)), R=R,
        n_condition_ok=n_ok, step_condition_ok=step_ok,
        gamma_T=gamma * T, gamma_T_schedule=schedule_gamma_T(n, kappa, L, M, delta),
        avg_bound=avg, last_bound=last,
        scheduled_avg_bound=sched_avg, scheduled_last_bound=sched_last,
        concentration_bound=conc.simplified, concentration_bound_raw=conc.raw,
        concentration_valid=conc.valid,
    )

"""
Rademacher complexities and gradient concentration.

Function classes over the ball of radius R:

    scalar:    F_R = {x -> ⟨x, v⟩ : ||v|| <= R}
    gradient:  G_R = {(x, y) -> ℓ'(y, ⟨x, v⟩) x : ||v|| <= R}

The empirical complexity E_ε sup_{f} ||(1/n) Σ_j ε_j f(x_j, y_j)|| is
estimated either by enumerating all 2^n sign vectors (n <= 20) or by
averaging K random sign draws. For the scalar class the supremum has the
closed form (R/n)||Σ_j ε_j x_j||. For the gradient class it is approximated
from below by a probe set: random directions on the R-sphere, the points
±R x_j/||x_j||, and projected ascents started from the best probes of each
draw. The per-draw value is a fixed function of the signs, so the Monte-Carlo
average estimates the same quantity as the enumeration.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .data import Dataset, make_rng
from .engine import DescentPath, empirical_gradient
from .losses import LossModel
from .oracle import PopulationOracle

log = logging.getLogger(__name__)

MAX_EXHAUSTIVE_N = 20
DEFAULT_DRAWS = 2000
DEFAULT_DIRECTIONS = 512
DEFAULT_ASCENTS = 64
ASCENT_STEPS = 30
# ±R x_j/||x_j|| candidates are taken from at most this many samples
MAX_SAMPLE_PROBES = 64
# elements per intermediate block
_BLOCK = 4_000_000


class Method(str, Enum):
    MONTE_CARLO = "monte_carlo"
    EXHAUSTIVE = "exhaustive"


class ClassKind(str, Enum):
    SCALAR = "scalar"
    GRADIENT = "gradient"


@dataclass(frozen=True)
class FunctionClassSpec:
    """
    Attributes:
        radius: R > 0
        kind: scalar or gradient class
        loss: loss model, required for the gradient class
    """
    radius: float
    kind: ClassKind = ClassKind.SCALAR
    loss: Optional[LossModel] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"Radius must be positive, got R={self.radius}")
        object.__setattr__(self, 'kind', ClassKind(self.kind))
        if self.kind is ClassKind.GRADIENT and self.loss is None:
            raise ValueError("The gradient class needs a loss model")


@dataclass(frozen=True)
class RademacherEstimate:
    """Estimated empirical Rademacher complexity (std_error is 0 for enumeration)."""
    value: float
    std_error: float
    method: Method
    draws: int
    function_class: ClassKind
    n: int
    R: float

    def to_record(self, bound: Optional[float] = None) -> Dict:
        return {
            'class': self.function_class.value,
            'n': self.n,
            'R': self.R,
            'method': self.method.value,
            'draws': self.draws,
            'value': self.value,
            'std_error': self.std_error,
            'bound': bound,
        }


# ============================================================================
# SIGN VECTORS
# ============================================================================

def _sign_blocks(n: int, method: Method, draws: int, seed: int,
                 block: int = 1024) -> Iterator[np.ndarray]:
    """Yields (B, n) blocks of sign vectors in a fixed order."""
    if method is Method.EXHAUSTIVE:
        if n > MAX_EXHAUSTIVE_N:
            raise ValueError(f"Exhaustive enumeration needs n <= {MAX_EXHAUSTIVE_N}, got n={n}")
        total = 1 << n
        bits = np.arange(n)
        for lo in range(0, total, block):
            codes = np.arange(lo, min(lo + block, total))
            yield np.where((codes[:, None] >> bits) & 1, 1.0, -1.0)
    else:
        if draws < 1:
            raise ValueError(f"Need at least one sign draw, got {draws}")
        rng = make_rng(seed)
        for lo in range(0, draws, block):
            size = min(block, draws - lo)
            yield rng.choice(np.array([-1.0, 1.0]), size=(size, n))


def _summarize(per_draw: np.ndarray, method: Method) -> Tuple[float, float]:
    value = float(np.mean(per_draw))
    if method is Method.EXHAUSTIVE or per_draw.size < 2:
        return value, 0.0
    return value, float(np.std(per_draw, ddof=1) / math.sqrt(per_draw.size))


# ============================================================================
# SCALAR CLASS
# ============================================================================

def rademacher_scalar(data: Dataset, R: float, method: str = "monte_carlo",
                      draws: int = DEFAULT_DRAWS, seed: int = 0) -> RademacherEstimate:
    """
    Empirical Rademacher complexity of F_R; per draw the supremum is (R/n)||Σ ε_j x_j||.

    Raises:
        ValueError: exhaustive enumeration requested for n > 20
    """
    start = time.perf_counter()
    FunctionClassSpec(R)
    method = Method(method)
    values = [R * np.linalg.norm(signs @ data.xs, axis=1) / data.n
              for signs in _sign_blocks(data.n, method, draws, seed)]
    per_draw = np.concatenate(values)
    value, se = _summarize(per_draw, method)
    log.info("Scalar complexity n=%d R=%g (%s, %d draws): %.4e ± %.1e (%.1f ms)",
             data.n, R, method.value, per_draw.size, value, se,
             (time.perf_counter() - start) * 1000)
    return RademacherEstimate(value, se, method, per_draw.size, ClassKind.SCALAR, data.n, R)


# ============================================================================
# GRADIENT CLASS
# ============================================================================

def probe_directions(data: Dataset, R: float, n_directions: int = DEFAULT_DIRECTIONS,
                     seed: int = 0) -> np.ndarray:
    """
    Fixed probe set: random points ±u on the R-sphere, ±R x_j/||x_j||, and 0.

    Every probe comes with its negative and the directions do not depend on R,
    so for the squared loss, where the per-draw norm is convex along each
    line through 0, the best probe value is nondecreasing in R.
    """
    rng = make_rng(seed)
    d = data.d
    random = rng.standard_normal((n_directions, d))
    random *= R / np.linalg.norm(random, axis=1, keepdims=True)

    xs = data.xs[:MAX_SAMPLE_PROBES]
    norms = np.linalg.norm(xs, axis=1, keepdims=True)
    xs = xs[norms[:, 0] > 0] * (R / norms[norms[:, 0] > 0])
    return np.vstack([random, -random, xs, -xs, np.zeros((1, d))])


def _probe_values(loss, data: Dataset, signs: np.ndarray, probes: np.ndarray) -> np.ndarray:
    """||(1/n) Σ_j ε_j ℓ'(y_j, ⟨x_j, v⟩) x_j|| for every (draw, probe), shape (B, P)."""
    n, d = data.xs.shape
    derivs = loss.derivative(data.ys[:, None], data.xs @ probes.T)   # (n, P)
    out = np.empty((signs.shape[0], probes.shape[0]))
    step = max(1, _BLOCK // max(1, n * d))
    for lo in range(0, probes.shape[0], step):
        weighted = derivs[:, lo:lo + step, None] * data.xs[:, None, :]   # (n, Pc, d)
        sums = signs @ weighted.reshape(n, -1) / n
        out[:, lo:lo + step] = np.linalg.norm(sums.reshape(signs.shape[0], -1, d), axis=2)
    return out


def _ascend(loss, data: Dataset, eps: np.ndarray, starts: np.ndarray, R: float,
            steps: int = ASCENT_STEPS) -> float:
    """Projected ascent on ||s(v)||, s(v) = (1/n) Σ ε_j ℓ'(y_j, ⟨x_j, v⟩) x_j; returns the best value seen."""
    xs, ys, n = data.xs, data.ys, data.n
    v = starts.copy()
    best = 0.0
    for k in range(steps + 1):
        margins = v @ xs.T                                          # (S, n)
        s = (eps * loss.derivative(ys, margins)) @ xs / n           # (S, d)
        best = max(best, float(np.max(np.linalg.norm(s, axis=1))))
        if k == steps:
            break
        # ∇(½||s||²) = (1/n) Σ ε_j ℓ''(y_j, ⟨x_j, v⟩) ⟨x_j, s⟩ x_j
        grad = (eps * loss.second_derivative(ys, margins) * (s @ xs.T)) @ xs / n
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        moving = norms[:, 0] > 0
        if not np.any(moving):
            break
        size = 0.25 * R * 0.85 ** k
        v[moving] += size * grad[moving] / norms[moving]
        lengths = np.linalg.norm(v, axis=1, keepdims=True)
        v = np.where(lengths > R, v * (R / np.maximum(lengths, 1e-300)), v)
    return best


def rademacher_gradient(loss, data: Dataset, R: float, method: str = "monte_carlo",
                        draws: int = DEFAULT_DRAWS, seed: int = 0,
                        n_directions: int = DEFAULT_DIRECTIONS,
                        n_ascents: int = DEFAULT_ASCENTS) -> RademacherEstimate:
    """
    Empirical Rademacher complexity of G_R, estimated from below by probing.

    Args:
        loss: anything with derivative(y, a) and second_derivative(y, a)
        data: sample
        R: ball radius
        method: 'monte_carlo' or 'exhaustive'
        draws: K sign draws for monte_carlo
        seed: seed for signs and probe directions
        n_directions: random sphere probes
        n_ascents: ascents per draw, started from the best probes of that draw
    """
    start = time.perf_counter()
    FunctionClassSpec(R)
    method = Method(method)
    probes = probe_directions(data, R, n_directions, seed + 1)
    n_ascents = min(n_ascents, probes.shape[0])

    values: List[float] = []
    for signs in _sign_blocks(data.n, method, draws, seed, block=256):
        table = _probe_values(loss, data, signs, probes)
        for eps, row in zip(signs, table):
            best = float(np.max(row))
            if n_ascents > 0:
                top = np.argsort(row)[::-1][:n_ascents]
                best = max(best, _ascend(loss, data, eps, probes[top], R))
            values.append(best)

    per_draw = np.asarray(values)
    value, se = _summarize(per_draw, method)
    log.info("Gradient complexity n=%d R=%g (%s, %d draws): %.4e ± %.1e (%.1f ms)",
             data.n, R, method.value, per_draw.size, value, se,
             (time.perf_counter() - start) * 1000)
    return RademacherEstimate(value, se, method, per_draw.size, ClassKind.GRADIENT, data.n, R)


def rademacher_complexity(spec: FunctionClassSpec, data: Dataset, method: str = "monte_carlo",
                          draws: int = DEFAULT_DRAWS, seed: int = 0) -> RademacherEstimate:
    """Dispatch on the class kind."""
    if spec.kind is ClassKind.SCALAR:
        return rademacher_scalar(data, spec.radius, method, draws, seed)
    return rademacher_gradient(spec.loss, data, spec.radius, method, draws, seed)


# ============================================================================
# BOUNDS
# ============================================================================

def complexity_bounds(kappa: float, L: float, M: float, R: float, n: int) -> Tuple[float, float]:
    """(κR/√n, 2√2(κL + κ²MR)/√n)."""
    root = math.sqrt(n)
    return kappa * R / root, 2.0 * math.sqrt(2.0) * (kappa * L + kappa ** 2 * M * R) / root


@dataclass(frozen=True)
class ConcentrationBound:
    """
    Uniform bound on sup_{||v||<=R} ||∇L(v) - ∇L̂(v)|| at confidence 1 - δ.

    raw: 4 R̂(G_R) + G√(2 log(4/δ)/n) + 4G log(4/δ)/n with G = κL
    simplified: 20 κ² R (L + M) √(log(4/δ)/n), valid when n >= log(4/δ)
    """
    raw: float
    simplified: float
    valid: bool

    def to_dict(self) -> Dict:
        return asdict(self)


def concentration_bound(kappa: float, L: float, M: float, R: float, n: int,
                        delta: float) -> ConcentrationBound:
    if not 0 < delta < 4:
        raise ValueError(f"delta must lie in (0, 4), got {delta}")
    lt = math.log(4.0 / delta)
    g = kappa * L
    _, grad_bound = complexity_bounds(kappa, L, M, R, n)
    raw = 4.0 * grad_bound + g * math.sqrt(2.0 * lt / n) + 4.0 * g * lt / n
    simplified = 20.0 * kappa ** 2 * R * (L + M) * math.sqrt(lt / n)
    valid = math.sqrt(n) >= math.sqrt(lt)
    if not valid:
        log.warning("Simplified concentration bound not valid: n=%d < log(4/delta)=%.3f", n, lt)
    return ConcentrationBound(raw=raw, simplified=simplified, valid=valid)


# ============================================================================
# EMPIRICAL SUPREMUM OF THE GRADIENT NOISE
# ============================================================================

def _noise_norms(loss: LossModel, data: Dataset, oracle: PopulationOracle,
                 points: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(empirical_gradient(loss, data, v) - oracle.population_gradient(v))
                     for v in points])


def sup_noise_probes(d: int, R: float, n_random: int = 256, seed: int = 0) -> np.ndarray:
    """n_random points inside the R-ball and n_random on its sphere, plus 0."""
    rng = make_rng(seed)
    directions = rng.standard_normal((2 * n_random, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = np.concatenate([R * rng.uniform(0.0, 1.0, n_random) ** (1.0 / d), np.full(n_random, R)])
    return np.vstack([directions * radii[:, None], np.zeros((1, d))])


def empirical_sup_noise(loss: LossModel, data: Dataset, oracle: PopulationOracle, R: float,
                        path: Optional[DescentPath] = None, n_random: int = 256,
                        seed: int = 0) -> float:
    """
    max ||∇L̂(v) - ∇L(v)|| over the probe set, a lower estimate of the supremum over the R-ball.

    Probes are the recorded path iterates inside the ball (when a full path is
    given) and, unless n_random is 0, random ball and sphere points.
    """
    groups = []
    if path is not None:
        path.require_full()
        inside = path.iterates[np.linalg.norm(path.iterates, axis=1) <= R]
        groups.append(inside)
    if n_random > 0:
        groups.append(sup_noise_probes(data.d, R, n_random, seed))
    if not groups or sum(g.shape[0] for g in groups) == 0:
        return 0.0
    norms = _noise_norms(loss, data, oracle, np.vstack(groups))
    return float(np.max(norms)) if norms.size else 0.0


# ============================================================================
# EXPORT
# ============================================================================

def save_records_json(records: List[Dict], filename: str) -> Path:
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    filename.write_text(json.dumps(records, indent=2, sort_keys=True), encoding='utf-8')
    return filename

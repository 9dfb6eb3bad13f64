"""
Property suite behind the `verify` command.

Checks, in order:
- the four losses satisfy their assumptions (derivatives, L, M, convexity)
- the averaging identity holds on random sequences
- both excess-risk decompositions and the per-step inequalities hold on
  seeded squared-loss runs with the analytic oracle
- the decomposition detects a sign flip in the variance term
- the Monte-Carlo oracle agrees with the closed form; the population risk is
  convex, Lipschitz and smooth with the transferred constants
- Rademacher enumeration agrees with Monte Carlo and respects the bounds
- the empirical gradient-noise supremum stays under the concentration bound
  on at least 95 of 100 seeds
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Tuple

import numpy as np

from ..analysis import averaging_identity, decompose, path_radius, path_recursion_residuals
from ..colors import Colors, header, status
from ..concentration import (
    Method,
    complexity_bounds,
    concentration_bound,
    empirical_sup_noise,
    rademacher_gradient,
    rademacher_scalar,
)
from ..data import TRAIN_STREAM, derive_seed, make_rng, sample
from ..engine import DescentConfig, run
from ..losses import LossKind, check_assumptions, make_loss
from ..oracle import OracleMode, build_oracle, check_minimizer, check_risk_properties
from .config import ExperimentConfig
from .runner import Experiment, loss_for, model_for, repetition_seeds
from .rademacher_experiment import agree

log = logging.getLogger(__name__)

C = Colors

JSON_NAME = "verify.json"

IDENTITY_SEQUENCES = 100
IDENTITY_MAX_T = 1000
IDENTITY_TOL = 1e-10

DECOMPOSITION_TS = (10, 100, 1000)
RESIDUAL_TOL = 1e-8

ORACLE_CHECK_M = 50_000
ORACLE_CHECK_POINTS = 5

RADEMACHER_N = 10
RADEMACHER_DRAWS = 10_000

CONCENTRATION_N = 10_000
CONCENTRATION_SEEDS = 100
CONCENTRATION_PROBES = 64
CONCENTRATION_MIN_PASSES = 95


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: Dict = field(default_factory=dict)
    time_ms: float = 0.0

    def to_dict(self) -> Dict:
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail}


# ============================================================================
# WORKERS (top level so they can run in a process pool)
# ============================================================================

def _decomposition_worker(args: Tuple[ExperimentConfig, int, int]) -> Dict:
    config, seed, T = args
    model = model_for(config)
    R = path_radius(model.w_star)
    train = sample(model, config.n_train, derive_seed(seed, TRAIN_STREAM), config.kappa_cap)
    loss = loss_for(LossKind.SQUARED.value, train, R)
    gamma = 1.0 / (train.kappa ** 2 * loss.smoothness)
    path = run(loss, train, DescentConfig(gamma=gamma, T=T), record="full")
    oracle = build_oracle(loss, model, OracleMode.ANALYTIC_SQUARED)

    report = decompose(loss, train, oracle, path, tol=RESIDUAL_TOL)
    recursion, rec_metrics = path_recursion_residuals(loss, train, oracle, path)
    return {
        'seed': seed,
        'T': T,
        'holds_avg': report.holds_avg,
        'holds_last': report.holds_last,
        'worst_decomposition': max(report.lhs_avg - report.mean_risk_gap,
                                   report.mean_risk_gap - report.rhs_avg,
                                   report.lhs_last - report.rhs_last,
                                   report.lhs_last - report.rhs_last_bounded),
        'worst_step_residual': float(np.max(report.step_residuals)),
        'worst_recursion_residual': float(np.max(recursion)),
        'precondition_ok': report.precondition_ok and rec_metrics['precondition_ok'],
    }


def _concentration_worker(args: Tuple[ExperimentConfig, int]) -> Tuple[float, float]:
    config, seed = args
    model = model_for(config)
    R = path_radius(model.w_star)
    data = sample(model, CONCENTRATION_N, derive_seed(seed, TRAIN_STREAM), config.kappa_cap)
    loss = loss_for(LossKind.SQUARED.value, data, R)
    oracle = build_oracle(loss, model, OracleMode.ANALYTIC_SQUARED)
    sup = empirical_sup_noise(loss, data, oracle, R, n_random=CONCENTRATION_PROBES, seed=seed)
    bound = concentration_bound(data.kappa, loss.lipschitz, loss.smoothness, R, data.n, config.delta)
    return sup, bound.simplified


class VerificationSuite(Experiment):
    """
    Usage:
        suite = VerificationSuite(config)
        all_passed = suite.run()
        suite.print_results()
        suite.export()
    """

    command = "verify"

    def __init__(self, config: ExperimentConfig, verbose: bool = True):
        # the property checks are stated for the squared loss with regression labels
        config = replace(config, loss=LossKind.SQUARED.value, labels="regression")
        super().__init__(config, verbose)
        self.results: List[CheckResult] = []

    def _check(self, name: str, fn: Callable[[], Tuple[bool, Dict]]) -> CheckResult:
        if self.verbose:
            print(f"  {C.DIM}running{C.RESET} {name} ...", flush=True)
        start = time.perf_counter()
        passed, detail = fn()
        result = CheckResult(name, bool(passed), detail, (time.perf_counter() - start) * 1000)
        self.timing[name] = result.time_ms
        self.results.append(result)
        if not result.passed:
            log.warning("Check '%s' failed: %s", name, detail)
        return result

    # ------------------------------------------------------------------
    # checks
    # ------------------------------------------------------------------

    def check_losses(self) -> Tuple[bool, Dict]:
        detail = {}
        all_hold = True
        for kind in LossKind:
            model = make_loss(kind, kappa=1.5, radius=2.0,
                              label_bound=2.0 if kind is LossKind.SQUARED else None)
            holds, results = check_assumptions(model, n_points=10_000, seed=self.config.seed)
            detail[kind.value] = {name: r['worst_violation'] for name, r in results.items()}
            all_hold = all_hold and holds
        return all_hold, detail

    def check_identity(self) -> Tuple[bool, Dict]:
        rng = make_rng(self.config.seed)
        worst = 0.0
        for _ in range(IDENTITY_SEQUENCES):
            T = int(rng.integers(1, IDENTITY_MAX_T + 1))
            lhs, rhs = averaging_identity(rng.standard_normal(T))
            worst = max(worst, abs(lhs - rhs))
        return worst <= IDENTITY_TOL, {'sequences': IDENTITY_SEQUENCES, 'max_abs_error': worst}

    def check_decompositions(self) -> Tuple[bool, Dict]:
        tasks = [(self.config, seed, T) for seed in self.seeds for T in DECOMPOSITION_TS]
        runs = self._map(_decomposition_worker, tasks, "decompositions")
        worst = {key: max(r[key] for r in runs) for key in
                 ('worst_decomposition', 'worst_step_residual', 'worst_recursion_residual')}
        passed = (all(r['holds_avg'] and r['holds_last'] and r['precondition_ok'] for r in runs)
                  and worst['worst_step_residual'] <= RESIDUAL_TOL
                  and worst['worst_recursion_residual'] <= RESIDUAL_TOL)
        return passed, {'runs': len(runs), 'Ts': list(DECOMPOSITION_TS), **worst}

    def check_variance_sign(self) -> Tuple[bool, Dict]:
        """
        Start at w* with one step: the variance term is γ||∇L̂(w*)||² > 0, so
        flipping its sign pushes the right-hand side below the measured gap.
        """
        model = self.model
        R = path_radius(model.w_star)
        train = sample(model, self.config.n_train, derive_seed(self.seeds[0], TRAIN_STREAM))
        loss = loss_for(LossKind.SQUARED.value, train, R)
        gamma = 1.0 / (train.kappa ** 2 * loss.smoothness)
        path = run(loss, train, DescentConfig(gamma=gamma, T=1, v0=model.w_star), record="full")
        report = decompose(loss, train, build_oracle(loss, model, OracleMode.ANALYTIC_SQUARED), path)
        flipped_rhs = report.bias_term - float(np.mean(report.variance_terms))
        detected = report.mean_risk_gap > flipped_rhs + report.tolerance
        return detected and report.holds, {
            'variance_term': float(report.variance_terms[0]),
            'mean_risk_gap': report.mean_risk_gap,
            'flipped_rhs': flipped_rhs,
        }

    def check_oracle(self) -> Tuple[bool, Dict]:
        model = self.model
        R = path_radius(model.w_star)
        train = sample(model, self.config.n_train, derive_seed(self.seeds[0], TRAIN_STREAM))
        loss = loss_for(LossKind.SQUARED.value, train, R)
        exact = build_oracle(loss, model, OracleMode.ANALYTIC_SQUARED)
        mc = build_oracle(loss, model, OracleMode.MONTE_CARLO, m=ORACLE_CHECK_M, seed=self.config.seed)

        rng = make_rng(derive_seed(self.config.seed, 7))
        points = model.w_star + 0.3 * rng.standard_normal((ORACLE_CHECK_POINTS, model.d))
        worst_z = 0.0
        for p in points:
            est = mc.risk_estimate(p)
            worst_z = max(worst_z, abs(est.value - exact.population_risk(p)) / est.std_error)

        props_ok, props = check_risk_properties(exact, train.kappa, R, seed=self.config.seed)
        min_ok, min_metrics = check_minimizer(exact, seed=self.config.seed)
        return worst_z <= 4.0 and props_ok and min_ok, {
            'worst_z_score': worst_z,
            **{k: v for k, v in props.items() if k.startswith('worst_')},
            'minimizer': {k: v for k, v in min_metrics.items() if k != 'total_time_ms'},
        }

    def check_rademacher(self) -> Tuple[bool, Dict]:
        model = self.model
        R = path_radius(model.w_star)
        data = sample(model, RADEMACHER_N, derive_seed(self.config.seed, TRAIN_STREAM))
        loss = loss_for(LossKind.SQUARED.value, data, R)
        scalar_bound, gradient_bound = complexity_bounds(data.kappa, loss.lipschitz,
                                                         loss.smoothness, R, data.n)
        seed = self.config.seed
        records = {}
        for method in (Method.EXHAUSTIVE, Method.MONTE_CARLO):
            records[('scalar', method)] = rademacher_scalar(
                data, R, method.value, RADEMACHER_DRAWS, seed).to_record(scalar_bound)
            records[('gradient', method)] = rademacher_gradient(
                loss, data, R, method.value, RADEMACHER_DRAWS, seed).to_record(gradient_bound)

        detail = {}
        passed = True
        for kind in ('scalar', 'gradient'):
            exhaustive, mc = records[(kind, Method.EXHAUSTIVE)], records[(kind, Method.MONTE_CARLO)]
            agrees = agree(exhaustive, mc)
            bounded = (exhaustive['value'] <= exhaustive['bound']
                       and mc['value'] <= mc['bound'] + 3.0 * mc['std_error'])
            detail[kind] = {'exhaustive': exhaustive['value'], 'monte_carlo': mc['value'],
                            'monte_carlo_se': mc['std_error'], 'bound': exhaustive['bound'],
                            'agree': agrees, 'within_bound': bounded}
            passed = passed and agrees and bounded
        return passed, detail

    def check_concentration(self) -> Tuple[bool, Dict]:
        seeds = repetition_seeds(derive_seed(self.config.seed, 8), CONCENTRATION_SEEDS)
        runs = self._map(_concentration_worker, [(self.config, s) for s in seeds], "concentration")
        passes = sum(sup <= bound for sup, bound in runs)
        return passes >= CONCENTRATION_MIN_PASSES, {
            'seeds': CONCENTRATION_SEEDS,
            'passes': int(passes),
            'max_sup_noise': max(sup for sup, _ in runs),
            'min_bound': min(bound for _, bound in runs),
        }

    # ------------------------------------------------------------------

    def run(self) -> bool:
        if self.verbose:
            print(f"\n{C.BOLD_WHITE}▶ Property suite, d={self.config.d}, n={self.config.n_train}, "
                  f"{len(self.seeds)} decomposition seeds{C.RESET}")
        self._check("loss assumptions", self.check_losses)
        self._check("averaging identity", self.check_identity)
        self._check("decompositions and step inequalities", self.check_decompositions)
        self._check("flipped variance detected", self.check_variance_sign)
        self._check("population oracle", self.check_oracle)
        self._check("rademacher enumeration vs monte carlo", self.check_rademacher)
        self._check("gradient concentration frequency", self.check_concentration)
        self.diagnostics = {'all_passed': self.all_passed,
                            'failed': [r.name for r in self.results if not r.passed]}
        return self.all_passed

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def print_results(self):
        print(header("VERIFICATION"))
        print(f"  {'check':<40} │ {'result':^6} │ {'time (ms)':>10}")
        print(f"  {'─' * 40}─┼─{'─' * 6}─┼─{'─' * 10}")
        for r in self.results:
            print(f"  {r.name:<40} │ {status(r.passed)} │ {C.YELLOW}{r.time_ms:>10.1f}{C.RESET}")
        passed = sum(r.passed for r in self.results)
        color = C.BOLD_GREEN if self.all_passed else C.BOLD_RED
        print(f"\n  {color}{passed}/{len(self.results)} checks passed{C.RESET}")

    def export(self):
        self.write_json([r.to_dict() for r in self.results], JSON_NAME)
        return self.finish()

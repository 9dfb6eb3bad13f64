"""
Measured excess risk, gradient noise and path containment against the
excess-risk and concentration bounds, at the step-size schedule.

The product γT is set to the largest value the sample-size condition allows.
The step size is the largest admissible one (γ <= min{1/(κ²M), 1}) that
still leaves at least `Ts[0]` iterations; then T = ceil(γT/γ) and γ is
rescaled so that γT is hit exactly.
"""

import logging
import math
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..analysis.bounds import build_bound_report, check_bounded_path, path_radius, schedule_gamma_T
from ..colors import Colors, header, status
from ..concentration import empirical_sup_noise
from ..data import TRAIN_STREAM, derive_seed, sample
from ..engine import DescentConfig, DivergenceError, run
from ..oracle import build_oracle
from .config import ExperimentConfig
from .runner import Experiment, locate_w_star, loss_for, model_for

log = logging.getLogger(__name__)

C = Colors

JSON_NAME = "bound_report.json"

# random ball/sphere probes added to the path iterates for the noise supremum
SUP_NOISE_PROBES = 64


def schedule(n: int, kappa: float, L: float, M: float, delta: float,
             min_T: int = 3) -> Tuple[float, int]:
    """(γ, T) with γT at the schedule, γ admissible and T >= min_T."""
    gamma_T = schedule_gamma_T(n, kappa, L, M, delta)
    gamma = min(1.0 / (kappa ** 2 * M), 1.0, gamma_T / min_T)
    T = max(min_T, math.ceil(gamma_T / gamma - 1e-9))
    return gamma_T / T, T


def _bounds_worker(args: Tuple[ExperimentConfig, int, np.ndarray]) -> Optional[Dict]:
    config, seed, w_star = args
    model = model_for(config)
    R = path_radius(w_star)
    train = sample(model, config.n_train, derive_seed(seed, TRAIN_STREAM), config.kappa_cap)
    loss = loss_for(config.loss, train, R)
    kappa, L, M = train.kappa, loss.lipschitz, loss.smoothness
    gamma, T = schedule(train.n, kappa, L, M, config.delta, config.Ts[0])

    try:
        path = run(loss, train, DescentConfig(gamma=gamma, T=T), record="full", reference=w_star)
    except DivergenceError as exc:
        log.warning("Scheduled run with seed %d diverged: %s", seed, exc)
        return None
    oracle = build_oracle(loss, model, config.oracle, m=config.holdout_m, seed=seed)

    avg = oracle.excess_estimate(path.average)
    last = oracle.excess_estimate(path.last)
    sup_noise = empirical_sup_noise(loss, train, oracle, R, path=path,
                                    n_random=SUP_NOISE_PROBES, seed=seed)
    bounded, first_violation = check_bounded_path(path, w_star, R)

    report = build_bound_report(train.n, gamma, T, config.delta, w_star, kappa, L, M)
    report.measured = {
        'excess_avg': avg.value,
        'excess_avg_se': avg.std_error,
        'excess_last': last.value,
        'excess_last_se': last.std_error,
        'sup_noise': sup_noise,
        'max_dist_to_w_star': float(np.max(path.distances[1:])),
        'oracle_mode': oracle.mode.value,
        'seed': seed,
    }
    report.checks = {
        'excess_avg_within_bound': bool(avg.value <= report.avg_bound + 3.0 * avg.std_error),
        'excess_last_within_bound': bool(last.value <= report.last_bound + 3.0 * last.std_error)
                                    if T > 1 else None,
        'sup_noise_within_concentration': bool(sup_noise <= report.concentration_bound),
        'bounded_path': bounded,
        'first_unbounded_t': first_violation,
    }
    if not bounded:
        log.warning("Seed %d: path leaves the 2R/3 ball around w* at t=%d", seed, first_violation)
    return report.to_dict()


def _fraction(reports: List[Dict], key: str) -> Optional[float]:
    values = [r['checks'][key] for r in reports if r['checks'][key] is not None]
    return float(np.mean(values)) if values else None


class BoundsExperiment(Experiment):
    """
    Usage:
        experiment = BoundsExperiment(config)
        experiment.run()
        experiment.print_results()
        experiment.export()
    """

    command = "bounds"

    def __init__(self, config: ExperimentConfig, verbose: bool = True):
        super().__init__(config, verbose)
        self.reports: List[Dict] = []
        self.summary: Dict = {}

    def run(self) -> List[Dict]:
        start = time.perf_counter()
        w_star = locate_w_star(self.config, self.model)
        self._timed('w_star', start)

        if self.verbose:
            print(f"\n{C.BOLD_WHITE}▶ Bounds at the schedule, {self.config.loss} loss, "
                  f"n={self.config.n_train}, δ={self.config.delta:g}{C.RESET}")

        start = time.perf_counter()
        results = self._map(_bounds_worker, [(self.config, seed, w_star) for seed in self.seeds],
                            "repetitions")
        self._timed('repetitions', start)

        self.reports = [r for r in results if r is not None]
        self.summary = {
            'repetitions': len(results),
            'diverged': len(results) - len(self.reports),
            'n_condition_ok': all(r['n_condition_ok'] for r in self.reports),
            'step_condition_ok': all(r['step_condition_ok'] for r in self.reports),
        }
        for key in ('excess_avg_within_bound', 'excess_last_within_bound',
                    'sup_noise_within_concentration', 'bounded_path'):
            self.summary[f'fraction_{key}'] = _fraction(self.reports, key)
        if not self.summary['n_condition_ok']:
            log.warning("Sample-size condition fails on at least one repetition")
        self.diagnostics = dict(self.summary)
        return self.reports

    def print_results(self):
        if not self.reports:
            return
        first = self.reports[0]
        print(header("EXCESS-RISK BOUNDS AT THE SCHEDULE"))
        print(f"  κ={first['kappa']:.4f}  L={first['L']:.4f}  M={first['M']:.4f}  R={first['R']:.4f}")
        print(f"  γT={first['gamma_T']:.4e}  γ={first['gamma']:.4e}  T={first['T']}")
        print(f"  sample-size condition: {status(self.summary['n_condition_ok'])}")
        print(f"  step-size condition:   {status(self.summary['step_condition_ok'])}")
        print()
        print(f"  {'quantity':<24} │ {'measured (mean)':>16} │ {'bound':>12}")
        print(f"  {'─' * 24}─┼─{'─' * 16}─┼─{'─' * 12}")
        rows = [
            ('excess risk, averaged', 'excess_avg', 'avg_bound'),
            ('excess risk, last', 'excess_last', 'last_bound'),
            ('sup gradient noise', 'sup_noise', 'concentration_bound'),
        ]
        for label, measured_key, bound_key in rows:
            measured = np.mean([r['measured'][measured_key] for r in self.reports])
            print(f"  {label:<24} │ {C.YELLOW}{measured:>16.4e}{C.RESET} │ {first[bound_key]:>12.4e}")
        print()
        for key, value in self.summary.items():
            if key.startswith('fraction_') and value is not None:
                ok = value >= 0.95
                print(f"  {key[len('fraction_'):]:<32} {value * 100:>6.1f}%  {status(ok)}")

    def export(self):
        start = time.perf_counter()
        self.write_json({'reports': self.reports, 'summary': self.summary}, JSON_NAME)
        self._timed('export', start)
        return self.finish()

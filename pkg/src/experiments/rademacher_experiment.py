"""
Empirical Rademacher complexities of the scalar class F_R and the gradient
class G_R on one small sample, by exhaustive enumeration and Monte Carlo,
next to their closed-form bounds and the resulting concentration bound.
"""

import logging
import time
from typing import Dict, List

import numpy as np

from ..analysis.bounds import path_radius
from ..colors import Colors, header, status
from ..concentration import (
    MAX_EXHAUSTIVE_N,
    Method,
    complexity_bounds,
    concentration_bound,
    rademacher_gradient,
    rademacher_scalar,
    save_records_json,
)
from ..data import TRAIN_STREAM, derive_seed, sample
from .config import ExperimentConfig
from .runner import Experiment, locate_w_star, loss_for

log = logging.getLogger(__name__)

C = Colors

JSON_NAME = "rademacher.json"


def agree(a: Dict, b: Dict) -> bool:
    """Two estimates agree within 3 combined standard errors (1e-12 floor)."""
    slack = 3.0 * (a['std_error'] + b['std_error']) + 1e-12
    return abs(a['value'] - b['value']) <= slack


class RademacherExperiment(Experiment):
    """
    Usage:
        experiment = RademacherExperiment(config)
        experiment.run()
        experiment.print_results()
        experiment.export()
    """

    command = "rademacher"

    def __init__(self, config: ExperimentConfig, verbose: bool = True):
        super().__init__(config, verbose)
        self.records: List[Dict] = []

    def _methods(self, n: int) -> List[Method]:
        choice = self.config.rademacher_method
        methods = []
        if choice in ("both", "exhaustive"):
            if n <= MAX_EXHAUSTIVE_N:
                methods.append(Method.EXHAUSTIVE)
            else:
                log.warning("n=%d is too large for enumeration (max %d); skipping it", n, MAX_EXHAUSTIVE_N)
        if choice in ("both", "monte_carlo"):
            methods.append(Method.MONTE_CARLO)
        return methods

    def run(self) -> List[Dict]:
        cfg = self.config
        start = time.perf_counter()
        w_star = locate_w_star(cfg, self.model)
        R = cfg.radius if cfg.radius is not None else path_radius(w_star)
        data = sample(self.model, cfg.rademacher_n, derive_seed(cfg.seed, TRAIN_STREAM), cfg.kappa_cap)
        loss = loss_for(cfg.loss, data, R)
        scalar_bound, gradient_bound = complexity_bounds(data.kappa, loss.lipschitz,
                                                         loss.smoothness, R, data.n)
        self._timed('setup', start)

        if self.verbose:
            print(f"\n{C.BOLD_WHITE}▶ Rademacher complexities, n={data.n}, R={R:.4f}, "
                  f"{cfg.loss} loss{C.RESET}")

        methods = self._methods(data.n)
        for k, method in enumerate(methods, 1):
            start = time.perf_counter()
            scalar = rademacher_scalar(data, R, method.value, cfg.draws, cfg.seed)
            gradient = rademacher_gradient(loss, data, R, method.value, cfg.draws, cfg.seed)
            self._timed(method.value, start)
            self.records.append(scalar.to_record(scalar_bound))
            self.records.append(gradient.to_record(gradient_bound))
            self._print_progress(k, len(methods), "methods")

        conc = concentration_bound(data.kappa, loss.lipschitz, loss.smoothness, R, data.n, cfg.delta)
        self.diagnostics = {
            'n': data.n,
            'd': data.d,
            'kappa': data.kappa,
            'R': R,
            'L': loss.lipschitz,
            'M': loss.smoothness,
            'concentration': conc.to_dict(),
            'within_bounds': all(r['value'] <= r['bound'] + 3.0 * r['std_error'] for r in self.records),
        }
        by_key = {(r['class'], r['method']): r for r in self.records}
        for kind in ('scalar', 'gradient'):
            pair = (by_key.get((kind, 'exhaustive')), by_key.get((kind, 'monte_carlo')))
            if all(pair):
                self.diagnostics[f'{kind}_methods_agree'] = agree(*pair)
        return self.records

    def print_results(self):
        if not self.records:
            return
        print(header("EMPIRICAL RADEMACHER COMPLEXITY"))
        print(f"  {'class':<9} │ {'method':<12} │ {'draws':>7} │ {'value':>11} │ {'± se':>9} │ {'bound':>11} │")
        print(f"  {'─' * 9}─┼─{'─' * 12}─┼─{'─' * 7}─┼─{'─' * 11}─┼─{'─' * 9}─┼─{'─' * 11}─┤")
        for r in self.records:
            ok = r['value'] <= r['bound'] + 3.0 * r['std_error']
            print(f"  {r['class']:<9} │ {r['method']:<12} │ {r['draws']:>7} │ "
                  f"{C.YELLOW}{r['value']:>11.4e}{C.RESET} │ {r['std_error']:>9.1e} │ "
                  f"{r['bound']:>11.4e} │ {status(ok)}")
        conc = self.diagnostics['concentration']
        print(f"\n  concentration bound (δ={self.config.delta:g}): "
              f"raw {conc['raw']:.4e}, simplified {conc['simplified']:.4e} "
              f"{'' if conc['valid'] else C.BOLD_RED + '(not valid at this n)' + C.RESET}")
        for kind in ('scalar', 'gradient'):
            key = f'{kind}_methods_agree'
            if key in self.diagnostics:
                print(f"  {kind} enumeration vs Monte Carlo: {status(self.diagnostics[key])}")

    def export(self):
        start = time.perf_counter()
        self._record(save_records_json(self.records, self.output_dir / JSON_NAME))
        self._timed('export', start)
        return self.finish()

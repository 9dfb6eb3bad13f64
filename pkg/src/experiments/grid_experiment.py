"""
Excess risk of the averaged iterate over a (γ, T) grid.

One streaming run of length max(T) per (γ, repetition) keeps the averaged
iterate at every T of the grid. The headline estimate is the excess risk on
the independent test sample (n_test = n_train/3 by default):

    mean_test[ℓ(y, ⟨x, v̄_T⟩) - ℓ(y, ⟨x, w*⟩)]

For the squared loss with regression labels the closed-form excess risk is
written to a second CSV next to it.
"""

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..analysis.bounds import path_radius
from ..colors import Colors, header, status
from ..data import train_test
from ..engine import DescentConfig, DivergenceError, run
from ..losses import LossKind
from ..oracle import OracleMode, build_oracle
from .config import ExperimentConfig
from .plots import plot_excess_heatmap
from .runner import Experiment, locate_w_star, loss_for, mean_and_sd, model_for, write_rows

log = logging.getLogger(__name__)

C = Colors

CSV_NAME = "grid_excess.csv"
ANALYTIC_CSV_NAME = "grid_excess_analytic.csv"
SVG_NAME = "grid_excess.svg"
COLUMNS = ['gamma', 'T', 'gamma_T', 'mean_excess', 'sd']

# pairwise relative difference allowed between cells with equal γT
EQUAL_PRODUCT_TOLERANCE = 0.25


@dataclass
class GridRun:
    """One (γ, repetition) task: excess risks at every T of the grid."""
    test_excess: Optional[np.ndarray]
    analytic_excess: Optional[np.ndarray]
    kappa: float
    smoothness: float
    diverged_at: Optional[int] = None


@dataclass
class GridResult:
    gammas: List[float]
    Ts: List[int]
    mean_excess: np.ndarray
    sd_excess: np.ndarray
    mean_analytic: Optional[np.ndarray] = None
    sd_analytic: Optional[np.ndarray] = None
    diverged: Dict[float, int] = field(default_factory=dict)
    kept: Dict[float, int] = field(default_factory=dict)


def _analytic_available(config: ExperimentConfig) -> bool:
    return config.loss == LossKind.SQUARED.value and config.label_mode == "regression"


def _grid_worker(args: Tuple[ExperimentConfig, float, int, np.ndarray, float]) -> GridRun:
    config, gamma, seed, w_star, R = args
    model = model_for(config)
    train, test = train_test(model, config.n_train, seed, config.test_size,
                             config.kappa_cap)
    loss = loss_for(config.loss, train, R)
    try:
        path = run(loss, train, DescentConfig(gamma=gamma, T=config.T_max), record="streaming",
                   checkpoints=config.Ts)
    except DivergenceError as exc:
        log.warning("gamma=%g seed=%d diverged at t=%d", gamma, seed, exc.iteration)
        return GridRun(None, None, train.kappa, loss.smoothness, exc.iteration)

    on_test = build_oracle(loss, model, OracleMode.MONTE_CARLO, holdout=test)
    test_excess = np.array([on_test.risk_difference(path.checkpoint_averages[T], w_star).value
                            for T in config.Ts])
    analytic = None
    if _analytic_available(config):
        exact = build_oracle(loss, model, OracleMode.ANALYTIC_SQUARED)
        analytic = np.array([exact.excess_risk(path.checkpoint_averages[T]) for T in config.Ts])
    return GridRun(test_excess, analytic, train.kappa, loss.smoothness)


def relative_difference(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def equal_product_spreads(gammas: List[float], Ts: List[int], mean_excess: np.ndarray,
                          tolerance: float = EQUAL_PRODUCT_TOLERANCE) -> List[Dict]:
    """Largest pairwise relative difference among cells with the same γT."""
    groups = defaultdict(list)
    for i, gamma in enumerate(gammas):
        for j, T in enumerate(Ts):
            groups[round(gamma * T, 9)].append((gamma, T, float(mean_excess[i, j])))

    spreads = []
    for product in sorted(groups):
        cells = groups[product]
        if len({c[0] for c in cells}) < 2:
            continue
        values = [c[2] for c in cells]
        if not np.all(np.isfinite(values)):
            worst = float('nan')
        else:
            worst = max(relative_difference(a, b) for k, a in enumerate(values) for b in values[k + 1:])
        spreads.append({
            'gamma_T': product,
            'cells': [[c[0], c[1]] for c in cells],
            'max_relative_difference': worst,
            'within_tolerance': bool(worst <= tolerance),
        })
    return spreads


def early_stop_diagnostics(gammas: List[float], Ts: List[int], mean_excess: np.ndarray) -> List[Dict]:
    """Per γ: the excess risk at the smallest T against the minimum over T."""
    rows = []
    for i, gamma in enumerate(gammas):
        row = mean_excess[i]
        finite = np.isfinite(row)
        best = int(np.nanargmin(np.where(finite, row, np.nan))) if np.any(finite) else None
        rows.append({
            'gamma': gamma,
            'first_T': Ts[0],
            'excess_at_first_T': float(row[0]),
            'min_excess': float(row[best]) if best is not None else float('nan'),
            'argmin_T': Ts[best] if best is not None else None,
            'first_exceeds_min': bool(best is not None and row[0] > row[best]),
        })
    return rows


class GridExperiment(Experiment):
    """
    Usage:
        experiment = GridExperiment(config)
        experiment.run()
        experiment.print_results()
        experiment.export()
    """

    command = "grid-experiment"

    def __init__(self, config: ExperimentConfig, verbose: bool = True):
        super().__init__(config, verbose)
        self.result: Optional[GridResult] = None

    def run(self) -> GridResult:
        cfg = self.config
        start = time.perf_counter()
        w_star = locate_w_star(cfg, self.model)
        R = path_radius(w_star)
        self._timed('w_star', start)

        if self.verbose:
            print(f"\n{C.BOLD_WHITE}▶ Excess-risk grid, {cfg.loss} loss, {len(cfg.gammas)} step sizes "
                  f"x {len(cfg.Ts)} stopping times x {cfg.repetitions} repetitions{C.RESET}")

        start = time.perf_counter()
        # ordered by (γ, repetition); aggregation below relies on it
        tasks = [(cfg, gamma, seed, w_star, R) for gamma in cfg.gammas for seed in self.seeds]
        runs = self._map(_grid_worker, tasks, "grid cells")
        self._timed('grid', start)

        n_g, reps, n_T = len(cfg.gammas), cfg.repetitions, len(cfg.Ts)
        test = np.full((n_g, reps, n_T), np.nan)
        analytic = np.full((n_g, reps, n_T), np.nan) if _analytic_available(cfg) else None
        diverged: Dict[float, int] = {}
        step_violations: Dict[float, bool] = {}
        for k, grid_run in enumerate(runs):
            i, r = divmod(k, reps)
            gamma = cfg.gammas[i]
            violated = gamma > 1.0 / (grid_run.kappa ** 2 * grid_run.smoothness)
            step_violations[gamma] = step_violations.get(gamma, False) or violated
            if grid_run.test_excess is None:
                diverged[gamma] = diverged.get(gamma, 0) + 1
                continue
            test[i, r] = grid_run.test_excess
            if analytic is not None:
                analytic[i, r] = grid_run.analytic_excess

        # diverged repetitions are NaN rows and drop out of the mean
        mean, sd = mean_and_sd(test, axis=1)
        kept = {gamma: reps - diverged.get(gamma, 0) for gamma in cfg.gammas}
        self.result = GridResult(gammas=list(cfg.gammas), Ts=list(cfg.Ts), mean_excess=mean,
                                 sd_excess=sd, diverged=diverged, kept=kept)
        if analytic is not None:
            self.result.mean_analytic, self.result.sd_analytic = mean_and_sd(analytic, axis=1)

        for gamma, violated in step_violations.items():
            if violated:
                log.warning("gamma=%g exceeds 1/(kappa^2 M) on at least one repetition", gamma)
        spreads = equal_product_spreads(self.result.gammas, self.result.Ts, mean)
        self.diagnostics = {
            'R': R,
            'w_star_norm': float(np.linalg.norm(w_star)),
            'headline_estimator': 'test_sample',
            'analytic_estimator_emitted': analytic is not None,
            'diverged_repetitions': {str(g): c for g, c in diverged.items()},
            'kept_repetitions': {str(g): c for g, c in kept.items()},
            'step_condition_violated': {str(g): v for g, v in step_violations.items()},
            'equal_product': spreads,
            'equal_product_all_within_tolerance': all(s['within_tolerance'] for s in spreads),
            'early_stopping': early_stop_diagnostics(self.result.gammas, self.result.Ts, mean),
        }
        return self.result

    def print_results(self):
        if self.result is None:
            return
        res = self.result
        print(header("EXCESS RISK OF THE AVERAGED ITERATE"))
        shown = [j for j in range(len(res.Ts)) if res.Ts[j] in (1, 10, 100, 200, 500, 1000)]
        shown = shown or list(range(min(6, len(res.Ts))))
        print(f"  {'γ':>6} │ " + " │ ".join(f"T={res.Ts[j]:<7}" for j in shown))
        print(f"  {'─' * 6}─┼─" + "─┼─".join("─" * 9 for _ in shown))
        for i, gamma in enumerate(res.gammas):
            cells = " │ ".join(f"{C.YELLOW}{res.mean_excess[i, j]:>9.4f}{C.RESET}" for j in shown)
            print(f"  {gamma:>6g} │ {cells}")

        print(f"\n{C.BOLD_YELLOW}Equal γT cells{C.RESET}")
        widest = sorted(self.diagnostics['equal_product'], key=lambda s: -len(s['cells']))[:8]
        for spread in sorted(widest, key=lambda s: s['gamma_T']):
            cells = ", ".join(f"({g:g},{t})" for g, t in spread['cells'])
            print(f"  γT={spread['gamma_T']:<8g} {cells:<40} "
                  f"max rel diff {spread['max_relative_difference']:.3f} "
                  f"{status(spread['within_tolerance'])}")

        print(f"\n{C.BOLD_YELLOW}Early stopping{C.RESET}")
        for row in self.diagnostics['early_stopping']:
            print(f"  γ={row['gamma']:<5g} T={row['first_T']}: {row['excess_at_first_T']:.4f} "
                  f"min {row['min_excess']:.4f} at T={row['argmin_T']} {status(row['first_exceeds_min'])}")

    def _rows(self, mean: np.ndarray, sd: np.ndarray):
        for i, gamma in enumerate(self.result.gammas):
            for j, T in enumerate(self.result.Ts):
                yield gamma, T, float(gamma * T), float(mean[i, j]), float(sd[i, j])

    def export(self):
        start = time.perf_counter()
        res = self.result
        self._record(write_rows(self.output_dir / CSV_NAME, COLUMNS, self._rows(res.mean_excess, res.sd_excess)))
        if res.mean_analytic is not None:
            self._record(write_rows(self.output_dir / ANALYTIC_CSV_NAME, COLUMNS,
                                    self._rows(res.mean_analytic, res.sd_analytic)))
        title = f"{self.config.loss}, n={self.config.n_train}, test-sample excess risk"
        self._record(plot_excess_heatmap(res.gammas, res.Ts, res.mean_excess,
                                         self.output_dir / SVG_NAME, title))
        self._timed('export', start)
        return self.finish()

"""
Distance of the gradient path to the population minimizer.

Each repetition draws a fresh training sample, runs gradient descent with a
constant step size and records ||v_t - w*|| for t = 1..T. The mean over
repetitions is compared with the 2R/3 containment threshold.
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..analysis.bounds import path_radius
from ..colors import Colors, header, status
from ..data import TRAIN_STREAM, derive_seed, sample
from ..engine import DescentConfig, DivergenceError, run
from .config import ExperimentConfig
from .plots import plot_distance_path
from .runner import Experiment, locate_w_star, loss_for, mean_and_sd, model_for, write_rows

log = logging.getLogger(__name__)

C = Colors

CSV_NAME = "path_distance.csv"
SVG_NAME = "path_distance.svg"


@dataclass
class PathResult:
    """Distances per repetition (rows) and iteration t = 1..T (columns)."""
    gamma: float
    T: int
    R: float
    distances: np.ndarray
    diverged: List[int]

    @property
    def threshold(self) -> float:
        return 2.0 * self.R / 3.0

    @property
    def mean_dist(self) -> np.ndarray:
        return mean_and_sd(self.distances)[0]

    @property
    def sd_dist(self) -> np.ndarray:
        return mean_and_sd(self.distances)[1]


def _path_worker(args: Tuple[ExperimentConfig, int, np.ndarray, float]) -> Optional[np.ndarray]:
    config, seed, w_star, R = args
    model = model_for(config)
    train = sample(model, config.n_train, derive_seed(seed, TRAIN_STREAM), config.kappa_cap)
    loss = loss_for(config.loss, train, R)
    cfg = DescentConfig(gamma=config.gammas[0], T=config.T_max)
    try:
        path = run(loss, train, cfg, record="streaming", reference=w_star)
    except DivergenceError as exc:
        log.warning("Repetition with seed %d diverged: %s", seed, exc)
        return None
    return path.distances[1:]


def path_diagnostics(mean_dist: np.ndarray, threshold: float) -> Dict:
    """Whether the mean curve crosses the threshold and keeps growing at the end."""
    above = np.flatnonzero(mean_dist > threshold)
    tail = mean_dist[-max(2, mean_dist.size // 10):] if mean_dist.size >= 2 else mean_dist
    increasing = bool(tail.size >= 2 and np.all(np.diff(tail) >= 0) and tail[-1] > tail[0])
    return {
        'threshold': float(threshold),
        'exceeds_threshold': bool(above.size > 0),
        'first_exceed_t': int(above[0]) + 1 if above.size else None,
        'final_decile_increasing': increasing,
        'final_mean_dist': float(mean_dist[-1]),
    }


class PathExperiment(Experiment):
    """
    Usage:
        experiment = PathExperiment(config)
        experiment.run()
        experiment.print_results()
        experiment.export()
    """

    command = "path-experiment"

    def __init__(self, config: ExperimentConfig, verbose: bool = True):
        super().__init__(config, verbose)
        self.result: Optional[PathResult] = None

    def run(self) -> PathResult:
        if len(self.config.gammas) > 1:
            log.warning("path-experiment uses one step size; ignoring %s", self.config.gammas[1:])
        gamma, T = self.config.gammas[0], self.config.T_max

        start = time.perf_counter()
        w_star = locate_w_star(self.config, self.model)
        R = path_radius(w_star)
        self._timed('w_star', start)

        if self.verbose:
            print(f"\n{C.BOLD_WHITE}▶ Gradient path, {self.config.loss} loss, γ={gamma:g}, T={T}{C.RESET}")

        start = time.perf_counter()
        tasks = [(self.config, seed, w_star, R) for seed in self.seeds]
        runs = self._map(_path_worker, tasks, "repetitions")
        self._timed('repetitions', start)

        diverged = [i for i, dist in enumerate(runs) if dist is None]
        kept = [dist for dist in runs if dist is not None]
        if not kept:
            raise DivergenceError(T, float('inf'))
        self.result = PathResult(gamma=gamma, T=T, R=R, distances=np.vstack(kept), diverged=diverged)

        self.diagnostics = path_diagnostics(self.result.mean_dist, self.result.threshold)
        self.diagnostics.update({'R': R, 'w_star_norm': float(np.linalg.norm(w_star)),
                                 'diverged_repetitions': diverged})
        return self.result

    def print_results(self):
        if self.result is None:
            return
        d = self.diagnostics
        print(header("GRADIENT PATH: DISTANCE TO w*"))
        print(f"  repetitions:          {self.result.distances.shape[0]} "
              f"({len(self.result.diverged)} diverged)")
        print(f"  R = max(1, 3||w*||):  {self.result.R:.4f}")
        print(f"  threshold 2R/3:       {self.result.threshold:.4f}")
        print(f"  final mean distance:  {C.BOLD_YELLOW}{d['final_mean_dist']:.4f}{C.RESET}")
        first = d['first_exceed_t']
        print(f"  exceeds threshold:    {status(d['exceeds_threshold'])}"
              + (f" {C.DIM}(first at t={first}){C.RESET}" if first else ""))
        print(f"  final decile growing: {status(d['final_decile_increasing'])}")

    def export(self):
        start = time.perf_counter()
        mean, sd = self.result.mean_dist, self.result.sd_dist
        rows = ((t, float(m), float(s)) for t, m, s in zip(range(1, self.result.T + 1), mean, sd))
        self._record(write_rows(self.output_dir / CSV_NAME, ['t', 'mean_dist', 'sd_dist'], rows))
        title = f"{self.config.loss}, γ={self.result.gamma:g}, n={self.config.n_train}"
        self._record(plot_distance_path(np.arange(1, self.result.T + 1), mean, sd,
                                        self.result.threshold, self.output_dir / SVG_NAME, title))
        self._timed('export', start)
        return self.finish()

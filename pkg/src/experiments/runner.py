"""
Shared plumbing for the experiment commands: repetition seeds, the worker
pool, per-dataset loss constants and the Experiment base class.
"""

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from .. import __version__
from ..colors import Colors
from ..data import Dataset, SyntheticModel, make_power_law_model
from ..losses import LossKind, LossModel, make_loss
from ..oracle import OracleMode, build_oracle, has_symmetric_minimizer
from .config import ExperimentConfig
from .manifest import RunManifest, write_json, write_timing

log = logging.getLogger(__name__)

C = Colors

A = TypeVar('A')
R = TypeVar('R')


def repetition_seeds(seed: int, count: int) -> List[int]:
    """Independent 64-bit seeds spawned from the root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def ordered_map(fn: Callable[[A], R], items: Iterable[A], jobs: int = 1,
                progress: Optional[Callable[[int, int], None]] = None) -> List[R]:
    """map() over a process pool; results come back in input order."""
    items = list(items)
    total = len(items)
    results: List[R] = []
    if jobs <= 1 or total <= 1:
        mapped = map(fn, items)
        for i, result in enumerate(mapped, 1):
            results.append(result)
            if progress:
                progress(i, total)
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for i, result in enumerate(pool.map(fn, items), 1):
            results.append(result)
            if progress:
                progress(i, total)
    return results


def model_for(config: ExperimentConfig) -> SyntheticModel:
    return make_power_law_model(config.d, noise_sd=config.noise_sd, labels=config.label_mode,
                            seed=config.seed)


def loss_for(kind: str, data: Dataset, radius: float) -> LossModel:
    """Loss constants valid on [-κR, κR] for this dataset (b = max |y| for the squared loss)."""
    kind = LossKind(kind)
    label_bound = data.label_bound if kind is LossKind.SQUARED else None
    return make_loss(kind, kappa=data.kappa, radius=radius, label_bound=label_bound)


def locate_w_star(config: ExperimentConfig, model: SyntheticModel) -> np.ndarray:
    """
    Population minimizer for the configured loss.

    The generating vector when the loss is symmetric around it, otherwise a
    numerical minimizer of the Monte-Carlo risk on a 10·n_train holdout.
    """
    kind = LossKind(config.loss)
    if has_symmetric_minimizer(kind, model.labels):
        return np.array(model.w_star)
    # constants do not enter the minimizer search
    loss = make_loss(kind, kappa=1.0, radius=1.0,
                     label_bound=1.0 if kind is LossKind.SQUARED else None)
    oracle = build_oracle(loss, model, OracleMode.MONTE_CARLO, m=config.holdout_m, seed=config.seed)
    return oracle.w_star


def mean_and_sd(values: np.ndarray, axis: int = 0):
    """
    Mean and sample standard deviation over the finite entries along `axis`.

    NaN marks a diverged repetition and is skipped. The sd is 0 with fewer
    than two finite entries; the mean is NaN with none.
    """
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    count = np.sum(finite, axis=axis)
    with np.errstate(invalid='ignore', divide='ignore'):
        mean = np.sum(np.where(finite, values, 0.0), axis=axis) / count
        deviations = np.where(finite, values - np.expand_dims(mean, axis), 0.0)
        var = np.sum(deviations ** 2, axis=axis) / (count - 1)
    mean = np.where(count > 0, mean, np.nan)
    sd = np.where(count > 1, np.sqrt(np.where(count > 1, var, 0.0)), 0.0)
    return mean, sd


def write_rows(filename, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV with repr() floats so values survive a round trip exactly."""
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    with open(filename, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])
    return filename


class Experiment:
    """
    Base class of the experiment commands.

    Subclasses implement run(), print_results() and export(); the base keeps
    the config, the per-repetition seeds, stage timings and the manifest.
    """

    command = ""

    def __init__(self, config: ExperimentConfig, verbose: bool = True):
        self.config = config
        self.verbose = verbose
        self.output_dir = Path(config.output_dir)
        self.seeds = repetition_seeds(config.seed, config.repetitions)
        self.model = model_for(config)
        self.timing: Dict[str, float] = {}
        self.diagnostics: Dict = {}
        self.manifest = RunManifest(command=self.command, config=config.to_dict(),
                                    code_version=__version__, seeds=list(self.seeds))

    def _timed(self, stage: str, start: float):
        self.timing[stage] = (time.perf_counter() - start) * 1000

    def _print_progress(self, current: int, total: int, label: Optional[str] = None, width: int = 30):
        """Progress bar for repetitions or grid cells."""
        if not self.verbose:
            return
        label = label or self.command
        percent = current / total
        filled = int(width * percent)
        bar = "█" * filled + "░" * (width - filled)
        print(f"\r  {C.CYAN}{label:<16}{C.RESET} [{C.GREEN}{bar}{C.RESET}] {current}/{total} "
              f"({percent*100:.0f}%)", end="", flush=True)
        if current == total:
            print()

    def _map(self, fn: Callable[[A], R], items: Sequence[A], label: Optional[str] = None) -> List[R]:
        return ordered_map(fn, items, self.config.jobs,
                           progress=lambda i, n: self._print_progress(i, n, label))

    def _record(self, path) -> Path:
        self.manifest.add_file(path, self.output_dir)
        return path

    def write_json(self, data, name: str) -> Path:
        return self._record(write_json(data, self.output_dir / name))

    def finish(self) -> Path:
        """Write timing.log and manifest.json; returns the manifest path."""
        write_timing(self.timing, self.output_dir)
        self.manifest.diagnostics = self.diagnostics
        path = self.manifest.write(self.output_dir)
        log.info("%s: wrote %d files to %s", self.command, len(self.manifest.files), self.output_dir)
        return path

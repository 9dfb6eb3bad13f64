"""
Implicit regularization of early-stopped gradient descent on linear models.

Batch gradient descent on the empirical risk of a linear predictor, with
the machinery to measure how step size and stopping time regularize it:

- losses: four convex losses with constants on a working interval
- data: seeded synthetic Gaussian designs
- engine: gradient descent with full or streaming path recording
- oracle: population risk and gradient (closed form or Monte Carlo)
- analysis: excess-risk decompositions and bounds
- concentration: Rademacher complexities and gradient concentration
- experiments: the command harness behind gd_experiments.py
"""

__version__ = "1.0.0"

from .data import Dataset, SyntheticModel, make_power_law_model, sample, train_test
from .engine import DescentConfig, DescentPath, DivergenceError, run
from .losses import LossKind, LossModel, make_loss
from .oracle import PopulationOracle, build_oracle

__all__ = [
    "Dataset",
    "DescentConfig",
    "DescentPath",
    "DivergenceError",
    "LossKind",
    "LossModel",
    "PopulationOracle",
    "SyntheticModel",
    "build_oracle",
    "make_loss",
    "make_power_law_model",
    "run",
    "sample",
    "train_test",
]

"""
Gradient descent engine: update rule, recording modes and failure handling.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import csv

import numpy as np
import pytest

from src.data import Dataset, make_power_law_model, sample
from src.engine import (
    DescentConfig,
    DimensionError,
    DivergenceError,
    averaged_iterate,
    check_descent,
    empirical_gradient,
    empirical_risk,
    export_path_csv,
    last_iterate,
    reconstruct_last,
    run,
)
from src.losses import make_loss


class TestGradients:

    def setup_method(self):
        self.data = Dataset.from_arrays(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, -1.0]))
        self.loss = make_loss("squared", kappa=1.0, radius=2.0, label_bound=1.0)

    def test_empirical_risk(self):
        # residuals 1 and -1 at w = 0
        assert empirical_risk(self.loss, self.data, np.zeros(2)) == 1.0

    def test_empirical_gradient(self):
        grad = empirical_gradient(self.loss, self.data, np.zeros(2))
        assert np.allclose(grad, [-1.0, 1.0]), "(1/n) Σ 2(⟨x, w⟩ - y) x at w = 0"

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            empirical_gradient(self.loss, self.data, np.zeros(3))


class TestRun:

    def setup_method(self):
        self.model = make_power_law_model(8, seed=0)
        self.data = sample(self.model, 200, seed=1)
        self.loss = make_loss("squared", kappa=self.data.kappa, radius=3.0,
                              label_bound=self.data.label_bound)
        self.gamma = 1.0 / (self.data.kappa ** 2 * self.loss.smoothness)

    def test_single_step_matches_update(self):
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=1))
        expected = -self.gamma * empirical_gradient(self.loss, self.data, np.zeros(8))
        assert np.allclose(path.last, expected), "v_1 = v_0 - γ ∇L̂(v_0)"
        assert np.allclose(averaged_iterate(path), path.last), "for T = 1 the average is v_1"

    def test_full_recording_shapes(self):
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=25))
        assert path.iterates.shape == (26, 8) and path.empirical_gradients.shape == (25, 8)
        assert np.array_equal(path.iterates[0], np.zeros(8)), "default start is the origin"
        assert np.array_equal(last_iterate(path), path.iterates[-1])
        assert np.allclose(averaged_iterate(path), path.iterates[1:].mean(axis=0)), \
            "the average excludes v_0"

    def test_telescoping_reconstruction(self):
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=40))
        assert np.allclose(reconstruct_last(path), path.last, atol=1e-12), \
            "v_T = v_0 - γ Σ ∇L̂(v_t)"

    def test_streaming_matches_full(self):
        cfg = DescentConfig(gamma=self.gamma, T=30)
        full = run(self.loss, self.data, cfg, record="full")
        stream = run(self.loss, self.data, cfg, record="streaming", checkpoints=[1, 10, 30])
        assert stream.iterates is None and not stream.is_full
        assert np.allclose(stream.last, full.last, atol=1e-14)
        assert np.allclose(stream.average, full.average, atol=1e-12)
        for T in (1, 10, 30):
            assert np.allclose(stream.checkpoint_averages[T], full.iterates[1:T + 1].mean(axis=0),
                               atol=1e-12), f"checkpoint average at T={T} is off"

    def test_reference_distances(self):
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=10), reference=self.model.w_star)
        expected = np.linalg.norm(path.iterates - self.model.w_star, axis=1)
        assert np.allclose(path.distances, expected), "distances to the reference for t = 0..T"

    def test_descent_with_admissible_step(self):
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=50))
        holds, metrics = check_descent(path)
        assert holds, f"empirical risk must not increase for γ <= 1/(κ²M): {metrics}"

    def test_zero_step_stays_put(self):
        v0 = np.full(8, 0.3)
        path = run(self.loss, self.data, DescentConfig(gamma=0.0, T=5, v0=v0))
        assert np.array_equal(path.last, v0), "γ = 0 keeps every iterate at v_0"

    def test_custom_start(self):
        v0 = np.arange(8, dtype=float) / 10
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=3, v0=v0))
        assert np.array_equal(path.v0, v0) and np.array_equal(path.iterates[0], v0)

    def test_divergence_raises(self):
        with pytest.raises(DivergenceError) as info:
            run(self.loss, self.data, DescentConfig(gamma=1e3, T=1000))
        assert info.value.iteration >= 1, "the error carries the iteration index"

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            DescentConfig(gamma=-1.0, T=5)
        with pytest.raises(ValueError):
            DescentConfig(gamma=0.1, T=0)
        with pytest.raises(DimensionError):
            run(self.loss, self.data, DescentConfig(gamma=0.1, T=2, v0=np.zeros(3)))
        with pytest.raises(ValueError):
            run(self.loss, self.data, DescentConfig(gamma=0.1, T=5), record="sparse")
        with pytest.raises(ValueError):
            run(self.loss, self.data, DescentConfig(gamma=0.1, T=5), checkpoints=[6])

    def test_streaming_path_cannot_reconstruct(self):
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=5), record="streaming")
        with pytest.raises(ValueError):
            reconstruct_last(path)

    def test_export_csv(self, tmp_path):
        path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=4), reference=self.model.w_star)
        out = export_path_csv(path, tmp_path / "path.csv")
        with open(out, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['t', 'norm', 'dist_to_w_star', 'empirical_risk']
        assert len(rows) == 6, "header plus one row for each t = 0..T"

"""
Population risk oracle: analytic squared-loss values, Monte-Carlo estimates
and the risk property checks.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import numpy as np
import pytest

from src.data import Dataset, make_power_law_model, sample
from src.engine import DimensionError, empirical_gradient
from src.losses import make_loss
from src.oracle import (
    OracleMode,
    OracleModeError,
    PopulationOracle,
    build_oracle,
    check_minimizer,
    check_risk_properties,
    gradient_noise,
    has_symmetric_minimizer,
)


class TestAnalyticOracle:

    def setup_method(self):
        self.model = make_power_law_model(5, noise_sd=0.5)
        self.loss = make_loss("squared", kappa=3.0, radius=3.0, label_bound=5.0)
        self.oracle = build_oracle(self.loss, self.model)

    def test_auto_picks_analytic(self):
        assert self.oracle.mode is OracleMode.ANALYTIC_SQUARED, \
            "squared loss with regression labels has a closed form"
        assert self.oracle.tolerance_scale == 0.0

    def test_risk_at_minimizer_is_noise_variance(self):
        assert self.oracle.population_risk(self.model.w_star) == pytest.approx(0.25), \
            "L(w*) = noise_sd^2"
        assert self.oracle.excess_risk(self.model.w_star) == 0.0

    def test_closed_form_values(self):
        w = np.zeros(5)
        expected = float(np.sum(self.model.sigma_diag * self.model.w_star ** 2))
        assert self.oracle.excess_risk(w) == pytest.approx(expected, rel=1e-14), \
            "excess risk is (w - w*)ᵀ Σ (w - w*)"
        grad = self.oracle.population_gradient(w)
        assert np.allclose(grad, -2.0 * self.model.sigma_diag * self.model.w_star), \
            "∇L(w) = 2 Σ (w - w*)"

    def test_risk_difference(self):
        v, w = np.ones(5), np.zeros(5)
        diff = self.oracle.risk_difference(v, w)
        expected = self.oracle.population_risk(v) - self.oracle.population_risk(w)
        assert diff.value == pytest.approx(expected, rel=1e-12) and diff.std_error == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            self.oracle.population_risk(np.zeros(4))

    def test_analytic_mode_rejects_other_losses(self):
        logistic = make_loss("logistic_regression", kappa=3.0, radius=3.0)
        with pytest.raises(OracleModeError):
            PopulationOracle(logistic, self.model, OracleMode.ANALYTIC_SQUARED)
        sign_model = make_power_law_model(5, labels="sign")
        with pytest.raises(OracleModeError):
            PopulationOracle(self.loss, sign_model, OracleMode.ANALYTIC_SQUARED)

    def test_risk_properties(self):
        holds, metrics = check_risk_properties(self.oracle, kappa=3.0, radius=3.0, n_pairs=50)
        assert holds, f"population risk must be convex, κL-Lipschitz and κ²M-smooth: {metrics}"

    def test_minimizer(self):
        holds, metrics = check_minimizer(self.oracle, n_perturbations=50)
        assert holds and metrics['gradient_norm_at_w_star'] == 0.0


class TestMonteCarloOracle:

    def setup_method(self):
        self.model = make_power_law_model(4, noise_sd=0.5)
        self.loss = make_loss("squared", kappa=3.0, radius=3.0, label_bound=5.0)
        self.analytic = build_oracle(self.loss, self.model, mode="analytic_squared")
        self.mc = build_oracle(self.loss, self.model, mode="monte_carlo", m=20_000, seed=3)

    def test_needs_holdout_size(self):
        with pytest.raises(ValueError):
            PopulationOracle(self.loss, self.model, OracleMode.MONTE_CARLO)

    def test_agrees_with_closed_form(self):
        for w in (np.zeros(4), np.full(4, 0.5)):
            est = self.mc.risk_estimate(w)
            exact = self.analytic.population_risk(w)
            assert est.std_error > 0, "Monte-Carlo estimates carry a standard error"
            assert abs(est.value - exact) <= 4.0 * est.std_error, \
                f"Monte-Carlo risk {est.value} too far from {exact} (SE {est.std_error})"

    def test_gradient_agrees_with_closed_form(self):
        w = np.full(4, 0.5)
        mean, se = self.mc.gradient_estimate(w)
        exact = self.analytic.population_gradient(w)
        assert np.all(np.abs(mean - exact) <= 4.0 * se + 1e-12), \
            f"coordinates outside 4 SE: {mean - exact} vs {se}"

    def test_chunked_sums_are_split_independent(self):
        # 20_000 > chunk size; the single-pass and chunked paths must agree closely
        w = np.full(4, 0.2)
        mean, _ = self.mc.gradient_estimate(w)
        direct = empirical_gradient(self.loss, self.mc.holdout, w)
        assert np.allclose(mean, direct, rtol=1e-12, atol=1e-14)

    def test_holdout_as_training_data_has_zero_noise(self):
        oracle = build_oracle(self.loss, self.model, mode="monte_carlo", m=2000, seed=5)
        noise = gradient_noise(oracle, self.loss, oracle.holdout, np.full(4, 0.3))
        assert np.array_equal(noise, np.zeros(4)), \
            "the empirical gradient on the holdout is the Monte-Carlo gradient"

    def test_excess_clamps_small_negatives(self):
        # w* = 1 in d = 1; on this holdout w = 1.15 beats w* by (0.15)² with SE ≈ 0.019
        model = make_power_law_model(1)
        holdout = Dataset.from_arrays(np.ones((4, 1)), np.array([1.3, 1.1, 1.2, 1.0]))
        oracle = build_oracle(self.loss, model, mode="monte_carlo", holdout=holdout)
        est = oracle.excess_estimate(np.array([1.15]))
        assert est.raw == pytest.approx(-0.0225) and est.std_error == pytest.approx(0.019365, rel=1e-4)
        assert est.value == 0.0, "negatives within 3 SE are reported as 0"

    def test_excess_keeps_large_negatives(self):
        model = make_power_law_model(1)
        holdout = Dataset.from_arrays(np.ones((4, 1)), np.array([2.0, 2.0, 2.0, 2.01]))
        oracle = build_oracle(self.loss, model, mode="monte_carlo", holdout=holdout)
        est = oracle.excess_estimate(np.array([2.0]))
        assert est.raw == pytest.approx(-1.005)
        assert est.raw < -3.0 * est.std_error
        assert est.value == est.raw, "negatives beyond 3 SE are reported as measured"

    def test_explicit_holdout(self):
        holdout = sample(self.model, 500, seed=42)
        oracle = build_oracle(self.loss, self.model, mode="monte_carlo", holdout=holdout)
        assert oracle.m == 500 and oracle.holdout is holdout
        wrong = sample(make_power_law_model(3), 10, seed=0)
        with pytest.raises(DimensionError):
            build_oracle(self.loss, self.model, mode="monte_carlo", holdout=wrong)

    def test_summary_record(self):
        record = self.mc.summary()
        assert record['mode'] == "monte_carlo" and record['m'] == 20_000
        assert record['w_star_is_approximate'] is False, \
            "w* is exact for the squared loss with symmetric noise"


class TestNumericMinimizer:

    def test_classification_minimizer_is_located(self):
        model = make_power_law_model(3, labels="sign")
        loss = make_loss("logistic_classification", kappa=3.0, radius=5.0)
        oracle = build_oracle(loss, model, m=5000, seed=1)
        assert oracle.mode is OracleMode.MONTE_CARLO
        assert oracle.w_star_is_approximate, "w* must be flagged as located numerically"
        grad = empirical_gradient(loss, oracle.holdout, oracle.w_star)
        assert np.linalg.norm(grad) <= 1e-3, "holdout gradient must vanish at the located w*"


class TestSymmetricMinimizer:

    def setup_method(self):
        self.model = make_power_law_model(4, noise_sd=0.5)
        self.loss = make_loss("logistic_regression", kappa=3.0, radius=3.0)
        self.oracle = build_oracle(self.loss, self.model, m=20_000, seed=7)

    def test_symmetry_rule(self):
        assert has_symmetric_minimizer("squared", "regression")
        assert has_symmetric_minimizer("logistic_regression", "regression")
        assert not has_symmetric_minimizer("squared", "sign")
        assert not has_symmetric_minimizer("exponential", "sign")

    def test_generating_vector_is_used(self):
        assert self.oracle.mode is OracleMode.MONTE_CARLO
        assert not self.oracle.w_star_is_approximate
        assert np.array_equal(self.oracle.w_star, self.model.w_star)

    def test_generating_vector_minimizes_the_risk(self):
        holds, metrics = check_minimizer(self.oracle, n_perturbations=100)
        assert holds, f"L(w*) must not exceed L(w* + u) beyond 3 SE: {metrics}"
        grad, se = self.oracle.gradient_estimate(self.oracle.w_star)
        assert np.all(np.abs(grad) <= 4.0 * se), \
            f"the gradient at w* must vanish up to sampling error: {grad} vs {se}"

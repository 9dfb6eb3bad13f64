"""
Excess-risk analysis: the averaging identity, step and recursion residuals,
both decompositions and the bound formulas.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.analysis import (
    averaging_identity,
    build_bound_report,
    check_bounded_path,
    check_path_recursion,
    check_risk_step,
    correction_weights,
    decompose,
    excess_risk_bounds,
    export_step_terms_csv,
    log_term,
    path_radius,
    path_recursion_residuals,
    sample_size_condition,
    save_report_json,
    schedule_gamma_T,
    step_size_condition,
)
from src.analysis import decomposition
from src.data import make_power_law_model, sample
from src.engine import DescentConfig, DescentPath, run
from src.losses import make_loss
from src.oracle import build_oracle


class TestAveragingIdentity:

    def test_correction_weights(self):
        assert np.allclose(correction_weights(3), [1 / 2, 1 / 6]), "weights 1/(t(t+1)) for t = 1, 2"
        assert correction_weights(1).size == 0

    def test_hand_computed(self):
        lhs, rhs = averaging_identity([1.0, 2.0, 3.0])
        assert lhs == 3.0 and rhs == pytest.approx(3.0, abs=1e-15)

    def test_single_entry(self):
        assert averaging_identity([4.5]) == (4.5, 4.5)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            averaging_identity([])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=300))
    def test_identity_is_exact(self, q):
        lhs, rhs = averaging_identity(q)
        assert abs(lhs - rhs) <= 1e-9, f"identity off by {abs(lhs - rhs)} for T={len(q)}"


class TestDecomposition:
    """Squared loss with the analytic oracle, so every inequality is checked to 1e-8."""

    def setup_method(self):
        self.model = make_power_law_model(6, noise_sd=0.5, seed=0)
        self.data = sample(self.model, 300, seed=2)
        R = path_radius(self.model.w_star)
        self.loss = make_loss("squared", kappa=self.data.kappa, radius=R,
                              label_bound=self.data.label_bound)
        self.oracle = build_oracle(self.loss, self.model)
        self.gamma = 1.0 / (self.data.kappa ** 2 * self.loss.smoothness)
        self.path = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=40))

    def test_both_decompositions_hold(self):
        report = decompose(self.loss, self.data, self.oracle, self.path)
        assert report.precondition_ok
        assert report.holds_avg, f"averaged decomposition fails: {report.lhs_avg} vs {report.rhs_avg}"
        assert report.holds_last, f"last-iterate decomposition fails: {report.lhs_last} vs {report.rhs_last}"
        assert report.rhs_avg == pytest.approx(report.bias_term + np.mean(report.variance_terms))
        assert report.correction_terms.shape == (39,)

    def test_step_residuals_non_positive(self):
        report = decompose(self.loss, self.data, self.oracle, self.path)
        assert np.max(report.step_residuals) <= 1e-8, "one-step risk inequality violated"
        for t in (1, 20, 40):
            residual, metrics = check_risk_step(self.loss, self.data, self.oracle, self.path, t,
                                                self.model.w_star)
            assert residual <= 1e-8 and metrics['std_error'] == 0.0
            assert residual == pytest.approx(report.step_residuals[t - 1], abs=1e-12), \
                "single-step residual must match the vectorized one"

    def test_recursion_residuals_non_positive(self):
        residuals, metrics = path_recursion_residuals(self.loss, self.data, self.oracle, self.path)
        assert metrics['precondition_ok']
        assert residuals.shape == (40,) and np.max(residuals) <= 1e-8, \
            "recursive distance bound violated"
        residual, _ = check_path_recursion(self.loss, self.data, self.oracle, self.path, 10)
        assert residual == residuals[10]

    def test_index_checks(self):
        with pytest.raises(ValueError):
            check_risk_step(self.loss, self.data, self.oracle, self.path, 0, self.model.w_star)
        with pytest.raises(ValueError):
            check_path_recursion(self.loss, self.data, self.oracle, self.path, 40)

    def test_streaming_path_is_rejected(self):
        stream = run(self.loss, self.data, DescentConfig(gamma=self.gamma, T=5), record="streaming")
        with pytest.raises(ValueError):
            decompose(self.loss, self.data, self.oracle, stream)

    def test_flipped_variance_sign_is_detected(self, monkeypatch):
        # started at w*, one step: the variance term is γ||∇L̂(w*)||² > 0
        cfg = DescentConfig(gamma=self.gamma, T=1, v0=np.array(self.model.w_star))
        path = run(self.loss, self.data, cfg)
        assert decompose(self.loss, self.data, self.oracle, path).holds_avg

        original = decomposition._variance_terms
        monkeypatch.setattr(decomposition, "_variance_terms",
                            lambda p, noise, w: -original(p, noise, w))
        report = decompose(self.loss, self.data, self.oracle, path)
        assert not report.holds_avg, "a sign error in the variance term must break the check"

    def test_export(self, tmp_path):
        report = decompose(self.loss, self.data, self.oracle, self.path)
        residuals, _ = path_recursion_residuals(self.loss, self.data, self.oracle, self.path)
        out = export_step_terms_csv(report, residuals, tmp_path / "steps.csv")
        with open(out, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['t', 'bias_contrib', 'variance_term', 'residual_risk_step', 'residual_recursion']
        assert len(rows) == 41
        saved = json.loads(save_report_json(report, tmp_path / "report.json").read_text())
        assert saved['holds_avg'] is True and len(saved['variance_terms']) == 40


class TestBoundFormulas:

    def test_log_term(self):
        assert log_term(4 / math.e) == pytest.approx(1.0)
        for delta in (0.0, 4.0, -1.0):
            with pytest.raises(ValueError):
                log_term(delta)

    def test_path_radius(self):
        assert path_radius(np.zeros(3)) == 1.0, "R is at least 1"
        assert path_radius(np.array([1.0, 0.0])) == 3.0, "R = 3||w*||"

    def test_step_size_condition(self):
        assert step_size_condition(0.5, kappa=1.0, M=2.0)
        assert not step_size_condition(0.6, kappa=1.0, M=2.0)
        assert not step_size_condition(1.5, kappa=1.0, M=0.25), "γ is also capped at 1"

    def test_schedule_meets_condition_exactly(self):
        gamma_T = schedule_gamma_T(10_000, 1.0, 1.0, 1.0, 0.05)
        assert sample_size_condition(10_000, gamma_T, 1.0, 1.0, 1.0, 0.05), \
            "the scheduled γT satisfies the sample-size condition"
        assert not sample_size_condition(10_000, 1.01 * gamma_T, 1.0, 1.0, 1.0, 0.05), \
            "and it is the largest such value"

    def test_excess_risk_bounds_values(self):
        # T = e makes log T = 1; δ = 4/e makes log(4/δ) = 1
        avg, last = excess_risk_bounds(100, 1.0, math.e, 4 / math.e, np.array([1.0, 0.0]), 1.0, 1.0, 1.0)
        bias = 1.0 / (2.0 * math.e)
        assert avg == pytest.approx(bias + 180 * 0.2), "180 max{1,||w*||²} κ²(M+L) √(log(4/δ)/n)"
        assert last == pytest.approx(bias + 425 * 0.2)

    def test_excess_risk_bounds_rejects_bad_input(self):
        with pytest.raises(ValueError):
            excess_risk_bounds(100, 0.0, 5, 0.05, np.ones(2), 1.0, 1.0, 1.0)

    def test_build_bound_report(self, tmp_path):
        report = build_bound_report(100, 1.0, 10, 4 / math.e, np.array([1.0, 0.0]), 1.0, 1.0, 1.0)
        assert report.R == 3.0 and report.gamma_T == 10.0
        assert report.concentration_bound == pytest.approx(20 * 3 * 2 * 0.1), "20 κ² R (L + M) √(log(4/δ)/n)"
        assert not report.n_condition_ok, "γT = 10 is far beyond the schedule for n = 100"
        assert report.step_condition_ok
        saved = json.loads(save_report_json(report, tmp_path / "bounds.json").read_text())
        assert saved['avg_bound'] == report.avg_bound


class TestBoundedPath:

    def _path(self, norms, distances):
        return DescentPath(gamma=1.0, T=len(norms) - 1, mode="streaming", v0=np.zeros(2),
                           last=np.zeros(2), average=np.zeros(2), norms=np.asarray(norms),
                           empirical_risks=np.zeros(len(norms)),
                           distances=None if distances is None else np.asarray(distances))

    def test_contained_path(self):
        path = self._path([0.0, 1.0, 2.0], [1.0, 1.5, 2.0])
        assert check_bounded_path(path, np.array([1.0, 0.0]), R=3.0) == (True, None)

    def test_first_violation(self):
        path = self._path([0.0, 1.0, 2.0, 5.0], [1.0, 1.0, 2.5, 1.0])
        assert check_bounded_path(path, np.array([1.0, 0.0]), R=3.0) == (False, 2), \
            "||v_2 - w*|| = 2.5 exceeds 2R/3 = 2"

    def test_streaming_needs_distances(self):
        with pytest.raises(ValueError):
            check_bounded_path(self._path([0.0, 1.0], None), np.zeros(2), R=3.0)

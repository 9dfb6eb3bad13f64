"""
Experiment harness: configuration, seeds, manifests, diagnostics and small
end-to-end runs of the commands.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import csv
import json
import math

import numpy as np
import pytest

from src.analysis import schedule_gamma_T
from src.data import TRAIN_STREAM, derive_seed, sample
from src.engine import DivergenceError
from src.experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    GridExperiment,
    PathExperiment,
    RademacherExperiment,
    RunManifest,
    VerificationSuite,
    config_from_dict,
    early_stop_diagnostics,
    equal_product_spreads,
    ordered_map,
    path_diagnostics,
    repetition_seeds,
    resolve_config,
    schedule,
)
from src.experiments.config import COMMANDS, OUTPUT_DIR_ENV, default_T_grid
from src.experiments.manifest import MANIFEST_NAME, TIMING_NAME, write_json, write_timing
from src.experiments import grid_experiment
from src.experiments.runner import mean_and_sd, model_for, write_rows


def read_csv(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


class TestConfig:

    def test_command_defaults(self):
        grid = resolve_config("grid-experiment")
        assert grid.loss == "logistic_regression" and grid.repetitions == 20
        assert grid.gammas == [float(g) for g in range(2, 11)]
        path = resolve_config("path-experiment", full_scale=True)
        assert path.n_train == 10_000 and path.repetitions == 100 and path.Ts == [1000]

    def test_default_T_grid(self):
        grid = default_T_grid(1000)
        for T in (1, 100, 200, 500, 1000):
            assert T in grid, f"T={T} must be on the desk-scale grid"
        assert grid == sorted(grid) and 20 <= len(grid) <= 35

    def test_toml_layers(self, tmp_path):
        config_file = tmp_path / "experiment.toml"
        config_file.write_text('seed = 3\nrepetitions = 7\n\n[grid-experiment]\nrepetitions = 2\n'
                               'Ts = [10, 1, 10]\n')
        config = resolve_config("grid-experiment", str(config_file), {'jobs': 4, 'd': None})
        assert config.seed == 3, "top-level keys apply to every command"
        assert config.repetitions == 2, "the command table overrides the top level"
        assert config.jobs == 4, "command-line overrides win"
        assert config.d == 100, "None overrides are ignored"
        assert config.Ts == [1, 10], "stopping times are sorted and deduplicated"

    def test_unknown_key_names_the_field(self, tmp_path):
        config_file = tmp_path / "bad.toml"
        config_file.write_text('step = 0.5\n')
        with pytest.raises(ConfigError) as info:
            resolve_config("grid-experiment", str(config_file))
        assert info.value.field == "step"

    def test_missing_file(self):
        with pytest.raises(ConfigError) as info:
            resolve_config("bounds", "/nonexistent/experiment.toml")
        assert info.value.field == "config"

    def test_validation(self):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig(loss="hinge")
        assert info.value.field == "loss"
        with pytest.raises(ConfigError) as info:
            ExperimentConfig(loss="exponential", labels="regression")
        assert info.value.field == "labels"
        with pytest.raises(ConfigError):
            ExperimentConfig(gammas=[0.0])
        with pytest.raises(ConfigError):
            ExperimentConfig(loss="logistic_regression", oracle="analytic_squared")
        with pytest.raises(ConfigError):
            resolve_config("unknown-command")
        with pytest.raises(ConfigError) as info:
            ExperimentConfig(kappa_cap=0.2)
        assert info.value.field == "kappa_cap", "a cap below 1 cannot give κ >= 1"
        assert ExperimentConfig(kappa_cap=1.0).kappa_cap == 1.0

    def test_label_mode_follows_loss(self):
        assert ExperimentConfig(loss="logistic_classification").label_mode == "sign"
        assert ExperimentConfig(loss="squared").label_mode == "regression"

    def test_derived_sizes(self):
        config = ExperimentConfig(n_train=90)
        assert config.test_size == 30 and config.holdout_m == 900

    def test_output_dir_from_environment(self, monkeypatch):
        monkeypatch.setenv(OUTPUT_DIR_ENV, "/tmp/gd-results")
        assert ExperimentConfig().output_dir == "/tmp/gd-results"


class TestRunnerHelpers:

    def test_repetition_seeds(self):
        seeds = repetition_seeds(0, 10)
        assert seeds == repetition_seeds(0, 10), "seeds must be reproducible"
        assert len(set(seeds)) == 10, "repetition seeds must be distinct"
        assert seeds[:3] == repetition_seeds(0, 3), "adding repetitions keeps the earlier seeds"

    def test_ordered_map_serial(self):
        calls = []
        out = ordered_map(lambda x: x * x, [3, 1, 2], jobs=1, progress=lambda i, n: calls.append((i, n)))
        assert out == [9, 1, 4]
        assert calls == [(1, 3), (2, 3), (3, 3)]

    def test_ordered_map_pool_keeps_order(self):
        assert ordered_map(abs, [-3, 1, -2, 5, -4], jobs=2) == [3, 1, 2, 5, 4]

    def test_mean_and_sd(self):
        mean, sd = mean_and_sd(np.array([[1.0, 2.0]]))
        assert np.array_equal(mean, [1.0, 2.0]) and np.array_equal(sd, [0.0, 0.0]), \
            "a single repetition has zero spread"
        mean, sd = mean_and_sd(np.array([[1.0], [3.0]]))
        assert mean[0] == 2.0 and sd[0] == pytest.approx(math.sqrt(2.0))

    def test_mean_and_sd_skips_diverged_repetitions(self):
        nan = float('nan')
        mean, sd = mean_and_sd(np.array([[1.0, nan, nan], [3.0, 5.0, nan]]))
        assert mean[0] == 2.0 and mean[1] == 5.0, "NaN entries drop out of the mean"
        assert sd[0] == pytest.approx(math.sqrt(2.0)) and sd[1] == 0.0
        assert math.isnan(mean[2]) and sd[2] == 0.0, "a column without finite entries has no mean"

    def test_write_rows_keeps_full_precision(self, tmp_path):
        out = write_rows(tmp_path / "rows.csv", ['a', 'b'], [(1, 0.1 + 0.2)])
        rows = read_csv(out)
        assert rows == [['a', 'b'], ['1', '0.30000000000000004']]


class TestManifest:

    def test_write_and_load(self, tmp_path):
        manifest = RunManifest(command="bounds", config={'seed': 1}, code_version="1.0.0", seeds=[5, 6])
        manifest.add_file(tmp_path / "bound_report.json", tmp_path)
        manifest.add_file(tmp_path / "bound_report.json", tmp_path)
        path = manifest.write(tmp_path)
        assert path.name == MANIFEST_NAME
        loaded = RunManifest.load(path)
        assert loaded == manifest and loaded.files == ["bound_report.json"]

    def test_schema_mismatch(self, tmp_path):
        path = tmp_path / MANIFEST_NAME
        path.write_text(json.dumps({'command': 'bounds', 'config': {}, 'code_version': '0',
                                    'schema_version': 99}))
        with pytest.raises(ValueError):
            RunManifest.load(path)

    def test_non_finite_values_become_null(self, tmp_path):
        out = write_json({'b': float('nan'), 'a': np.float64(2.5), 'c': [np.int64(3)]}, tmp_path / "x.json")
        text = out.read_text()
        assert json.loads(text) == {'a': 2.5, 'b': None, 'c': [3]}
        assert text.endswith("\n") and text.index('"a"') < text.index('"b"'), "keys are sorted"

    def test_timing_log(self, tmp_path):
        path = write_timing({'grid': 1234.56, 'export': 7.0}, tmp_path)
        assert path.name == TIMING_NAME
        assert path.read_text() == "grid 1234.6\nexport 7.0\n"


class TestDiagnostics:

    def test_equal_product_groups(self):
        mean = np.array([[5.0, 1.0], [1.1, 0.5]])
        spreads = equal_product_spreads([1.0, 2.0], [2, 4], mean)
        assert len(spreads) == 1, "only γT = 4 is reached by two step sizes"
        spread = spreads[0]
        assert spread['gamma_T'] == 4.0 and spread['cells'] == [[1.0, 4], [2.0, 2]]
        assert spread['max_relative_difference'] == pytest.approx(0.1 / 1.1)
        assert spread['within_tolerance']

    def test_early_stopping(self):
        rows = early_stop_diagnostics([2.0], [1, 10, 100], np.array([[3.0, 1.0, 2.0]]))
        assert rows[0]['argmin_T'] == 10 and rows[0]['first_exceeds_min']
        assert rows[0]['min_excess'] == 1.0

    def test_path_diagnostics(self):
        mean_dist = np.linspace(0.0, 2.0, 20)
        d = path_diagnostics(mean_dist, threshold=1.0)
        assert d['exceeds_threshold'] and d['first_exceed_t'] == 11
        assert d['final_decile_increasing'] and d['final_mean_dist'] == 2.0

    def test_path_diagnostics_flat(self):
        d = path_diagnostics(np.full(10, 0.5), threshold=1.0)
        assert not d['exceeds_threshold'] and d['first_exceed_t'] is None
        assert not d['final_decile_increasing']


class TestSchedule:

    def test_short_schedule_keeps_minimum_T(self):
        gamma, T = schedule(10_000, 1.0, 1.0, 1.0, 0.05, min_T=3)
        assert T == 3
        assert gamma * T == pytest.approx(schedule_gamma_T(10_000, 1.0, 1.0, 1.0, 0.05))

    def test_long_schedule_uses_admissible_step(self):
        gamma_T = schedule_gamma_T(10 ** 8, 1.0, 1.0, 1.0, 0.05)
        gamma, T = schedule(10 ** 8, 1.0, 1.0, 1.0, 0.05)
        assert T == math.ceil(gamma_T) and gamma <= 1.0, "γ <= min{1/(κ²M), 1}"
        assert gamma * T == pytest.approx(gamma_T)


class TestCommands:
    """Tiny end-to-end runs; outputs must be byte-identical across reruns."""

    def _config(self, tmp_path, name, **values):
        base = {'loss': 'squared', 'd': 5, 'n_train': 60, 'repetitions': 3,
                'output_dir': str(tmp_path / name), 'seed': 11}
        base.update(values)
        return ExperimentConfig(**base)

    def test_registry(self):
        assert set(EXPERIMENTS) == set(COMMANDS)

    def test_path_experiment(self, tmp_path):
        outputs = []
        for name in ("first", "second"):
            experiment = PathExperiment(self._config(tmp_path, name, gammas=[0.1], Ts=[25]), verbose=False)
            result = experiment.run()
            manifest_path = experiment.export()
            outputs.append((tmp_path / name / "path_distance.csv").read_bytes())
        rows = read_csv(tmp_path / "first" / "path_distance.csv")
        assert rows[0] == ['t', 'mean_dist', 'sd_dist'] and len(rows) == 26
        assert result.distances.shape == (3, 25)
        assert outputs[0] == outputs[1], "a rerun with the same seed must give identical bytes"
        assert (tmp_path / "second" / "path_distance.svg").exists()

        manifest = RunManifest.load(manifest_path)
        assert manifest.command == "path-experiment"
        assert set(manifest.files) == {"path_distance.csv", "path_distance.svg"}
        assert manifest.diagnostics['threshold'] == pytest.approx(2 * manifest.diagnostics['R'] / 3)
        assert (tmp_path / "second" / TIMING_NAME).exists()

    def test_grid_experiment(self, tmp_path):
        config = self._config(tmp_path, "grid", gammas=[0.05, 0.1], Ts=[1, 2, 4])
        experiment = GridExperiment(config, verbose=False)
        result = experiment.run()
        manifest_path = experiment.export()

        assert result.mean_excess.shape == (2, 3)
        rows = read_csv(tmp_path / "grid" / "grid_excess.csv")
        assert rows[0] == ['gamma', 'T', 'gamma_T', 'mean_excess', 'sd'] and len(rows) == 7
        analytic = read_csv(tmp_path / "grid" / "grid_excess_analytic.csv")
        assert len(analytic) == 7 and all(float(r[3]) >= 0 for r in analytic[1:]), \
            "the closed-form excess risk is non-negative"

        d = experiment.diagnostics
        assert d['headline_estimator'] == "test_sample" and d['analytic_estimator_emitted']
        assert [s['gamma_T'] for s in d['equal_product']] == [0.1, 0.2], \
            "γT = 0.1 and 0.2 are each reached by both step sizes"
        assert len(d['early_stopping']) == 2

        rerun = config_from_dict(RunManifest.load(manifest_path).config)
        assert rerun.to_dict() == config.to_dict(), "the manifest stores the resolved config"

    def test_rademacher(self, tmp_path):
        config = self._config(tmp_path, "rad", rademacher_n=6, draws=200, d=3)
        experiment = RademacherExperiment(config, verbose=False)
        records = experiment.run()
        experiment.export()
        assert {(r['class'], r['method']) for r in records} == {
            ('scalar', 'exhaustive'), ('scalar', 'monte_carlo'),
            ('gradient', 'exhaustive'), ('gradient', 'monte_carlo')}
        assert all(r['value'] <= r['bound'] + 3 * r['std_error'] for r in records)
        saved = json.loads((tmp_path / "rad" / "rademacher.json").read_text())
        assert saved == records

    def test_verify_forces_squared_loss(self, tmp_path):
        config = self._config(tmp_path, "verify", loss="logistic_classification")
        suite = VerificationSuite(config, verbose=False)
        assert suite.config.loss == "squared" and suite.config.label_mode == "regression"
        assert config.loss == "logistic_classification", "the caller's config is left alone"

    def test_verify_quick_checks(self, tmp_path):
        suite = VerificationSuite(self._config(tmp_path, "verify", n_train=200), verbose=False)
        passed, detail = suite.check_identity()
        assert passed, f"averaging identity off by {detail['max_abs_error']}"
        passed, detail = suite.check_variance_sign()
        assert passed and detail['variance_term'] > 0

    def test_grid_keeps_surviving_repetitions(self, tmp_path, monkeypatch):
        calls = []
        original = grid_experiment.run

        def first_run_diverges(loss, data, cfg, **kwargs):
            calls.append(cfg.gamma)
            if len(calls) == 1:
                raise DivergenceError(3, float('inf'))
            return original(loss, data, cfg, **kwargs)

        monkeypatch.setattr(grid_experiment, "run", first_run_diverges)
        config = self._config(tmp_path, "grid-diverged", gammas=[0.05, 0.1], Ts=[1, 2, 4])
        experiment = GridExperiment(config, verbose=False)
        result = experiment.run()
        assert calls[0] == 0.05
        assert result.diverged == {0.05: 1} and result.kept == {0.05: 2, 0.1: 3}
        assert np.all(np.isfinite(result.mean_excess)), \
            "one diverged repetition must not blank its step size"
        assert experiment.diagnostics['kept_repetitions'] == {'0.05': 2, '0.1': 3}

    def test_excess_at_T1_exceeds_grid_minimum(self, tmp_path):
        # from v_0 = 0 a single small step leaves the excess near ||w*||²_Σ ≈ 1
        config = self._config(tmp_path, "early", d=5, n_train=200, gammas=[0.02, 0.05],
                              Ts=[1, 10, 50])
        experiment = GridExperiment(config, verbose=False)
        experiment.run()
        for row in experiment.diagnostics['early_stopping']:
            assert row['first_exceeds_min'] and row['argmin_T'] > 1, \
                f"γ={row['gamma']}: stopping at T=1 must be worse than the best T ({row})"
        analytic = early_stop_diagnostics(experiment.result.gammas, experiment.result.Ts,
                                          experiment.result.mean_analytic)
        assert all(row['first_exceeds_min'] for row in analytic)


class TestPathThreshold:
    """
    Noise-free squared loss in d = 1: w* = 1, R = 3 and the threshold 2R/3 = 2.
    From v_0 = 0 the distance is |1 - 2γλ|^t with λ the mean of x², so γ
    sets whether the path contracts or escapes the ball.
    """

    def _experiment(self, tmp_path, name, factor):
        base = ExperimentConfig(loss="squared", d=1, noise_sd=0.0, n_train=50, repetitions=1,
                                seed=4, gammas=[1.0], Ts=[30], output_dir=str(tmp_path / name))
        seed = repetition_seeds(base.seed, 1)[0]
        train = sample(model_for(base), base.n_train, derive_seed(seed, TRAIN_STREAM))
        lam = float(np.mean(train.xs[:, 0] ** 2))
        config = config_from_dict({**base.to_dict(), 'gammas': [(1.0 - factor) / (2.0 * lam)]})
        experiment = PathExperiment(config, verbose=False)
        experiment.run()
        return experiment.diagnostics

    def test_contracting_path_stays_inside(self, tmp_path):
        d = self._experiment(tmp_path, "contracting", factor=0.5)
        assert d['R'] == 3.0 and d['threshold'] == pytest.approx(2.0)
        assert not d['exceeds_threshold'] and d['first_exceed_t'] is None
        assert not d['final_decile_increasing']
        assert d['final_mean_dist'] == pytest.approx(0.5 ** 30, abs=1e-12)

    def test_escaping_path_is_reported(self, tmp_path):
        d = self._experiment(tmp_path, "escaping", factor=-1.1)
        assert d['exceeds_threshold'], "1.1^t passes 2 at t = 8"
        assert d['first_exceed_t'] == 8
        assert d['final_decile_increasing']
        assert d['final_mean_dist'] == pytest.approx(1.1 ** 30, rel=1e-6)

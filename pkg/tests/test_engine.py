import math

import numpy as np
import pytest

from robustht.analysis import METHOD_CLT_EXACT, METHOD_MONTE_CARLO
from robustht.classifiers import (
    ClassifierKind,
    GlrtClassifier,
    MinDistanceClassifier,
)
from robustht.engine import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    TrialCounts,
    format_row,
    monte_carlo_error,
    run_experiment,
)
from robustht.model import AttackMode, AttackSpec, HypothesisModel, TwoLevelProfile
from robustht.numerics import q_function
from robustht.rng import BLOCK_SIZE, block_plan, noise_block, trial_noise


class AlwaysRight:
    """Stub classifier that echoes a fixed label."""

    kind = ClassifierKind.MIN_DISTANCE

    def __init__(self, label):
        self.label = label

    def decide_batch(self, x):
        x = np.atleast_2d(x)
        return np.full(x.shape[0], self.label, dtype=np.int64)


def binary(mu, sigma=1.0):
    return HypothesisModel.symmetric_binary(np.asarray(mu, float), sigma)


class TestNoiseStreams:
    def test_block_plan_covers_trials(self):
        plan = list(block_plan(2 * BLOCK_SIZE + 3))
        assert [rows for _, _, rows in plan] == [BLOCK_SIZE, BLOCK_SIZE, 3]
        assert [start for _, start, _ in plan] == [0, BLOCK_SIZE, 2 * BLOCK_SIZE]

    def test_blocks_bitwise_reproducible(self):
        a = noise_block(42, 3, 100, 5)
        b = noise_block(42, 3, 100, 5)
        np.testing.assert_array_equal(a, b)
        assert a.tobytes() == b.tobytes()

    def test_blocks_independent_across_index_and_seed(self):
        assert not np.array_equal(noise_block(1, 0, 10, 2), noise_block(1, 1, 10, 2))
        assert not np.array_equal(noise_block(1, 0, 10, 2), noise_block(2, 0, 10, 2))

    def test_trial_noise_matches_block_rows(self):
        t = BLOCK_SIZE + 7
        row = trial_noise(9, t, 4)
        block = noise_block(9, 1, BLOCK_SIZE, 4)
        np.testing.assert_array_equal(row, block[7])

    def test_partial_block_is_prefix(self):
        full = noise_block(5, 0, 100, 3)
        part = noise_block(5, 0, 40, 3)
        np.testing.assert_array_equal(part, full[:40])


class TestMonteCarloError:
    def test_perfect_classifier_zero_error(self):
        m = binary([1.0, 2.0])
        est = monte_carlo_error(m, AlwaysRight(0), AttackSpec.none(),
                                true_class=0, trials=5000, seed=0)
        assert est.value == 0.0
        assert est.ci_halfwidth == 0.0
        assert est.method == METHOD_MONTE_CARLO

    def test_matched_filter_error(self):
        mu = np.array([0.8, -0.6, 0.3])
        m = binary(mu, sigma=1.0)
        est = monte_carlo_error(m, MinDistanceClassifier(m), AttackSpec.none(),
                                true_class=0, trials=200_000, seed=3)
        expected = q_function(float(np.linalg.norm(mu)))
        assert abs(est.value - expected) < 3 * est.ci_halfwidth

    def test_naive_detector_collapses_past_threshold(self):
        # threshold ||mu||^2/||mu||_1 < 1 = attack budget, so the plain
        # nearest-mean rule errs at least half the time
        profile = TwoLevelProfile(d=10, p=0.1, a=2.0, b=0.5, eps=1.0)
        m = profile.to_model(0.5)
        est = monte_carlo_error(
            m, MinDistanceClassifier(m),
            AttackSpec(budget=1.0, strength=1.0,
                       mode=AttackMode.NOISE_AGNOSTIC_HEURISTIC),
            true_class=0, trials=100_000, seed=1,
        )
        assert est.value >= 0.5

    def test_thread_count_invariance(self):
        m = binary([1.0, 0.5], sigma=0.9)
        clf = GlrtClassifier(m, eps=0.6)
        attack = AttackSpec(budget=0.6, strength=0.6,
                            mode=AttackMode.NOISE_AGNOSTIC_HEURISTIC)
        single = monte_carlo_error(m, clf, attack, true_class=0,
                                   trials=3 * BLOCK_SIZE + 11, seed=8, threads=1)
        multi = monte_carlo_error(m, clf, attack, true_class=0,
                                  trials=3 * BLOCK_SIZE + 11, seed=8, threads=8)
        assert single.value == multi.value
        assert single.ci_halfwidth == multi.ci_halfwidth

    def test_prior_weighted_combination(self):
        m = HypothesisModel(
            means=np.array([[1.0, 0.0], [-1.0, 0.5], [0.0, -1.0]]),
            sigma=0.8,
            priors=np.array([0.5, 0.3, 0.2]),
        )
        clf = MinDistanceClassifier(m)
        attack = AttackSpec.none()
        averaged = monte_carlo_error(m, clf, attack, true_class=None,
                                     trials=20_000, seed=4)
        parts = [
            monte_carlo_error(m, clf, attack, true_class=j, trials=20_000, seed=4)
            for j in range(3)
        ]
        combo = sum(float(m.priors[j]) * parts[j].value for j in range(3))
        assert averaged.value == pytest.approx(combo, abs=1e-15)

    def test_aware_mode_counts_zero_attack_fallback(self):
        # even when no candidate flips the decision, noisy trials can still
        # be misclassified with the zero attack; those count as errors
        m = binary([0.4, 0.3], sigma=2.0)
        clf = GlrtClassifier(m, eps=0.1)
        aware = monte_carlo_error(
            m, clf, AttackSpec(budget=0.1, strength=0.1,
                               mode=AttackMode.NOISE_AWARE_OPTIMAL),
            true_class=0, trials=30_000, seed=2,
        )
        none = monte_carlo_error(m, clf, AttackSpec.none(),
                                 true_class=0, trials=30_000, seed=2)
        assert aware.value >= none.value > 0

    def test_trials_validation(self):
        m = binary([1.0])
        with pytest.raises(ValueError):
            monte_carlo_error(m, AlwaysRight(0), AttackSpec.none(),
                              true_class=0, trials=0)


class TestTrialCounts:
    def test_merge_and_rates(self):
        a = TrialCounts(errors=10, rejects=2, trials=100)
        a.merge(TrialCounts(errors=5, rejects=1, trials=100))
        assert a.errors == 15
        assert a.error_rate == 0.075
        assert a.reject_rate == 0.015
        p = 0.075
        expect = 1.959963984540054 * math.sqrt(p * (1 - p) / 200)
        assert a.ci_halfwidth() == pytest.approx(expect, rel=1e-12)


def kappa_sweep_config(trials=20_000, seed=5, **overrides):
    base = dict(
        profile=TwoLevelProfile(d=20, p=0.1, a=1.1, b=0.9, eps=1.0),
        sigma=1.0,
        eps=1.0,
        classifiers=[ClassifierKind.GLRT, ClassifierKind.MINIMAX_LINEAR],
        attack_modes=[AttackMode.NOISE_AGNOSTIC_HEURISTIC],
        sweep_axis="kappa",
        sweep_values=[0.0, 0.5, 1.0],
        trials=trials,
        seed=seed,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_row_grid_and_header_fields(self):
        result = run_experiment(kappa_sweep_config())
        assert len(result.rows) == 3 * 2
        for row in result.rows:
            assert set(row) == set(CSV_HEADER.split(","))
            assert 0.0 <= row["error"] <= 1.0
            assert row["method"] == METHOD_MONTE_CARLO
        assert result.metadata["config_hash"] == kappa_sweep_config().config_hash()

    def test_deterministic_across_threads(self):
        r1 = run_experiment(kappa_sweep_config(), threads=1)
        r8 = run_experiment(kappa_sweep_config(), threads=8)
        assert r1.rows == r8.rows

    def test_error_monotone_in_kappa_under_crn(self):
        # per-trial monotonicity of the cost difference in the attack makes
        # shared-noise error counts monotone in the employed strength
        config = kappa_sweep_config(sweep_values=[0.0, 0.25, 0.5, 0.75, 1.0])
        result = run_experiment(config)
        for kind in ("glrt", "minimax"):
            errs = [r["error"] for r in result.rows if r["classifier"] == kind]
            assert errs == sorted(errs)

    def test_error_monotone_in_sigma_under_crn(self):
        # kappa = 0.5 keeps the cost-difference mean sum positive; at full
        # attack strength this profile's soft-threshold error is genuinely
        # non-monotone in sigma (negative mean sum, shrinking spread)
        config = kappa_sweep_config(
            sigma=None,
            sweep_axis="eps_over_sigma_sq",
            sweep_values=[1.0, 2.0, 4.0, 8.0],
            kappas=[0.5],
        )
        result = run_experiment(config)
        for kind in ("glrt", "minimax"):
            errs = [r["error"] for r in result.rows if r["classifier"] == kind]
            # larger (eps/sigma)^2 = smaller sigma = smaller error
            assert errs == sorted(errs, reverse=True)

    def test_reject_rate_only_for_prl(self):
        m = HypothesisModel(
            means=np.array([[2.0, 0.0], [0.0, 2.0], [-2.0, -2.0]]), sigma=0.5
        )
        config = ExperimentConfig(
            model=m, eps=1.0,
            classifiers=[ClassifierKind.PAIRWISE_ROBUST_LINEAR, ClassifierKind.GLRT],
            attack_modes=[AttackMode.NOISE_AGNOSTIC_HEURISTIC],
            sweep_axis="kappa", sweep_values=[1.0],
            trials=5000, seed=0,
        )
        rows = run_experiment(config).rows
        by_kind = {r["classifier"]: r for r in rows}
        assert by_kind["prl"]["reject_rate"] is not None
        assert by_kind["glrt"]["reject_rate"] is None

    def test_dimension_sweep_emits_prediction_rows(self):
        config = ExperimentConfig(
            profile=TwoLevelProfile(d=20, p=0.1, a=1.1, b=0.9, eps=1.0),
            eps=1.0,
            classifiers=[ClassifierKind.GLRT],
            attack_modes=[AttackMode.NOISE_AGNOSTIC_HEURISTIC],
            sweep_axis="dimension",
            sweep_values=[20, 40],
            kappas=[1.0],
            target_error=0.1,
            trials=20_000,
            seed=2,
        )
        rows = run_experiment(config).rows
        mc = [r for r in rows if r["method"] == METHOD_MONTE_CARLO]
        clt = [r for r in rows if r["method"] == METHOD_CLT_EXACT]
        assert len(mc) == 2 and len(clt) == 2
        # calibration holds the analytic error at the target
        for row in clt:
            assert row["error"] == pytest.approx(0.1, rel=2e-3)
        for row in mc:
            assert abs(row["error"] - 0.1) < 0.02

    def test_row_sink_receives_rows(self):
        seen = []
        run_experiment(kappa_sweep_config(trials=2000), row_sink=seen.append)
        assert len(seen) == 6

    def test_format_row_stable(self):
        row = {
            "sweep_axis": "kappa", "sweep_value": 0.5, "classifier": "glrt",
            "attack_mode": "agnostic", "kappa": 0.5, "error": 0.125,
            "ci": 0.001953125, "reject_rate": None, "method": "monte-carlo",
            "seed": 7,
        }
        assert format_row(row) == "kappa,0.5,glrt,agnostic,0.5,0.125,0.001953125,,monte-carlo,7"


class TestConfigValidation:
    def test_requires_exactly_one_model_source(self):
        with pytest.raises(ConfigError, match="model/profile"):
            kappa_sweep_config(model=binary([1.0]), ).validate()
        config = kappa_sweep_config()
        config.profile = None
        with pytest.raises(ConfigError, match="model/profile"):
            config.validate()

    def test_bad_axis(self):
        with pytest.raises(ConfigError, match="sweep.axis"):
            kappa_sweep_config(sweep_axis="epsilon").validate()

    def test_empty_values(self):
        with pytest.raises(ConfigError, match="sweep.values"):
            kappa_sweep_config(sweep_values=[]).validate()

    def test_kappa_beyond_budget(self):
        with pytest.raises(ConfigError, match="kappas"):
            kappa_sweep_config(kappas=[1.5], sweep_axis="eps_over_sigma_sq",
                               sweep_values=[1.0]).validate()

    def test_dimension_axis_requirements(self):
        config = kappa_sweep_config(sweep_axis="dimension", sweep_values=[10, 20])
        with pytest.raises(ConfigError, match="target_error"):
            config.validate()

    def test_from_dict_round_trip(self):
        raw = {
            "profile": {"d": 20, "p": 0.1, "a": 1.1, "b": 0.9, "eps": 1.0},
            "sigma": 1.0,
            "eps": 1.0,
            "classifiers": ["glrt", "minimax"],
            "attack_modes": ["agnostic"],
            "sweep": {"axis": "kappa", "values": [0.0, 1.0]},
            "trials": 1000,
            "seed": 3,
        }
        config = ExperimentConfig.from_dict(raw)
        assert config.config_hash() == ExperimentConfig.from_dict(raw).config_hash()
        assert config.classifiers == [ClassifierKind.GLRT, ClassifierKind.MINIMAX_LINEAR]

    def test_from_dict_explicit_model(self):
        raw = {
            "model": {
                "means": [[0.0, 0.0], [2.5, 0.25], [-1.75, -2.25]],
                "sigma": 0.5,
            },
            "eps": 1.0,
            "classifiers": ["glrt", "prl"],
            "attack_modes": ["agnostic", "aware"],
            "sweep": {"axis": "kappa", "values": [0.5, 1.0]},
            "trials": 1000,
            "seed": 1,
        }
        config = ExperimentConfig.from_dict(raw)
        rows = run_experiment(config).rows
        assert len(rows) == 2 * 2 * 2
        assert config.resolved_model().num_classes == 3

    def test_from_dict_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown fields"):
            ExperimentConfig.from_dict({"volume": 11})

    def test_from_dict_missing_required(self):
        with pytest.raises(ConfigError, match="required"):
            ExperimentConfig.from_dict({"eps": 1.0, "classifiers": ["glrt"],
                                        "profile": {"d": 10, "p": 0.1, "a": 2, "b": 0.5,
                                                    "eps": 1.0}})

    def test_from_dict_bad_classifier(self):
        with pytest.raises(ConfigError, match="classifiers"):
            ExperimentConfig.from_dict({
                "eps": 1.0, "classifiers": ["svm"], "sigma": 1.0,
                "profile": {"d": 10, "p": 0.1, "a": 2, "b": 0.5, "eps": 1.0},
                "sweep": {"axis": "kappa", "values": [0.5]},
            })

import numpy as np
import pytest

from cowa.adaptation import (
    AdaptConfig,
    cowa_adapt,
    estimate_classes,
    known_unknown_split,
    open_set_predictions,
    prediction_entropy,
    sample_mixing_coefficient,
    target_accuracy,
    two_means_1d,
    weight_mixup_batch,
)
from cowa.data import FeatureSet
from cowa.errors import ValidationError
from cowa.model import Probabilities, one_hot
from oracles import exhaustive_threshold_mask, partition_sse
from toyproto import (
    PARTIAL_PRESENT,
    mixture_reg,
    open_set_instance,
    partial_set_instance,
    pretrained,
)


def protocol_config(seed, net, target, **overrides):
    kw = dict(
        seed=seed,
        epochs=50,
        reg_epsilon=mixture_reg(net, target.features),
        covariance="diag",
    )
    kw.update(overrides)
    return AdaptConfig(**kw)


class TestMixingCoefficient:
    def test_beta_one_is_uniform(self):
        rng = np.random.default_rng(0)
        draws = sample_mixing_coefficient(1.0, rng, size=100_000)
        assert abs(draws.mean() - 0.5) < 0.01
        # uniform quartiles
        counts = np.histogram(draws, bins=4, range=(0, 1))[0] / draws.size
        assert np.all(np.abs(counts - 0.25) < 0.01)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 2.0, 5.0])
    def test_symmetric_mean(self, alpha):
        rng = np.random.default_rng(1)
        draws = sample_mixing_coefficient(alpha, rng, size=50_000)
        assert abs(draws.mean() - 0.5) < 0.015
        assert draws.min() >= 0.0 and draws.max() <= 1.0

    def test_beta_two_variance(self):
        # Var Beta(a,a) = a^2 / ((2a)^2 (2a+1)) = 1/20 for a=2
        rng = np.random.default_rng(2)
        draws = sample_mixing_coefficient(2.0, rng, size=100_000)
        assert abs(draws.var() - 0.05) < 0.005

    def test_scalar_draw(self):
        rng = np.random.default_rng(3)
        g = sample_mixing_coefficient(0.2, rng)
        assert isinstance(g, float) and 0.0 <= g <= 1.0

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValidationError):
            sample_mixing_coefficient(0.0, np.random.default_rng(0))


class TestWeightMixup:
    def batch(self, seed, n=16, d=4, k=3):
        rng = np.random.default_rng(seed)
        return (
            rng.standard_normal((n, d)),
            rng.standard_normal((n, d)),
            rng.integers(0, k, n),
            rng.integers(0, k, n),
            rng.uniform(0, 1, n),
            rng.uniform(0, 1, n),
        )

    def test_gamma_one_is_identity(self):
        x_i, x_j, y_i, y_j, w_i, w_j = self.batch(0)
        mx, my, mw = weight_mixup_batch(x_i, x_j, y_i, y_j, w_i, w_j, 1.0, 3)
        assert np.array_equal(mx, x_i)
        assert np.array_equal(my, one_hot(y_i, 3))
        assert np.array_equal(mw, w_i)

    def test_midpoint_weight(self):
        x = np.zeros((1, 2))
        mw = weight_mixup_batch(
            x, x, np.array([0]), np.array([1]), np.array([0.2]), np.array([0.8]), 0.5, 2
        )[2]
        assert mw[0] == pytest.approx(0.5)

    def test_mixed_weight_within_input_range(self):
        rng = np.random.default_rng(4)
        for trial in range(1000):
            n = 8
            w_i = rng.uniform(0, 1, n)
            w_j = rng.uniform(0, 1, n)
            gamma = float(rng.uniform(0, 1))
            x = rng.standard_normal((n, 2))
            mw = weight_mixup_batch(
                x, x, np.zeros(n, int), np.ones(n, int), w_i, w_j, gamma, 2
            )[2]
            lo = np.minimum(w_i, w_j) - 1e-12
            hi = np.maximum(w_i, w_j) + 1e-12
            assert np.all(mw >= lo) and np.all(mw <= hi)

    def test_soft_labels_row_stochastic(self):
        x_i, x_j, y_i, y_j, w_i, w_j = self.batch(5)
        my = weight_mixup_batch(x_i, x_j, y_i, y_j, w_i, w_j, 0.3, 3)[1]
        assert np.max(np.abs(my.sum(axis=1) - 1.0)) < 1e-12
        assert my.min() >= 0.0

    def test_per_sample_gamma(self):
        x_i, x_j, y_i, y_j, w_i, w_j = self.batch(6)
        gam = np.linspace(0.0, 1.0, 16)
        mx, _, mw = weight_mixup_batch(x_i, x_j, y_i, y_j, w_i, w_j, gam, 3)
        assert np.allclose(mx, gam[:, None] * x_i + (1 - gam[:, None]) * x_j)
        assert np.allclose(mw, gam * w_i + (1 - gam) * w_j)

    def test_shape_mismatch_rejected(self):
        x_i, x_j, y_i, y_j, w_i, w_j = self.batch(7)
        with pytest.raises(ValidationError):
            weight_mixup_batch(x_i, x_j[:8], y_i, y_j, w_i, w_j, 0.5, 3)

    def test_weights_out_of_range_rejected(self):
        x_i, x_j, y_i, y_j, w_i, w_j = self.batch(8)
        with pytest.raises(ValidationError):
            weight_mixup_batch(x_i, x_j, y_i, y_j, w_i + 2.0, w_j, 0.5, 3)


class TestKnownUnknownSplit:
    def test_planted_entropy_clusters(self):
        # 50 near-one-hot rows (entropy ~0.01) and 50 uniform rows (~2.08)
        k = 8
        low = np.full((50, k), 1e-3 / (k - 1))
        low[:, 0] = 1.0 - 1e-3
        high = np.full((50, k), 1.0 / k)
        probs = Probabilities(np.vstack([low, high]))
        known, unknown = known_unknown_split(probs)
        assert known[:50].all() and unknown[50:].all()

    def test_all_equal_entropies_all_known(self):
        probs = Probabilities(np.full((10, 4), 0.25))
        known, unknown = known_unknown_split(probs)
        assert known.all() and not unknown.any()

    def test_two_means_matches_exhaustive_optimum(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = int(rng.integers(10, 201))
            s1, s2 = rng.uniform(0.02, 0.2), rng.uniform(0.02, 0.3)
            m1 = rng.uniform(0.0, 0.5)
            m2 = m1 + 6.0 * (s1 + s2) + rng.uniform(0.0, 1.0)
            split = int(rng.integers(1, n))
            vals = np.abs(np.concatenate([
                rng.normal(m1, s1, split), rng.normal(m2, s2, n - split)
            ]))
            got = two_means_1d(vals)
            want, want_sse = exhaustive_threshold_mask(vals)
            # equal-SSE partitions count as matching the optimum
            assert partition_sse(vals, got) <= want_sse + 1e-9

    def test_min_entropy_sample_never_unknown(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            p = rng.uniform(0.01, 1.0, (30, 5))
            p /= p.sum(axis=1, keepdims=True)
            probs = Probabilities(p)
            known, _ = known_unknown_split(probs)
            ent = prediction_entropy(p)
            assert known[np.argmin(ent)]

    def test_prediction_entropy_conventions(self):
        p = np.array([[1.0, 0.0], [0.5, 0.5]])
        ent = prediction_entropy(p)
        assert ent[0] == 0.0
        assert ent[1] == pytest.approx(np.log(2.0))


class TestEstimateClasses:
    def test_balanced_target_keeps_all_classes(self):
        net, _, target = pretrained(0)
        active = estimate_classes(net, target.features, 0.3)
        assert active.tolist() == [0, 1, 2]

    def test_planted_subset_recovered(self):
        net, target = partial_set_instance(0)
        active = estimate_classes(net, target.features, 0.3)
        assert active.tolist() == list(PARTIAL_PRESENT)

    def test_tiny_tau_keeps_everything(self):
        net, target = partial_set_instance(1)
        active = estimate_classes(net, target.features, 1e-9)
        assert active.tolist() == list(range(6))

    def test_tau_range_validated(self):
        net, _, target = pretrained(0)
        with pytest.raises(ValidationError):
            estimate_classes(net, target.features, 1.5)


class TestCowaAdapt:
    def test_gamma_pinned_to_one_reproduces_no_mixup_bitwise(self):
        net, _, target = pretrained(0)
        cfg_on = protocol_config(0, net, target, epochs=6, gamma_override=1.0)
        cfg_off = protocol_config(0, net, target, epochs=6, use_weight_mixup=False)
        m1, log1 = cowa_adapt(net.copy(), target, cfg_on)
        m2, log2 = cowa_adapt(net.copy(), target, cfg_off)
        for k in m1.params():
            assert np.array_equal(m1.params()[k], m2.params()[k])
        assert [s.accuracy for s in log1] == [s.accuracy for s in log2]
        assert [s.median_jmds for s in log1] == [s.median_jmds for s in log2]

    def test_deterministic_under_seed(self):
        net, _, target = pretrained(1)
        cfg = protocol_config(1, net, target, epochs=4)
        m1, _ = cowa_adapt(net.copy(), target, cfg)
        m2, _ = cowa_adapt(net.copy(), target, cfg)
        for k in m1.params():
            assert np.array_equal(m1.params()[k], m2.params()[k])

    def test_zero_shift_no_collapse(self):
        net, _, target = pretrained(2, offset=0.0)
        before = target_accuracy(net, target)
        cfg = protocol_config(2, net, target)
        _, log = cowa_adapt(net.copy(), target, cfg)
        assert abs(log[-1].accuracy - before) <= 0.02

    def test_log_structure(self):
        net, _, target = pretrained(3)
        cfg = protocol_config(3, net, target, epochs=4)
        _, log = cowa_adapt(net.copy(), target, cfg)
        assert len(log) == 5  # one per epoch plus the final state
        assert [s.epoch for s in log] == [0, 1, 2, 3, 4]
        for s in log:
            assert 0.0 <= s.mean_jmds <= 1.0
            assert s.accuracy is not None
            assert s.known_mask.all()

    def test_unlabeled_target_has_no_accuracy(self):
        net, _, target = pretrained(4)
        unlabeled = FeatureSet(target.features, None, "target", target.class_count)
        cfg = protocol_config(4, net, unlabeled, epochs=2)
        _, log = cowa_adapt(net.copy(), unlabeled, cfg)
        assert all(s.accuracy is None for s in log)

    def test_per_sample_gamma_mode_runs(self):
        net, _, target = pretrained(0)
        cfg = protocol_config(0, net, target, epochs=2, mixup_per_sample=True)
        _, log = cowa_adapt(net.copy(), target, cfg)
        assert len(log) == 3

    def test_dimension_mismatch_rejected(self):
        net, _, target = pretrained(0)
        bad = FeatureSet(np.zeros((4, 2)), None, "target", 3)
        with pytest.raises(ValidationError):
            cowa_adapt(net.copy(), bad, AdaptConfig())


class TestOpenSetScenario:
    def test_mixup_defaults_off_for_open(self):
        assert AdaptConfig(scenario="open").mixup_enabled is False
        assert AdaptConfig(scenario="closed").mixup_enabled is True
        assert AdaptConfig(scenario="open", use_weight_mixup=True).mixup_enabled is True

    def test_split_restricts_training(self):
        net, X, is_unknown = open_set_instance(0)
        target = FeatureSet(X, None, "target", net.class_count)
        cfg = AdaptConfig(
            scenario="open", epochs=3, seed=0, use_weight_mixup=False,
            reg_epsilon=mixture_reg(net, X), covariance="diag",
        )
        _, log = cowa_adapt(net.copy(), target, cfg)
        for s in log:
            assert 0.0 < s.known_fraction < 1.0

    def test_open_set_predictions_appends_unknown_class(self):
        net, X, is_unknown = open_set_instance(1)
        preds = open_set_predictions(net, X)
        assert preds.max() == net.class_count
        assert (preds[is_unknown] == net.class_count).mean() > 0.9

    def test_open_accuracy_uses_per_class_mean(self):
        net, X, is_unknown = open_set_instance(2)
        labels = np.where(is_unknown, net.class_count, 0)
        # recompute labels for known part from the ground truth layout
        n_known = (~is_unknown).sum()
        per_class = n_known // net.class_count
        labels[:n_known] = np.repeat(np.arange(net.class_count), per_class)
        target = FeatureSet(X, labels, "target", net.class_count + 1)
        acc = target_accuracy(net, target, scenario="open")
        assert 0.5 < acc <= 1.0


class TestPartialScenario:
    def test_active_classes_logged(self):
        net, target = partial_set_instance(2)
        cfg = AdaptConfig(
            scenario="partial", partial_threshold=0.3, epochs=3, seed=2,
        )
        _, log = cowa_adapt(net.copy(), target, cfg)
        assert log[-1].active_classes.tolist() == list(PARTIAL_PRESENT)
        assert set(log[-1].pseudo_labels.tolist()) <= set(PARTIAL_PRESENT)

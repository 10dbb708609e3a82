import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hslfusion.autograd import Tensor
from hslfusion.fusion import (
    DecisionWeights,
    compute_decision_weights,
    decision_fuse,
    fuse_features,
    fused_length,
    head_forward,
    predict_class,
)

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class TestFuseFeatures:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.r_h = rng.normal(size=128).astype(np.float32)
        self.r_l = rng.normal(size=128).astype(np.float32)

    def test_sum_identity(self):
        out = fuse_features(Tensor(self.r_h), Tensor(np.zeros(128, np.float32)), "sum")
        np.testing.assert_array_equal(out.data, self.r_h)

    def test_sum_and_max_commute(self):
        for strategy in ("sum", "max"):
            a = fuse_features(Tensor(self.r_h), Tensor(self.r_l), strategy).data
            b = fuse_features(Tensor(self.r_l), Tensor(self.r_h), strategy).data
            np.testing.assert_array_equal(a, b)

    def test_max_idempotent(self):
        out = fuse_features(Tensor(self.r_h), Tensor(self.r_h.copy()), "max")
        np.testing.assert_array_equal(out.data, self.r_h)

    def test_concat_layout(self):
        out = fuse_features(Tensor(self.r_h), Tensor(self.r_l), "concat")
        assert out.shape == (256,)
        np.testing.assert_array_equal(out.data[:128], self.r_h)
        np.testing.assert_array_equal(out.data[128:], self.r_l)

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            fuse_features(Tensor(self.r_h), Tensor(self.r_l), "mean")

    def test_fused_length(self):
        assert fused_length(128, "sum") == 128
        assert fused_length(128, "max") == 128
        assert fused_length(128, "concat") == 256


class TestHeadForward:
    def test_zero_weight_gives_uniform(self):
        feats = Tensor(np.random.default_rng(1).normal(size=(3, 16)).astype(np.float32))
        out = head_forward(feats, Tensor(np.zeros((5, 16), np.float32)))
        np.testing.assert_allclose(out.data, 0.2, atol=1e-7)

    def test_log3_logit(self):
        # a weight row producing logits [ln 3, 0] maps to [0.75, 0.25]
        feats = Tensor(np.array([[1.0]], dtype=np.float64))
        w = Tensor(np.array([[np.log(3.0)], [0.0]]))
        out = head_forward(feats, w)
        np.testing.assert_allclose(out.data, [[0.75, 0.25]], atol=1e-9)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        out = head_forward(Tensor(rng.normal(size=(6, 8))), Tensor(rng.normal(size=(4, 8))))
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)


def _weights_for_class0(correct_counts, n: int = 40) -> DecisionWeights:
    """Run compute_decision_weights on predictions where each head gets the
    given number of the n class-0 samples right (class 1 is always perfect)."""
    truth = np.concatenate([np.zeros(n, dtype=int), np.ones(n, dtype=int)])
    preds = []
    for c in correct_counts:
        p = truth.copy()
        p[:n - c] = 1  # misclassify the first n - c class-0 samples
        preds.append(p)
    return compute_decision_weights(preds, truth, 2)


class TestDecisionWeights:
    def test_single_perfect_head(self):
        # accuracies (1, 0, 0) on class 0
        dw = _weights_for_class0([40, 0, 0])
        np.testing.assert_allclose(dw.accuracy[0], [1.0, 0.0, 0.0])
        assert dw.u[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert dw.u[0, 1] == pytest.approx(1e-5 / (1 + 1e-5), abs=1e-12)
        assert dw.u[0, 2] == pytest.approx(1e-5 / (1 + 1e-5), abs=1e-12)

    def test_all_heads_perfect(self):
        dw = _weights_for_class0([40, 40, 40])
        np.testing.assert_allclose(dw.u[0], (1 + 1e-5) / (3 + 1e-5), atol=1e-12)

    def test_degenerate_all_zero_row_sums_to_three(self):
        dw = _weights_for_class0([0, 0, 0])
        np.testing.assert_allclose(dw.u[0], 1.0, atol=1e-12)
        assert dw.u[0].sum() == pytest.approx(3.0, abs=1e-9)

    def test_missing_class_rejected(self):
        truth = np.zeros(4, dtype=int)  # class index 1 absent
        preds = [np.zeros(4, dtype=int)] * 3
        with pytest.raises(ValueError):
            compute_decision_weights(preds, truth, 2)

    def test_accuracies_counted_per_class(self):
        truth = np.array([0, 0, 0, 0, 1, 1])
        head1 = np.array([0, 0, 1, 1, 1, 1])  # 0.5 on class 0, 1.0 on class 1
        head2 = np.array([0, 0, 0, 0, 0, 0])  # 1.0 on class 0, 0.0 on class 1
        head3 = truth.copy()                  # perfect
        dw = compute_decision_weights([head1, head2, head3], truth, 2)
        np.testing.assert_allclose(dw.accuracy, [[0.5, 1.0, 1.0], [1.0, 0.0, 1.0]])

    @settings(max_examples=150, deadline=None)
    @given(c1=st.integers(0, 40), c2=st.integers(0, 40), c3=st.integers(0, 40))
    def test_row_sum_identity_and_range(self, c1, c2, c3):
        dw = _weights_for_class0([c1, c2, c3])
        s = (c1 + c2 + c3) / 40
        assert dw.u[0].sum() == pytest.approx((s + 3e-5) / (s + 1e-5), abs=1e-9)
        assert (dw.u >= 0).all() and (dw.u <= 1 + 1e-12).all()


class TestDecisionFuse:
    def test_unit_weights_sum_heads(self):
        y = [np.array([0.2, 0.8]), np.array([0.5, 0.5]), np.array([0.9, 0.1])]
        out = decision_fuse(*y, np.ones((2, 3)))
        np.testing.assert_allclose(out, y[0] + y[1] + y[2])

    def test_selector_weights(self):
        y1 = np.array([0.2, 0.8])
        u = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        out = decision_fuse(y1, np.array([0.9, 0.1]), np.array([0.4, 0.6]), u)
        np.testing.assert_allclose(out, y1)

    def test_hand_example(self):
        out = decision_fuse(
            np.array([0.9, 0.1]), np.array([0.2, 0.8]), np.array([0.6, 0.4]),
            np.array([[1.0, 0.5, 0.25], [1.0, 0.5, 0.25]]))
        np.testing.assert_allclose(out, [1.15, 0.6], atol=1e-12)

    def test_linear_in_each_head(self):
        # affine in y1 around the fixed contribution of the other heads
        rng = np.random.default_rng(3)
        u = rng.uniform(size=(4, 3))
        y2, y3 = rng.uniform(size=(2, 4))
        a, b = rng.uniform(size=(2, 4))
        offset = decision_fuse(np.zeros(4), y2, y3, u)
        lhs = decision_fuse(a + 2 * b, y2, y3, u) - offset
        rhs = (decision_fuse(a, y2, y3, u) - offset) + 2 * (decision_fuse(b, y2, y3, u) - offset)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_batch_broadcast(self):
        rng = np.random.default_rng(4)
        y = rng.uniform(size=(3, 5, 2))
        u = rng.uniform(size=(2, 3))
        out = decision_fuse(y[0], y[1], y[2], u)
        assert out.shape == (5, 2)
        np.testing.assert_allclose(out[1], decision_fuse(y[0, 1], y[1, 1], y[2, 1], u))

    def test_weight_shape_checked(self):
        y = np.ones(3)
        with pytest.raises(ValueError):
            decision_fuse(y, y, y, np.ones((2, 3)))


class TestPredictClass:
    def test_argmax_one_based(self):
        assert predict_class([0.1, 0.7, 0.2]) == 2

    def test_tie_picks_lowest_index(self):
        assert predict_class([0.5, 0.5]) == 1

    def test_positive_scaling_invariance(self):
        scores = np.array([0.2, 1.4, 0.9])
        assert predict_class(scores) == predict_class(scores * 17.3)

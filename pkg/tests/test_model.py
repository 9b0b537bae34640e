import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import weight_with_norm
from ihgnn.equilibrium import Activation
from ihgnn.hypergraph import Hypergraph, build_operator, random_hypergraph
from ihgnn.linalg import max_row_abs_sum, power_iteration_abs
from ihgnn.model import (ModelParams, Prediction, SolverConfig, affine_input,
                         cross_entropy_masked, forward, init_params, load_checkpoint,
                         perron_rescale, project_inf_ball, project_l1_ball, save_checkpoint,
                         scale_input_side, scale_params, softmax)

PRECISE = SolverConfig(1e-13, 5000)


def _params(rng, d=3, dh=4, c=2, norm=0.8):
    return ModelParams(weight_with_norm(rng, dh, norm), rng.normal(size=(d, dh)),
                       rng.normal(size=(dh, c)), rng.normal(size=dh), kappa=0.9)


class TestParams:
    def test_shape_validation(self):
        with pytest.raises(ValueError, match="square"):
            ModelParams(np.zeros((2, 3)), np.zeros((1, 2)), np.zeros((2, 1)), np.zeros(2))
        with pytest.raises(ValueError, match="agree"):
            ModelParams(np.zeros((2, 2)), np.zeros((1, 3)), np.zeros((2, 1)), np.zeros(2))

    def test_kappa_range(self):
        with pytest.raises(ValueError, match="kappa"):
            ModelParams(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), 1.0)

    def test_copy_is_deep(self, rng):
        p = _params(rng)
        q = p.copy()
        q.w[0, 0] += 1.0
        assert p.w[0, 0] != q.w[0, 0]

    def test_init_respects_budget(self, rng):
        p = init_params(5, 16, 3, 0.7, rng)
        assert max_row_abs_sum(p.w) <= 0.7 + 1e-12
        np.testing.assert_array_equal(p.b, 0.0)


class TestAffineInput:
    def test_identity(self, rng):
        x = rng.normal(size=(4, 3))
        p = ModelParams(np.zeros((3, 3)), np.eye(3), np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(affine_input(x, p), x)

    def test_bias_broadcast(self):
        p = ModelParams(np.zeros((3, 3)), np.eye(2, 3), np.eye(3), np.ones(3))
        np.testing.assert_array_equal(affine_input(np.zeros((4, 2)), p), np.ones((4, 3)))

    def test_dense_oracle(self):
        x = np.array([[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]])
        t1 = np.array([[0.5, -1.0], [2.0, 0.25]])
        b = np.array([0.1, -0.2])
        p = ModelParams(np.zeros((2, 2)), t1, np.eye(2), b)
        expected = [[4.6, -0.7], [-1.9, -0.45], [2.6, -3.075]]
        np.testing.assert_allclose(affine_input(x, p), expected, atol=1e-15)

    def test_width_mismatch(self, rng):
        with pytest.raises(ValueError, match="width"):
            affine_input(np.zeros((2, 5)), _params(rng))


class TestForward:
    def test_zero_readout_uniform(self, small_op, rng):
        p = _params(rng, c=4)
        p.theta2[...] = 0.0
        pred, _ = forward(rng.normal(size=(small_op.n, 3)), small_op, p, Activation("tanh"))
        np.testing.assert_allclose(pred.probabilities, 0.25, atol=1e-15)

    def test_scalar_logit(self):
        op = build_operator(Hypergraph.from_edges(1, [[0]]))
        p = ModelParams([[0.5]], [[1.0]], [[1.0]], [0.0], kappa=0.5)
        pred, _ = forward([[1.0]], op, p, Activation("identity"), PRECISE)
        np.testing.assert_allclose(pred.logits, [[2.0]], atol=1e-11)

    def test_softmax_rows(self, rng):
        s = softmax(rng.normal(size=(5, 4)) * 50)
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-15)


class TestCrossEntropy:
    def test_perfect(self):
        pred = Prediction.from_logits(np.array([[50.0, 0.0], [0.0, 50.0]]))
        assert cross_entropy_masked(pred, [0, 1], [0, 1])[0] <= 1e-6

    def test_uniform(self):
        pred = Prediction.from_logits(np.zeros((4, 5)))
        assert cross_entropy_masked(pred, [0, 1, 2, 3], np.ones(4, bool))[0] == \
            pytest.approx(np.log(5), abs=1e-15)

    def test_direct_summation(self):
        logits = np.array([[0.3, -1.2], [2.0, 0.5], [-0.4, 0.1]])
        labels = [1, 0, 1]
        loss, grad = cross_entropy_masked(Prediction.from_logits(logits), labels, [0, 2])
        terms = [-(logits[i, labels[i]] - np.log(np.exp(logits[i]).sum())) for i in (0, 2)]
        assert loss == pytest.approx(sum(terms) / 2, abs=1e-15)
        np.testing.assert_array_equal(grad[1], 0.0)
        eps = 1e-6
        for i, j in [(0, 0), (2, 1)]:
            up, dn = logits.copy(), logits.copy()
            up[i, j] += eps
            dn[i, j] -= eps
            fd = (cross_entropy_masked(Prediction.from_logits(up), labels, [0, 2])[0]
                  - cross_entropy_masked(Prediction.from_logits(dn), labels, [0, 2])[0]) / (2 * eps)
            assert grad[i, j] == pytest.approx(fd, abs=1e-9)

    def test_empty_mask(self):
        with pytest.raises(ValueError, match="no nodes"):
            cross_entropy_masked(Prediction.from_logits(np.zeros((2, 2))), [0, 1], np.zeros(2, bool))


class TestProjection:
    def test_feasible_unchanged(self, rng):
        w = weight_with_norm(rng, 4, 0.5)
        np.testing.assert_array_equal(project_inf_ball(w, 0.9), w)

    def test_soft_threshold_row(self):
        np.testing.assert_allclose(project_inf_ball([[0.8, -0.6]], 1.0), [[0.6, -0.4]], atol=1e-15)

    def test_zero_radius(self, rng):
        np.testing.assert_array_equal(project_inf_ball(rng.normal(size=(3, 3)), 0.0), 0.0)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            project_inf_ball(np.eye(2), -0.1)

    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(-10, 10)), st.floats(0.0, 0.999))
    def test_feasible_and_idempotent(self, w, kappa):
        p = project_inf_ball(w, kappa)
        assert max_row_abs_sum(p) <= kappa + 1e-12
        np.testing.assert_array_equal(project_inf_ball(p, kappa), p)
        assert np.all(np.sign(p) * np.sign(w) >= 0)

    def test_matches_bisection_oracle(self, rng):
        for _ in range(50):
            v = rng.normal(size=7) * 2
            r = 0.6
            lo, hi = 0.0, np.abs(v).max()
            for _ in range(200):
                t = 0.5 * (lo + hi)
                lo, hi = (t, hi) if np.maximum(np.abs(v) - t, 0).sum() > r else (lo, t)
            oracle = np.sign(v) * np.maximum(np.abs(v) - hi, 0)
            if np.abs(v).sum() <= r:
                oracle = v
            np.testing.assert_allclose(project_l1_ball(v, r)[0], oracle, atol=1e-12)

    def test_optimal_against_candidates(self, rng):
        for _ in range(5):
            w = rng.normal(size=(3, 3))
            p = project_inf_ball(w, 0.7)
            c = rng.normal(size=(10_000, 3, 3))
            c *= 0.7 * rng.random((10_000, 3, 1)) / np.abs(c).sum(axis=2, keepdims=True)
            assert np.all(np.linalg.norm(c - w, axis=(1, 2)) >= np.linalg.norm(p - w) - 1e-12)


class TestScaling:
    def test_input_side_scaling_preserves_logits(self, rng):
        op = build_operator(random_hypergraph(20, 10, rng))
        p = _params(rng)
        x = rng.normal(size=(op.n, 3))
        base = forward(x, op, p, Activation("relu"), PRECISE)[0].logits
        for alpha in (0.25, 0.5, 0.9, 3.0):
            got = forward(x, op, scale_input_side(p, alpha), Activation("relu"), PRECISE)[0].logits
            np.testing.assert_allclose(got, base, atol=1e-9)

    def test_uniform_scaling_changes_equilibrium(self, rng):
        # scaling W shortens the propagation memory, so logits move
        op = build_operator(random_hypergraph(20, 10, rng))
        p = _params(rng, norm=0.9)
        x = rng.normal(size=(op.n, 3))
        act = Activation("identity")
        base = forward(x, op, p, act, PRECISE)[0].logits
        got = forward(x, op, scale_params(p, 0.5), act, PRECISE)[0].logits
        assert np.max(np.abs(got - base)) > 1e-3

    def test_scale_params_layout(self, rng):
        p = _params(rng)
        q = scale_params(p, 0.5)
        np.testing.assert_array_equal(q.w, 0.5 * p.w)
        np.testing.assert_array_equal(q.theta2, p.theta2 / 0.5)

    def test_nonpositive_alpha(self, rng):
        with pytest.raises(ValueError):
            scale_input_side(_params(rng), 0.0)

    def test_perron_rescale(self, rng):
        op = build_operator(random_hypergraph(15, 10, rng))
        w = rng.random((4, 4)) * np.array([1.0, 0.05, 1.0, 0.05])
        w *= 0.9 / power_iteration_abs(w, 5000, 1e-14).value
        assert max_row_abs_sum(w) > 1.0
        p = ModelParams(w, rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=4))
        q, v = perron_rescale(p)
        assert max_row_abs_sum(q.w) <= 0.9 + 1e-6
        x = rng.normal(size=(op.n, 3))
        act = Activation("leaky_relu", 0.1)
        np.testing.assert_allclose(forward(x, op, q, act, PRECISE)[0].logits,
                                   forward(x, op, p, act, PRECISE)[0].logits, atol=1e-9)
        assert np.all(v > 0)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path, rng):
        p = _params(rng)
        save_checkpoint(tmp_path / "c.npz", p, Activation("leaky_relu", 0.2), {"seed": 3})
        q, act, extra = load_checkpoint(tmp_path / "c.npz")
        for k, a in p.arrays().items():
            np.testing.assert_array_equal(q.arrays()[k], a)
        assert q.kappa == p.kappa and str(act) == "leaky_relu:0.2" and extra == {"seed": 3}

    def test_rejects_foreign_file(self, tmp_path):
        np.savez(tmp_path / "x.npz", meta=np.array('{"format": "other"}'))
        with pytest.raises(ValueError, match="not an IHGNN checkpoint"):
            load_checkpoint(tmp_path / "x.npz")

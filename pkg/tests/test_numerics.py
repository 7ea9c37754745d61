"""Engine tests: forward/backward oracles, Adam algebra, loss values,
finite-difference agreement, and the determinism/batch-norm/dropout
invariants everything downstream relies on."""

import math

import numpy as np
import pytest

from lumiloc.errors import ContractViolation, EmptyInputError
from lumiloc.numerics import (
    AdamState,
    LayerSpec,
    MlpNet,
    adam_step,
    bce_loss,
    gradient_check,
    mlp_backward,
    mlp_forward,
    mse_loss,
)


def make_net(specs, seed=0):
    return MlpNet(specs, np.random.default_rng(seed))


class TestForward:
    def test_zero_weights_output_equals_bias(self):
        net = make_net([LayerSpec(3, 2, "identity")])
        net.layers[0].weight[:] = 0.0
        net.layers[0].bias[:] = [0.5, -1.5]
        net.eval()
        out, _ = mlp_forward(net, np.random.default_rng(1).normal(size=(5, 3)))
        assert np.array_equal(out, np.tile([0.5, -1.5], (5, 1)))

    def test_identity_layer_passes_input_through(self):
        net = make_net([LayerSpec(4, 4, "identity")])
        net.layers[0].weight[:] = np.eye(4)
        net.layers[0].bias[:] = 0.0
        net.eval()
        x = np.random.default_rng(2).normal(size=(6, 4))
        out, _ = mlp_forward(net, x)
        assert np.allclose(out, x, atol=0, rtol=0)

    def test_two_layer_hand_computation(self):
        # 2 -> 3 (ReLU) -> 1 (identity), evaluated by hand:
        #   row (1, 2):    pre-act [-0.29, 1.08, 0.73] -> relu -> 0.141
        #   row (-1, 0.5): pre-act [-0.19, -0.12, 0.83] -> relu -> 0.515
        net = make_net([LayerSpec(2, 3, "relu"), LayerSpec(3, 1, "identity")])
        net.layers[0].weight[:] = [[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]]
        net.layers[0].bias[:] = [0.01, -0.02, 0.03]
        net.layers[1].weight[:] = [[0.2, -0.3, 0.5]]
        net.layers[1].bias[:] = [0.1]
        net.eval()
        out, _ = mlp_forward(net, np.array([[1.0, 2.0], [-1.0, 0.5]]))
        assert np.allclose(out, [[0.141], [0.515]], atol=1e-12)

    def test_dimension_mismatch_raises(self):
        net = make_net([LayerSpec(3, 2)])
        with pytest.raises(ContractViolation):
            mlp_forward(net.eval(), np.zeros((4, 5)))

    def test_incompatible_layer_stack_rejected(self):
        with pytest.raises(ContractViolation):
            make_net([LayerSpec(3, 4), LayerSpec(5, 2)])

    def test_train_mode_dropout_requires_rng(self):
        net = make_net([LayerSpec(3, 3, "relu", dropout_rate=0.5)])
        with pytest.raises(ContractViolation):
            mlp_forward(net, np.zeros((2, 3)))


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        net = make_net([LayerSpec(3, 4, "relu"), LayerSpec(4, 2)])
        out, cache = mlp_forward(net, np.random.default_rng(0).normal(size=(5, 3)))
        grads, dx = mlp_backward(net, cache, np.zeros_like(out))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(dx == 0)

    def test_linear_regression_closed_form(self):
        # Single linear layer, one sample, MSE: dW = (2/N) * residual outer input.
        net = make_net([LayerSpec(3, 2, "identity")])
        x = np.array([[1.0, -2.0, 0.5]])
        y = np.array([[0.3, 0.7]])
        out, cache = mlp_forward(net, x)
        _, up = mse_loss(out, y)
        grads, _ = mlp_backward(net, cache, up)
        resid = (out - y)[0]
        expected_dw = 2.0 * np.outer(resid, x[0])
        assert np.allclose(grads[0], expected_dw, atol=1e-14)
        assert np.allclose(grads[1], 2.0 * resid, atol=1e-14)

    def test_cache_net_mismatch_rejected(self):
        net = make_net([LayerSpec(3, 2)])
        other = make_net([LayerSpec(3, 2)], seed=1)
        out, cache = mlp_forward(net, np.zeros((2, 3)))
        with pytest.raises(ContractViolation):
            mlp_backward(other, cache, np.zeros_like(out))

    def test_eval_cache_rejected(self):
        net = make_net([LayerSpec(3, 2)]).eval()
        out, cache = mlp_forward(net, np.zeros((2, 3)))
        with pytest.raises(ContractViolation):
            mlp_backward(net, cache, np.zeros_like(out))


class TestGradientCheck:
    def test_linear_mse_is_near_exact(self):
        net = make_net([LayerSpec(2, 2, "identity")])
        rng = np.random.default_rng(3)
        res = gradient_check(net, rng.normal(size=(4, 2)), "mse", rng.normal(size=(4, 2)))
        assert res.max_rel_error < 1e-7

    @pytest.mark.parametrize(
        "specs",
        [
            [LayerSpec(3, 5, "relu"), LayerSpec(5, 2)],
            [LayerSpec(3, 5, "leaky_relu", leaky_slope=0.2), LayerSpec(5, 4, "leaky_relu"), LayerSpec(4, 2)],
            [LayerSpec(3, 6, "relu", batch_norm=True), LayerSpec(6, 4, "relu", batch_norm=True), LayerSpec(4, 2)],
            [LayerSpec(3, 4, "sigmoid"), LayerSpec(4, 2)],
            [LayerSpec(4, 6, "relu", batch_norm=True), LayerSpec(6, 6, "leaky_relu"), LayerSpec(6, 3, "sigmoid"), LayerSpec(3, 2)],
        ],
    )
    def test_finite_difference_agreement_mse(self, specs):
        net = make_net(specs, seed=7)
        rng = np.random.default_rng(11)
        batch = rng.normal(size=(8, specs[0].in_dim))
        targets = rng.normal(size=(8, specs[-1].out_dim))
        res = gradient_check(net, batch, "mse", targets)
        assert res.max_rel_error < 1e-4

    def test_finite_difference_agreement_bce_after_sigmoid(self):
        net = make_net([LayerSpec(4, 6, "relu"), LayerSpec(6, 1, "sigmoid")], seed=5)
        rng = np.random.default_rng(13)
        batch = rng.normal(size=(6, 4))
        labels = rng.integers(0, 2, size=(6, 1)).astype(float)
        res = gradient_check(net, batch, "bce", labels)
        assert res.max_rel_error < 1e-4

    def test_bce_requires_sigmoid_head(self):
        net = make_net([LayerSpec(3, 1, "identity")])
        with pytest.raises(ContractViolation):
            gradient_check(net, np.zeros((2, 3)), "bce", np.zeros((2, 1)))

    def test_dropout_forced_off_and_reported(self):
        net = make_net([LayerSpec(3, 4, "relu", dropout_rate=0.4), LayerSpec(4, 2)])
        rng = np.random.default_rng(17)
        res = gradient_check(net, rng.normal(size=(5, 3)), "mse", rng.normal(size=(5, 2)))
        assert res.dropout_was_disabled
        assert res.max_rel_error < 1e-4
        # original net keeps its dropout configuration
        assert net.layers[0].spec.dropout_rate == 0.4

    def test_no_dropout_reported_as_not_disabled(self):
        net = make_net([LayerSpec(3, 2)])
        rng = np.random.default_rng(19)
        res = gradient_check(net, rng.normal(size=(4, 3)), "mse", rng.normal(size=(4, 2)))
        assert not res.dropout_was_disabled


class TestAdam:
    def test_zero_gradient_fresh_state_is_noop(self):
        params = [np.array([1.0, -2.0, 3.0]), np.array([[0.5, 0.5]])]
        before = [p.copy() for p in params]
        state = AdamState.for_params(params, learning_rate=0.1)
        adam_step(params, [np.zeros_like(p) for p in params], state)
        for p, b in zip(params, before):
            assert np.array_equal(p, b)
        assert state.step_count == 1

    def test_first_step_closed_form(self):
        # With fresh moments and constant gradient g the bias-corrected update
        # is exactly lr * g / (|g| + eps).
        theta = np.array([1.0, -2.0, 0.25])
        g = np.array([0.3, -0.7, 1e-3])
        lr, eps = 0.01, 1e-8
        state = AdamState.for_params([theta], learning_rate=lr, epsilon=eps)
        expected = theta - lr * g / (np.abs(g) + eps)
        adam_step([theta], [g], state)
        assert np.max(np.abs(theta - expected)) < 1e-10

    def test_gan_configuration_accepted(self):
        params = [np.zeros(4)]
        state = AdamState.for_params(params, learning_rate=1e-4, betas=(0.5, 0.999))
        assert (state.beta1, state.beta2) == (0.5, 0.999)
        adam_step(params, [np.ones(4)], state)
        assert state.step_count == 1

    def test_step_count_monotone_and_moment_shapes_stable(self):
        params = [np.zeros((3, 2)), np.zeros(2)]
        state = AdamState.for_params(params, learning_rate=1e-3)
        shapes = [m.shape for m in state.m]
        rng = np.random.default_rng(23)
        for t in range(1, 6):
            adam_step(params, [rng.normal(size=p.shape) for p in params], state)
            assert state.step_count == t
            assert [m.shape for m in state.m] == shapes
            assert [v.shape for v in state.v] == shapes

    def test_shape_mismatch_rejected(self):
        params = [np.zeros(3)]
        state = AdamState.for_params(params, learning_rate=1e-3)
        with pytest.raises(ContractViolation):
            adam_step(params, [np.zeros(4)], state)


class TestLosses:
    def test_mse_identity_case(self):
        x = np.random.default_rng(0).normal(size=(5, 2))
        loss, grad = mse_loss(x, x.copy())
        assert loss == 0.0
        assert np.all(grad == 0)

    def test_mse_hand_value(self):
        loss, _ = mse_loss(np.array([[3.0, 4.0]]), np.array([[0.0, 0.0]]))
        assert loss == pytest.approx(25.0, abs=1e-12)

    def test_mse_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(29)
        pred = rng.normal(size=(4, 2))
        target = rng.normal(size=(4, 2))
        _, grad = mse_loss(pred, target)
        eps = 1e-6
        for i in range(4):
            for j in range(2):
                p = pred.copy()
                p[i, j] += eps
                lp = mse_loss(p, target)[0]
                p[i, j] -= 2 * eps
                lm = mse_loss(p, target)[0]
                assert abs((lp - lm) / (2 * eps) - grad[i, j]) < 1e-8

    def test_mse_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            mse_loss(np.zeros((0, 2)), np.zeros((0, 2)))

    def test_bce_half_probability_is_ln2(self):
        p = np.full((6, 1), 0.5)
        y = np.array([[0], [1], [0], [1], [1], [0]], dtype=float)
        loss, _ = bce_loss(p, y)
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_bce_perfect_classifier_hits_clamp_floor(self):
        p = np.array([[0.0], [1.0], [1.0]])
        y = np.array([[0.0], [1.0], [1.0]])
        loss, _ = bce_loss(p, y)
        assert 0 < loss < 1e-6

    def test_bce_clamp_keeps_confident_mistake_finite(self):
        loss, _ = bce_loss(np.array([[0.0]]), np.array([[1.0]]))
        assert loss == pytest.approx(-math.log(1e-7), rel=1e-12)
        assert math.isfinite(loss)

    def test_bce_rejects_non_binary_labels(self):
        with pytest.raises(ContractViolation):
            bce_loss(np.array([[0.5]]), np.array([[0.3]]))


class TestInvariants:
    def test_determinism_bitwise(self):
        def run():
            net = make_net(
                [LayerSpec(4, 8, "relu", dropout_rate=0.3), LayerSpec(8, 2)], seed=42
            )
            rng = np.random.default_rng(7)
            batch = np.linspace(-1, 1, 20).reshape(5, 4)
            out, cache = mlp_forward(net, batch, rng)
            _, up = mse_loss(out, np.ones((5, 2)))
            grads, _ = mlp_backward(net, cache, up)
            state = AdamState.for_params(net.parameters(), learning_rate=1e-3)
            adam_step(net.parameters(), grads, state)
            return out, grads, net.parameters()

        out1, grads1, params1 = run()
        out2, grads2, params2 = run()
        assert np.array_equal(out1, out2)
        for a, b in zip(grads1, grads2):
            assert np.array_equal(a, b)
        for a, b in zip(params1, params2):
            assert np.array_equal(a, b)

    def test_batch_norm_normalizes_batch(self):
        # large input scale keeps the 1e-5 normalizer epsilon negligible
        # relative to the per-feature variance
        net = make_net([LayerSpec(3, 5, "identity", batch_norm=True)], seed=1)
        batch = np.random.default_rng(31).normal(loc=3.0, scale=25.0, size=(64, 3))
        _, cache = mlp_forward(net, batch)
        xhat = cache.layers[0].bn_xhat
        assert np.max(np.abs(xhat.mean(axis=0))) < 1e-9
        assert np.max(np.abs(xhat.var(axis=0) - 1.0)) < 1e-6

    def test_batch_norm_eval_uses_running_stats(self):
        net = make_net([LayerSpec(2, 3, "identity", batch_norm=True)], seed=2)
        rng = np.random.default_rng(37)
        for _ in range(200):
            mlp_forward(net, rng.normal(loc=1.0, size=(32, 2)))
        net.eval()
        out1, _ = mlp_forward(net, np.zeros((1, 2)))
        out2, _ = mlp_forward(net, np.zeros((4, 2)))
        # eval output is per-sample, independent of batch composition
        assert np.allclose(out1[0], out2[0], atol=0, rtol=0)

    def test_dropout_inverted_scaling_preserves_mean(self):
        rate = 0.4
        net = make_net([LayerSpec(3, 4, "relu", dropout_rate=rate)], seed=3)
        x = np.array([[0.7, -0.2, 1.3]])
        eval_out, _ = mlp_forward(net.eval(), x)
        net.train()
        rng = np.random.default_rng(41)
        draws = 20000
        acc = np.zeros(4)
        for _ in range(draws):
            out, _ = mlp_forward(net, x, rng)
            acc += out[0]
        mean = acc / draws
        # Bernoulli mask mean: per-unit std of the scaled activation is
        # |a| * sqrt(rate/(1-rate)); require agreement within 3 standard errors.
        se = np.abs(eval_out[0]) * math.sqrt(rate / (1 - rate)) / math.sqrt(draws)
        active = np.abs(eval_out[0]) > 1e-12
        assert np.all(np.abs(mean[active] - eval_out[0][active]) < 3 * se[active] + 1e-12)

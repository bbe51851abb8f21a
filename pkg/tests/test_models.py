import math

import numpy as np
import pytest

from gradprune import (
    FcLayer,
    GruLayer,
    RnnLayer,
    ShapeError,
    StaleCacheError,
    backprop,
    build_model,
    gru_forward,
    make_rng,
    mse_loss,
    rnn_forward,
    softmax_cross_entropy,
)
from gradprune.models import build_model as _build
from helpers import finite_difference_grads, max_relative_grad_error, random_f64_model


def scalar_rnn(w_in=1.0, w_rec=1.0, bias=0.0, activation="tanh"):
    return RnnLayer(
        np.array([[w_in]], dtype=np.float32),
        np.array([[w_rec]], dtype=np.float32),
        np.array([bias], dtype=np.float32),
        activation,
    )


class TestRnnForward:
    def test_zero_network_stays_zero(self):
        layer = RnnLayer(
            np.zeros((3, 2), dtype=np.float32),
            np.zeros((3, 3), dtype=np.float32),
            np.zeros(3, dtype=np.float32),
        )
        xs = make_rng(0).uniform(-1, 1, (4, 2)).astype(np.float32)
        hs, _ = rnn_forward(layer, xs)
        np.testing.assert_array_equal(hs, np.zeros((4, 3), dtype=np.float32))

    def test_scalar_single_step(self):
        layer = scalar_rnn()
        x1, h0 = 0.3, 0.2
        hs, _ = rnn_forward(
            layer,
            np.array([[x1]], dtype=np.float32),
            h0=np.array([h0], dtype=np.float32),
        )
        assert hs[0, 0] == pytest.approx(math.tanh(x1 + h0), abs=1e-6)

    def test_one_state_per_timestep(self):
        layer = RnnLayer.init(make_rng(1), 3, 5)
        for t_len in (1, 4, 9):
            xs = make_rng(2).uniform(-1, 1, (t_len, 3)).astype(np.float32)
            hs, _ = rnn_forward(layer, xs)
            assert hs.shape == (t_len, 5)

    def test_empty_sequence_rejected(self):
        layer = RnnLayer.init(make_rng(1), 2, 3)
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((0, 1, 2), dtype=np.float32))

    def test_input_dim_mismatch(self):
        layer = RnnLayer.init(make_rng(1), 2, 3)
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((4, 1, 5), dtype=np.float32))

    def test_forward_deterministic(self):
        layer = RnnLayer.init(make_rng(3), 4, 6)
        xs = make_rng(4).uniform(-1, 1, (5, 2, 4)).astype(np.float32)
        a, _ = layer.forward(xs)
        b, _ = layer.forward(xs)
        np.testing.assert_array_equal(a, b)


class TestGruForward:
    def test_saturated_update_gate_keeps_state(self):
        rng = make_rng(5)
        layer = GruLayer.init(rng, 2, 4)
        layer.biases["update"][:] = -50.0  # update gate ~ 0 everywhere
        h0 = rng.uniform(-0.5, 0.5, 4).astype(np.float32)
        xs = rng.uniform(-1, 1, (6, 2)).astype(np.float32)
        hs, _ = gru_forward(layer, xs, h0=h0)
        for t in range(6):
            np.testing.assert_allclose(hs[t], h0, atol=1e-6)

    def test_zero_network_stays_zero(self):
        zeros_w = {g: np.zeros((3, 2), dtype=np.float32) for g in GruLayer.GATES}
        zeros_u = {g: np.zeros((3, 3), dtype=np.float32) for g in GruLayer.GATES}
        zeros_b = {g: np.zeros(3, dtype=np.float32) for g in GruLayer.GATES}
        layer = GruLayer(zeros_w, zeros_u, zeros_b)
        xs = make_rng(0).uniform(-1, 1, (5, 2)).astype(np.float32)
        hs, _ = gru_forward(layer, xs)
        np.testing.assert_array_equal(hs, np.zeros((5, 3), dtype=np.float32))

    def test_scalar_step_matches_closed_form(self):
        wz, uz, bz = 0.4, -0.3, 0.1
        wr, ur, br = -0.2, 0.5, 0.0
        wc, uc, bc = 0.7, 0.6, -0.1
        layer = GruLayer(
            {"update": np.array([[wz]], dtype=np.float32),
             "reset": np.array([[wr]], dtype=np.float32),
             "cand": np.array([[wc]], dtype=np.float32)},
            {"update": np.array([[uz]], dtype=np.float32),
             "reset": np.array([[ur]], dtype=np.float32),
             "cand": np.array([[uc]], dtype=np.float32)},
            {"update": np.array([bz], dtype=np.float32),
             "reset": np.array([br], dtype=np.float32),
             "cand": np.array([bc], dtype=np.float32)},
        )
        x, h = 0.25, -0.4
        sig = lambda v: 1.0 / (1.0 + math.exp(-v))
        z = sig(wz * x + uz * h + bz)
        r = sig(wr * x + ur * h + br)
        c = math.tanh(wc * x + uc * (r * h) + bc)
        expected = (1.0 - z) * h + z * c
        hs, _ = gru_forward(
            layer, np.array([[x]], dtype=np.float32), h0=np.array([h], dtype=np.float32)
        )
        assert hs[0, 0] == pytest.approx(expected, abs=1e-6)

    def test_hidden_state_bounded_by_convex_hull(self):
        # each h_t component is a convex mix of h_{t-1} and a tanh output,
        # so |h_t| can never exceed max(|h0|_inf, 1)
        rng = make_rng(11)
        for _ in range(20):
            layer = GruLayer.init(rng, 3, 5)
            h0 = rng.uniform(-2.0, 2.0, 5).astype(np.float32)
            xs = rng.uniform(-3.0, 3.0, (7, 3)).astype(np.float32)
            hs, _ = gru_forward(layer, xs, h0=h0)
            bound = max(float(np.abs(h0).max()), 1.0) + 1e-6
            assert float(np.abs(hs).max()) <= bound


class TestBackprop:
    def test_zero_loss_gradient_gives_zero_grads(self):
        model = build_model(make_rng(2), "rnn", 2, 4, 1, 1)
        xs = make_rng(3).uniform(-1, 1, (3, 2, 2)).astype(np.float32)
        out, cache = model.forward(xs)
        grads = backprop(model, cache, np.zeros_like(out))
        for g in grads.values():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    @pytest.mark.parametrize("cell", ["rnn", "gru"])
    def test_gradients_match_finite_differences(self, cell):
        rng = make_rng(17)
        for trial in range(6):
            hidden = int(rng.integers(2, 9))
            t_len = int(rng.integers(1, 6))
            model = random_f64_model(rng, cell, 3, hidden, 1, 2)
            xs = rng.uniform(-1, 1, (t_len, 2, 3))
            targets = rng.uniform(-1, 1, (2, 2))
            out, cache = model.forward(xs)
            _, d_out = mse_loss(out, targets)
            analytic = backprop(model, cache, d_out)
            numeric = finite_difference_grads(model, xs, targets, mse_loss)
            assert max_relative_grad_error(analytic, numeric) < 1e-4

    def test_masked_weight_gradient_generally_nonzero(self):
        # Gradients are computed densely: zeroing a weight does not zero
        # its gradient, which is what makes regrowth possible.
        rng = make_rng(23)
        model = random_f64_model(rng, "rnn", 2, 4, 1, 1)
        w = model.layers[0].recurrent_weights
        w[1, 2] = 0.0
        xs = rng.uniform(-1, 1, (4, 3, 2))
        targets = rng.uniform(-1, 1, (3, 1))
        out, cache = model.forward(xs)
        _, d_out = mse_loss(out, targets)
        analytic = backprop(model, cache, d_out)
        numeric = finite_difference_grads(model, xs, targets, mse_loss)
        assert abs(analytic["rnn0.w_rec"][1, 2]) > 1e-6
        assert analytic["rnn0.w_rec"][1, 2] == pytest.approx(
            numeric["rnn0.w_rec"][1, 2], rel=1e-3
        )

    def test_cross_entropy_gradients_match_finite_differences(self):
        rng = make_rng(29)
        model = random_f64_model(rng, "rnn", 3, 5, 1, 4, output_mode="all")
        xs = rng.uniform(-1, 1, (4, 2, 3))
        targets = rng.integers(0, 4, size=(4, 2))
        out, cache = model.forward(xs)
        _, d_out = softmax_cross_entropy(out, targets)
        analytic = backprop(model, cache, d_out)
        numeric = finite_difference_grads(model, xs, targets, softmax_cross_entropy)
        assert max_relative_grad_error(analytic, numeric) < 1e-4

    def test_clipped_relu_gradients_away_from_kinks(self):
        rng = make_rng(31)
        model = random_f64_model(rng, "rnn", 2, 4, 1, 1, activation="clipped_relu")
        # positive bias keeps every pre-activation well inside (0, 20)
        model.layers[0].bias += 0.5
        xs = rng.uniform(0.05, 0.4, (3, 2, 2))
        zs_all = model.layers[0].forward(xs)[1].data["zs"]
        assert np.all(zs_all > 0.02) and np.all(zs_all < 19.0)
        targets = rng.uniform(-1, 1, (2, 1))
        out, cache = model.forward(xs)
        _, d_out = mse_loss(out, targets)
        analytic = backprop(model, cache, d_out)
        numeric = finite_difference_grads(model, xs, targets, mse_loss, step=1e-4)
        assert max_relative_grad_error(analytic, numeric) < 1e-4

    def test_stale_cache_rejected(self):
        model_a = build_model(make_rng(0), "rnn", 2, 3, 1, 1)
        model_b = build_model(make_rng(1), "rnn", 2, 3, 1, 1)
        xs = make_rng(2).uniform(-1, 1, (3, 1, 2)).astype(np.float32)
        out, cache = model_a.forward(xs)
        with pytest.raises(StaleCacheError):
            model_b.backward(cache, np.zeros_like(out))

    def test_deep_stack_gradients(self):
        rng = make_rng(37)
        model = random_f64_model(rng, "gru", 2, 3, 2, 1)
        xs = rng.uniform(-1, 1, (3, 2, 2))
        targets = rng.uniform(-1, 1, (2, 1))
        out, cache = model.forward(xs)
        _, d_out = mse_loss(out, targets)
        analytic = backprop(model, cache, d_out)
        numeric = finite_difference_grads(model, xs, targets, mse_loss)
        assert max_relative_grad_error(analytic, numeric) < 1e-4


class TestLosses:
    def test_mse_zero_at_match(self):
        pred = np.array([[1.0, 2.0]], dtype=np.float32)
        loss, grad = mse_loss(pred, pred.copy())
        assert loss == 0.0
        np.testing.assert_array_equal(grad, np.zeros_like(pred))

    def test_mse_value(self):
        loss, _ = mse_loss(np.array([[1.0]], dtype=np.float32), np.array([[3.0]]))
        assert loss == pytest.approx(4.0)

    def test_cross_entropy_uniform(self):
        logits = np.zeros((2, 4), dtype=np.float32)
        loss, _ = softmax_cross_entropy(logits, np.array([0, 3]))
        assert loss == pytest.approx(math.log(4.0), abs=1e-6)


def test_build_model_shapes():
    model = _build(make_rng(0), "gru", 3, 8, 2, 5, output_mode="all")
    xs = make_rng(1).uniform(-1, 1, (4, 2, 3)).astype(np.float32)
    out, _ = model.forward(xs)
    assert out.shape == (4, 2, 5)
    names = {s.name for s in model.param_specs()}
    assert "gru0.update_in" in names and "gru1.cand_rec" in names and "out.weight" in names
    assert model.num_params() == sum(s.array.size for s in model.param_specs())

import math

import numpy as np
import pytest

from capstack.lstm import (
    InitMLP,
    LSTMLayerParams,
    StackParams,
    cell_step,
    init_states,
    init_stack_params,
    stack_step,
)
from capstack.tensor import Parameter, Tensor, backward, no_grad


def _zero_layer(input_dim, hidden):
    def p(name, shape):
        return Parameter(np.zeros(shape), name=name)

    return LSTMLayerParams(
        W_i=p("W_i", (hidden, input_dim)), W_f=p("W_f", (hidden, input_dim)),
        W_o=p("W_o", (hidden, input_dim)), W_z=p("W_z", (hidden, input_dim)),
        R_i=p("R_i", (hidden, hidden)), R_f=p("R_f", (hidden, hidden)),
        R_o=p("R_o", (hidden, hidden)), R_z=p("R_z", (hidden, hidden)),
        b_i=p("b_i", hidden), b_f=p("b_f", hidden),
        b_o=p("b_o", hidden), b_z=p("b_z", hidden),
    )


def test_cell_step_all_zero():
    params = _zero_layer(2, 3)
    h, c = cell_step(Tensor(np.zeros(2)), Tensor(np.zeros(3)), Tensor(np.zeros(3)), params)
    assert np.array_equal(h.data, np.zeros(3))
    assert np.array_equal(c.data, np.zeros(3))


def test_cell_step_unit_cell_memory():
    # gates at 0.5, z = 0: c = 0.5 * c_prev, h = 0.5 * tanh(0.5)
    params = _zero_layer(2, 3)
    h, c = cell_step(Tensor(np.zeros(2)), Tensor(np.zeros(3)), Tensor(np.ones(3)), params)
    assert np.allclose(c.data, 0.5, atol=1e-15)
    assert np.allclose(h.data, 0.23105857863000487, atol=1e-12)


def test_cell_step_saturated_forget_gate_preserves_cell():
    params = _zero_layer(2, 4)
    params.b_f.data[:] = 50.0
    params.b_i.data[:] = -50.0  # input gate shut so only the forget path remains
    v = np.array([0.3, -1.2, 4.0, 0.0])
    _, c = cell_step(Tensor(np.zeros(2)), Tensor(np.zeros(4)), Tensor(v), params)
    assert np.abs(c.data - v).max() < 1e-15


def _scalar_reference(u, h_prev, c_prev, w, r, b):
    """Direct float evaluation of the six gate equations for one unit."""
    sig = lambda x: 1.0 / (1.0 + math.exp(-x))
    i = sig(w["i"] * u + r["i"] * h_prev + b["i"])
    f = sig(w["f"] * u + r["f"] * h_prev + b["f"])
    o = sig(w["o"] * u + r["o"] * h_prev + b["o"])
    z = math.tanh(w["z"] * u + r["z"] * h_prev + b["z"])
    c = i * z + f * c_prev
    h = o * math.tanh(c)
    return h, c


def test_cell_step_matches_scalar_reference():
    rng = np.random.default_rng(8)
    for _ in range(25):
        w = {g: rng.normal() for g in "ifoz"}
        r = {g: rng.normal() for g in "ifoz"}
        b = {g: rng.normal() for g in "ifoz"}
        u, h_prev, c_prev = rng.normal(size=3)
        params = _zero_layer(1, 1)
        for g in "ifoz":
            getattr(params, f"W_{g}").data[:] = w[g]
            getattr(params, f"R_{g}").data[:] = r[g]
            getattr(params, f"b_{g}").data[:] = b[g]
        h, c = cell_step(Tensor([u]), Tensor([h_prev]), Tensor([c_prev]), params)
        h_ref, c_ref = _scalar_reference(u, h_prev, c_prev, w, r, b)
        assert abs(h.data[0] - h_ref) < 1e-12
        assert abs(c.data[0] - c_ref) < 1e-12


def test_cell_step_output_bounded():
    rng = np.random.default_rng(2)
    params = _zero_layer(3, 5)
    for p in params.parameters():
        p.data = rng.uniform(-2, 2, size=p.data.shape)
    h, _ = cell_step(
        Tensor(rng.normal(size=3)), Tensor(rng.normal(size=5)),
        Tensor(rng.normal(size=5)), params,
    )
    assert np.abs(h.data).max() < 1.0


def test_cell_step_dim_mismatch():
    params = _zero_layer(2, 3)
    with pytest.raises(ValueError):
        cell_step(Tensor(np.zeros(5)), Tensor(np.zeros(3)), Tensor(np.zeros(3)), params)


def _stack(input_dim, hidden, feat_dim, layers=3, seed=0):
    return init_stack_params(input_dim, hidden, feat_dim,
                             np.random.default_rng(seed), num_layers=layers)


def test_init_states_mean_of_identical_rows():
    params = _stack(2, 4, 3)
    v = np.array([0.3, -0.4, 0.9])
    ann = np.tile(v, (5, 1))
    # zero out the MLPs so the states echo tanh(0 . mean + 0) = 0
    for mlp in params.init_h + params.init_c:
        for w, b in mlp.layers:
            w.data[:] = 0.0
            b.data[:] = 0.0
    state = init_states(Tensor(ann), params)
    for h in state.h + state.c:
        assert np.array_equal(h.data, np.zeros(4))


def test_init_states_zero_weights_give_tanh_bias():
    params = _stack(2, 3, 2)
    for mlp in params.init_h + params.init_c:
        for w, b in mlp.layers:
            w.data[:] = 0.0
            b.data[:] = 0.7
    state = init_states(Tensor(np.ones((4, 2))), params)
    for t in state.h + state.c:
        assert np.allclose(t.data, np.tanh(0.7), atol=1e-15)


def test_init_states_single_annotation_is_its_own_mean():
    params = _stack(2, 3, 4)
    ann = np.array([[0.1, 0.2, 0.3, 0.4]])
    one = init_states(Tensor(ann), params)
    tiled = init_states(Tensor(np.tile(ann, (6, 1))), params)
    for a, b in zip(one.h + one.c, tiled.h + tiled.c):
        assert np.allclose(a.data, b.data, atol=1e-15)


def test_init_states_rejects_empty():
    params = _stack(2, 3, 4)
    with pytest.raises(ValueError):
        init_states(Tensor(np.zeros((0, 4))), params)


def test_init_mlp_applies_to_mean_not_mean_of_outputs():
    """tanh is nonlinear, so MLP(mean) != mean(MLP) on a spread-out pair."""
    params = _stack(2, 1, 1, layers=1)
    (w, b) = params.init_h[0].layers[0]
    w.data[:] = 3.0
    b.data[:] = 0.0
    ann = np.array([[2.0], [-2.0]])  # mean 0 -> tanh(0) = 0
    state = init_states(Tensor(ann), params)
    assert state.h[0].data[0] == 0.0
    mean_of_outputs = (np.tanh(6.0) + np.tanh(-6.0)) / 2  # also 0 here, so use asymmetric pair
    ann = np.array([[2.0], [0.0]])  # mean 1 -> tanh(3)
    state = init_states(Tensor(ann), params)
    assert state.h[0].data[0] == pytest.approx(np.tanh(3.0))
    assert state.h[0].data[0] != pytest.approx((np.tanh(6.0) + np.tanh(0.0)) / 2)


def test_stack_step_zero_everything():
    params = _stack(2, 3, 4)
    for p in params.parameters():
        p.data[:] = 0.0
    state = init_states(Tensor(np.zeros((2, 4))), params)
    top, _ = stack_step(Tensor(np.zeros(2)), state, params)
    assert np.array_equal(top.data, np.zeros(3))


def test_single_layer_stack_equals_cell_step():
    params = _stack(2, 3, 4, layers=1, seed=5)
    ann = np.random.default_rng(1).normal(size=(3, 4))
    state = init_states(Tensor(ann), params)
    x = Tensor(np.array([0.2, -0.5]))
    top, new_state = stack_step(x, state, params)
    h_ref, c_ref = cell_step(x, state.h[0], state.c[0], params.layers[0])
    assert np.array_equal(top.data, h_ref.data)
    assert np.array_equal(new_state.c[0].data, c_ref.data)


def test_stack_gradient_reaches_layer_one_input_weights():
    params = _stack(2, 3, 4, seed=7)
    ann = np.random.default_rng(2).normal(size=(3, 4))
    state = init_states(Tensor(ann), params)
    top, _ = stack_step(Tensor(np.array([0.3, 0.8])), state, params)
    backward(top.sum())
    w1 = params.layers[0].W_i
    assert w1.grad is not None and np.abs(w1.grad).max() > 0

    # finite-difference spot check on one entry
    def loss():
        with no_grad():
            st = init_states(Tensor(ann), params)
            t, _ = stack_step(Tensor(np.array([0.3, 0.8])), st, params)
            return t.data.sum()

    step = 1e-5
    original = w1.data[0, 0]
    w1.data[0, 0] = original + step
    up = loss()
    w1.data[0, 0] = original - step
    down = loss()
    w1.data[0, 0] = original
    fd = (up - down) / (2 * step)
    assert w1.grad[0, 0] == pytest.approx(fd, rel=1e-4, abs=1e-8)

"""LSTM cell, the three-layer stack, and annotation-driven initial states.

A cell step evaluates, in order:

    i = sigmoid(W_i u + R_i h_prev + b_i)
    f = sigmoid(W_f u + R_f h_prev + b_f)
    o = sigmoid(W_o u + R_o h_prev + b_o)
    z = tanh(W_z u + R_z h_prev + b_z)
    c = i * z + f * c_prev
    h = o * tanh(c)

The stack feeds each layer's h output to the layer above and returns the top
layer's h.  Initial hidden and cell states come from per-layer affine+tanh
maps applied to the mean annotation vector (the map is applied to the mean,
not averaged over per-annotation outputs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Parameter, Tensor, add, matmul, mean_rows, mul, sigmoid, tanh


@dataclass
class LSTMLayerParams:
    W_i: Parameter
    W_f: Parameter
    W_o: Parameter
    W_z: Parameter
    R_i: Parameter
    R_f: Parameter
    R_o: Parameter
    R_z: Parameter
    b_i: Parameter
    b_f: Parameter
    b_o: Parameter
    b_z: Parameter

    def parameters(self):
        return [
            self.W_i, self.W_f, self.W_o, self.W_z,
            self.R_i, self.R_f, self.R_o, self.R_z,
            self.b_i, self.b_f, self.b_o, self.b_z,
        ]


@dataclass
class InitMLP:
    """Affine + tanh layers mapping the mean annotation to an initial state."""

    layers: list  # of (weight, bias) Parameter pairs

    def parameters(self):
        return [p for w, b in self.layers for p in (w, b)]


@dataclass
class StackParams:
    layers: list  # of LSTMLayerParams, bottom first
    init_h: list  # of InitMLP, one per layer
    init_c: list

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        for mlp in self.init_h + self.init_c:
            params.extend(mlp.parameters())
        return params


@dataclass
class StackState:
    h: list  # of Tensor[hidden], bottom first
    c: list


def uniform_init(rng, shape, fan_in):
    """Scaled uniform init in +/- 1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_layer_params(input_dim, hidden_size, rng, prefix):
    def weight(name, rows, cols):
        return Parameter(uniform_init(rng, (rows, cols), cols), name=f"{prefix}.{name}")

    def bias(name):
        return Parameter(np.zeros(hidden_size), name=f"{prefix}.{name}")

    return LSTMLayerParams(
        W_i=weight("W_i", hidden_size, input_dim),
        W_f=weight("W_f", hidden_size, input_dim),
        W_o=weight("W_o", hidden_size, input_dim),
        W_z=weight("W_z", hidden_size, input_dim),
        R_i=weight("R_i", hidden_size, hidden_size),
        R_f=weight("R_f", hidden_size, hidden_size),
        R_o=weight("R_o", hidden_size, hidden_size),
        R_z=weight("R_z", hidden_size, hidden_size),
        b_i=bias("b_i"),
        b_f=bias("b_f"),
        b_o=bias("b_o"),
        b_z=bias("b_z"),
    )


def init_mlp_params(in_dim, out_dim, depth, rng, prefix):
    layers = []
    dim = in_dim
    for k in range(depth):
        weight = Parameter(uniform_init(rng, (out_dim, dim), dim), name=f"{prefix}.w{k}")
        bias = Parameter(np.zeros(out_dim), name=f"{prefix}.b{k}")
        layers.append((weight, bias))
        dim = out_dim
    return InitMLP(layers)


def init_stack_params(input_dim, hidden_size, feat_dim, rng,
                      num_layers=3, init_mlp_depth=1, prefix="stack"):
    """Fresh stack parameters; layer 1 consumes ``input_dim``, the rest consume
    the hidden size of the layer below."""
    layers, init_h, init_c = [], [], []
    for idx in range(num_layers):
        dim = input_dim if idx == 0 else hidden_size
        layers.append(init_layer_params(dim, hidden_size, rng, f"{prefix}.layer{idx + 1}"))
        init_h.append(init_mlp_params(feat_dim, hidden_size, init_mlp_depth, rng,
                                      f"{prefix}.init_h{idx + 1}"))
        init_c.append(init_mlp_params(feat_dim, hidden_size, init_mlp_depth, rng,
                                      f"{prefix}.init_c{idx + 1}"))
    return StackParams(layers, init_h, init_c)


def cell_step(u, h_prev, c_prev, params):
    """One LSTM cell update; returns (h, c)."""
    i = sigmoid(add(add(matmul(params.W_i, u), matmul(params.R_i, h_prev)), params.b_i))
    f = sigmoid(add(add(matmul(params.W_f, u), matmul(params.R_f, h_prev)), params.b_f))
    o = sigmoid(add(add(matmul(params.W_o, u), matmul(params.R_o, h_prev)), params.b_o))
    z = tanh(add(add(matmul(params.W_z, u), matmul(params.R_z, h_prev)), params.b_z))
    c = add(mul(i, z), mul(f, c_prev))
    h = mul(o, tanh(c))
    return h, c


def apply_init_mlp(mlp, x):
    for weight, bias in mlp.layers:
        x = tanh(add(matmul(weight, x), bias))
    return x


def init_states(annotations, params):
    """Initial per-layer states from the mean annotation vector."""
    annotations = annotations if isinstance(annotations, Tensor) else Tensor(annotations)
    if annotations.data.ndim != 2 or annotations.data.shape[0] < 1:
        raise ValueError(
            f"annotations must be a non-empty L x D matrix, got shape "
            f"{annotations.data.shape}"
        )
    mean = mean_rows(annotations)
    h = [apply_init_mlp(mlp, mean) for mlp in params.init_h]
    c = [apply_init_mlp(mlp, mean) for mlp in params.init_c]
    return StackState(h=h, c=c)


def stack_step(x, state, params):
    """Run one time step through the stack; returns (top h, new state)."""
    new_h, new_c = [], []
    layer_input = x
    for layer, h_prev, c_prev in zip(params.layers, state.h, state.c):
        h, c = cell_step(layer_input, h_prev, c_prev, layer)
        new_h.append(h)
        new_c.append(c)
        layer_input = h
    return new_h[-1], StackState(h=new_h, c=new_c)

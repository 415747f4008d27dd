"""Finite-difference verification of the analytic gradients.

The oracle never touches the autodiff machinery beyond forward evaluation:
it perturbs one parameter element at a time and recomputes the loss, so it
stays an independent route against the backward pass.
"""

from __future__ import annotations

import numpy as np

from .captioner import ModelConfig, build_model, forward_teacher_forced
from .tensor import backward, no_grad
from .text import END_ID, START_ID
from .train import cross_entropy

TINY_DIMS = {
    "hidden_size": 16,
    "embed_dim": 8,
    "feat_dim": 5,
    "regions": 4,
    "vocab_size": 12,
    "attention_dim": 8,
}


def finite_difference_gradients(loss_fn, params, step=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. every element."""
    grads = {}
    for p in params:
        grad = np.zeros_like(p.data)
        flat_param = p.data.ravel()
        flat_grad = grad.ravel()
        for i in range(flat_param.size):
            original = flat_param[i]
            flat_param[i] = original + step
            up = loss_fn()
            flat_param[i] = original - step
            down = loss_fn()
            flat_param[i] = original
            flat_grad[i] = (up - down) / (2.0 * step)
        grads[p.name] = grad
    return grads


def max_relative_error(analytic, numeric):
    diff = np.abs(analytic - numeric)
    scale = np.maximum(1.0, np.abs(numeric))
    return float((diff / scale).max())


def _group(name):
    return name.split(".", 1)[0] if "." in name else name


def model_gradcheck(variant, dims=None, caption_len=5, seed=0, step=1e-5,
                    corrupt=False):
    """Compare backward() against finite differences on a tiny caption model.

    Returns {group name: max relative error} over all parameter groups.  The
    ``corrupt`` hook deliberately bends one analytic gradient so the failure
    path of the check itself stays testable.
    """
    dims = dict(TINY_DIMS, **(dims or {}))
    config = ModelConfig(
        variant=variant,
        vocab_size=dims["vocab_size"],
        feat_dim=dims["feat_dim"],
        hidden_size=dims["hidden_size"],
        embed_dim=dims["embed_dim"],
        attention_dim=dims["attention_dim"],
        seed=seed,
    )
    model = build_model(config)
    rng = np.random.default_rng(seed + 1)
    annotations = rng.uniform(-1, 1, size=(dims["regions"], dims["feat_dim"]))
    body = rng.integers(4, dims["vocab_size"], size=caption_len - 2).tolist()
    caption = [START_ID] + body + [END_ID]

    def loss_value():
        with no_grad():
            logits, _ = forward_teacher_forced(model, annotations, caption)
            return cross_entropy(logits, caption[1:]).item()

    model.zero_grads()
    logits, _ = forward_teacher_forced(model, annotations, caption)
    backward(cross_entropy(logits, caption[1:]))
    params = model.parameters()
    analytic = {p.name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for p in params}
    if corrupt:
        analytic[params[0].name] = analytic[params[0].name] + 1e-2
    numeric = finite_difference_gradients(loss_value, params, step=step)
    errors = {}
    for p in params:
        err = max_relative_error(analytic[p.name], numeric[p.name])
        group = _group(p.name)
        errors[group] = max(errors.get(group, 0.0), err)
    return errors

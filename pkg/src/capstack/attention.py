"""Soft attention over annotation vectors: scoring, weights, context.

Each location is scored by a single-hidden-layer additive model,

    e_i = w_s . tanh(W_a a_i + U_a h_prev + b_a)

the weights are the softmax of the scores, and the context vector is their
expectation over the annotations.  The simplex property of the weights is
checked on every call so a violation surfaces immediately during training or
decoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Parameter, add, matmul, softmax, tanh, transpose
from .lstm import uniform_init

ALPHA_SUM_TOL = 1e-9


@dataclass
class AttentionParams:
    W_a: Parameter  # att x D
    U_a: Parameter  # att x hidden
    b_a: Parameter  # att
    w_s: Parameter  # att

    def parameters(self):
        return [self.W_a, self.U_a, self.b_a, self.w_s]


def init_attention_params(feat_dim, hidden_size, attention_dim, rng, prefix="attn"):
    return AttentionParams(
        W_a=Parameter(uniform_init(rng, (attention_dim, feat_dim), feat_dim),
                      name=f"{prefix}.W_a"),
        U_a=Parameter(uniform_init(rng, (attention_dim, hidden_size), hidden_size),
                      name=f"{prefix}.U_a"),
        b_a=Parameter(np.zeros(attention_dim), name=f"{prefix}.b_a"),
        w_s=Parameter(uniform_init(rng, attention_dim, attention_dim),
                      name=f"{prefix}.w_s"),
    )


def score(annotations, h_prev, params):
    """Unnormalized relevance score per annotation row."""
    projected = matmul(annotations, transpose(params.W_a))      # L x att
    recurrent = add(matmul(params.U_a, h_prev), params.b_a)     # att
    return matmul(tanh(add(projected, recurrent)), params.w_s)  # L


def normalize(scores):
    """Softmax the scores into simplex weights, with an online sanity check."""
    alpha = softmax(scores)
    _check_simplex(alpha.data)
    return alpha


def context(annotations, alpha):
    """Expected annotation under the weights: sum_i alpha_i * a_i."""
    return matmul(alpha, annotations)


def attend(annotations, h_prev, params):
    """One attention step; returns (alpha, context vector)."""
    alpha = normalize(score(annotations, h_prev, params))
    return alpha, context(annotations, alpha)


def _check_simplex(alpha):
    total = alpha.sum()
    if not np.isfinite(total) or abs(total - 1.0) > ALPHA_SUM_TOL or (alpha <= 0).any():
        raise AssertionError(
            f"attention weights left the simplex: sum={total!r}, min={alpha.min()!r}"
        )


def alpha_records(image_id, alphas):
    """Line-delimited export of per-step attention weights for one caption."""
    return [
        f"{image_id}\t{t}\t{' '.join(format(a, '.10g') for a in np.asarray(alpha).ravel())}"
        for t, alpha in enumerate(alphas)
    ]

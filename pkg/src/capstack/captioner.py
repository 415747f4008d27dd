"""Caption models for both frameworks, teacher-forced forward and decoding.

In the encoder-decoder variant the image enters only through the initial
states (mean annotation); each step consumes the embedding of the previous
token.  In the soft-attention variant a context vector computed against the
previous top-layer hidden state is concatenated to that embedding, which is
algebraically the same as giving every gate its own projection of the
context (the per-gate blocks live inside the wider input weight matrices).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention as attn
from .lstm import StackParams, init_stack_params, init_states, stack_step, uniform_init
from .tensor import (
    Parameter,
    Tensor,
    add,
    concat,
    log_softmax,
    matmul,
    no_grad,
    row,
)
from .text import END_ID, START_ID

VARIANTS = ("encoder_decoder", "soft_attention")


@dataclass
class ModelConfig:
    variant: str
    vocab_size: int
    feat_dim: int
    hidden_size: int = 512
    embed_dim: int = 300
    attention_dim: int = 256
    num_layers: int = 3
    init_mlp_depth: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.vocab_size < 5:
            raise ValueError(f"vocabulary must cover the reserved tokens, got K={self.vocab_size}")


@dataclass
class CaptionModel:
    config: ModelConfig
    embeddings: Parameter
    stack: StackParams
    attention: object  # AttentionParams for soft_attention, else None
    out_w: Parameter
    out_b: Parameter

    def parameters(self):
        params = [self.embeddings] + self.stack.parameters()
        if self.attention is not None:
            params.extend(self.attention.parameters())
        params.extend([self.out_w, self.out_b])
        return params

    def parameter_groups(self):
        """The two learning-rate groups: fine-tuned embeddings vs. decoder."""
        return {
            "embedding": [self.embeddings],
            "decoder": [p for p in self.parameters() if p is not self.embeddings],
        }

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()


def build_model(config, embeddings=None, rng=None):
    """Fresh model for a config; ``embeddings`` may carry pretrained vectors."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if embeddings is None:
        embeddings = Parameter(
            uniform_init(rng, (config.vocab_size, config.embed_dim), config.embed_dim),
            name="embeddings",
            lr_scale=0.1,
        )
    elif embeddings.data.shape != (config.vocab_size, config.embed_dim):
        raise ValueError(
            f"embedding matrix shape {embeddings.data.shape} does not match "
            f"(K={config.vocab_size}, m={config.embed_dim})"
        )
    attentional = config.variant == "soft_attention"
    stack_input = config.embed_dim + (config.feat_dim if attentional else 0)
    stack = init_stack_params(
        stack_input,
        config.hidden_size,
        config.feat_dim,
        rng,
        num_layers=config.num_layers,
        init_mlp_depth=config.init_mlp_depth,
    )
    attention = (
        attn.init_attention_params(config.feat_dim, config.hidden_size,
                                   config.attention_dim, rng)
        if attentional
        else None
    )
    out_w = Parameter(
        uniform_init(rng, (config.vocab_size, config.hidden_size), config.hidden_size),
        name="out.W",
    )
    out_b = Parameter(np.zeros(config.vocab_size), name="out.b")
    return CaptionModel(config, embeddings, stack, attention, out_w, out_b)


def _annotation_tensor(features):
    ann = getattr(features, "annotations", features)
    ann = ann if isinstance(ann, Tensor) else Tensor(ann)
    if ann.data.ndim != 2 or ann.data.shape[0] < 1:
        raise ValueError(f"annotations must be a non-empty L x D matrix, got {ann.data.shape}")
    return ann


def _step(model, annotations, prev_token, state):
    """Advance the decoder one token; returns (logits, new state, alpha|None)."""
    x = row(model.embeddings, prev_token)
    alpha = None
    if model.attention is not None:
        alpha, ctx = attn.attend(annotations, state.h[-1], model.attention)
        x = concat([x, ctx])
    top_h, state = stack_step(x, state, model.stack)
    logits = add(matmul(model.out_w, top_h), model.out_b)
    return logits, state, alpha


def forward_teacher_forced(model, features, caption_ids):
    """Logits for every caption position, conditioning on the ground truth.

    Step t consumes caption token t and predicts token t+1, so a caption of
    length n yields n-1 logit rows and nothing is predicted after <END>.
    Returns (logits list, alphas list or None).
    """
    if not caption_ids or caption_ids[0] != START_ID:
        raise ValueError("caption must start with the <START> token")
    annotations = _annotation_tensor(features)
    state = init_states(annotations, model.stack)
    logits_seq = []
    alphas = [] if model.attention is not None else None
    for prev_token in caption_ids[:-1]:
        logits, state, alpha = _step(model, annotations, prev_token, state)
        logits_seq.append(logits)
        if alphas is not None:
            alphas.append(alpha)
    return logits_seq, alphas


@dataclass
class DecodeResult:
    tokens: list
    logprob: float
    alphas: list = field(default=None)


def greedy_decode(model, features, n_max):
    """Argmax decoding from <START>; stops at <END> or after n_max tokens.

    Ties break toward the lower token index.  The returned token list excludes
    the sentinels; alphas (soft attention only) cover every executed step,
    including the one that produced <END>.
    """
    with no_grad():
        annotations = _annotation_tensor(features)
        state = init_states(annotations, model.stack)
        tokens, alphas, logprob = [], [], 0.0
        prev = START_ID
        for _ in range(n_max):
            logits, state, alpha = _step(model, annotations, prev, state)
            if alpha is not None:
                alphas.append(alpha.data)
            logprobs = log_softmax(logits).data
            nxt = int(np.argmax(logits.data))
            logprob += float(logprobs[nxt])
            if nxt == END_ID:
                break
            tokens.append(nxt)
            prev = nxt
    return DecodeResult(tokens, logprob, alphas if model.attention is not None else None)


def beam_decode(model, features, beam_width, n_max):
    """Beam search over total log-probability (no length normalization).

    Keeps the ``beam_width`` best partial sequences; candidates that emit
    <END> retire into a pool, and sequences still alive at the horizon join
    it.  The best pooled sequence wins; ties break lexicographically on token
    indices.
    """
    if beam_width < 1:
        raise ValueError(f"beam width must be >= 1, got {beam_width}")
    with no_grad():
        annotations = _annotation_tensor(features)
        state = init_states(annotations, model.stack)
        live = [((), 0.0, state, START_ID)]
        pool = []
        for _ in range(n_max):
            if not live:
                break
            candidates = []
            for tokens, score, st, prev in live:
                logits, new_state, _ = _step(model, annotations, prev, st)
                logprobs = log_softmax(logits).data
                for k in range(logprobs.shape[0]):
                    candidates.append((tokens + (k,), score + float(logprobs[k]), new_state))
            candidates.sort(key=lambda c: (-c[1], c[0]))
            live = []
            for tokens, score, st in candidates[:beam_width]:
                if tokens[-1] == END_ID:
                    pool.append((tokens[:-1], score))
                else:
                    live.append((tokens, score, st, tokens[-1]))
        pool.extend((tokens, score) for tokens, score, _, _ in live)
    best_tokens, best_score = min(pool, key=lambda c: (-c[1], c[0]))
    return DecodeResult(list(best_tokens), best_score)


def collect_alphas(model, features, tokens, ended):
    """Replay a decoded sequence to recover its per-step attention weights."""
    if model.attention is None:
        raise ValueError("attention weights exist only for the soft_attention variant")
    inputs = [START_ID] + list(tokens)
    steps = len(tokens) + 1 if ended else len(tokens)
    with no_grad():
        annotations = _annotation_tensor(features)
        state = init_states(annotations, model.stack)
        alphas = []
        for prev in inputs[:steps]:
            _, state, alpha = _step(model, annotations, prev, state)
            alphas.append(alpha.data)
    return alphas


def sequence_logprob(model, features, caption_ids):
    """Total log-probability of a full caption under the model."""
    vocab_size = model.config.vocab_size
    for t in caption_ids:
        if not 0 <= t < vocab_size:
            raise ValueError(f"token id {t} out of range for vocabulary size {vocab_size}")
    with no_grad():
        logits_seq, _ = forward_teacher_forced(model, features, caption_ids)
        total = 0.0
        for logits, target in zip(logits_seq, caption_ids[1:]):
            total += float(log_softmax(logits).data[target])
    return total

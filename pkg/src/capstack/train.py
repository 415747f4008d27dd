"""Training: loss, Adam with differential learning rates, the epoch loop with
on-the-fly augmentation, validation scheduling, and "ICKP" checkpoints.

The embedding matrix forms its own parameter group updated at 0.1x the
decoder rate; depending on the unfreeze policy it starts frozen and is
released when validation log-likelihood worsens while BLEU-4 does not (the
correlation-breakdown trigger).

ICKP layout (u32/u64 little-endian, f64 data):

    magic "ICKP" | version=1
    config block:  u32 length | key=value lines (utf-8)
    vocabulary:    u32 count  | per token: u32 length | bytes
    parameters:    u32 count  | per entry: name, ndim, dims..., f64 data
    optimizer:     u64 step   | u32 count | per entry: name, ndim, dims...,
                   f64 first-moment data, f64 second-moment data
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, augment_pipeline, per_image_rng
from .captioner import ModelConfig, build_model, forward_teacher_forced, greedy_decode
from .errors import FormatError
from .features import toy_patch_encode
from .metrics import bleu
from .tensor import backward, log_softmax, mul, neg, no_grad, pick
from .text import RESERVED, Vocabulary, tokenize

UNFREEZE_POLICIES = ("from_start", "on_breakdown", "never")


@dataclass
class TrainConfig:
    base_lr: float = 1e-3
    embedding_lr_scale: float = 0.1
    batch_size: int = 32
    hidden_size: int = 512
    embed_dim: int = 300
    attention_dim: int = 256
    num_layers: int = 3
    init_mlp_depth: int = 1
    n_max: int = 30
    epochs: int = 20
    patience: int = 10
    seed: int = 0
    unfreeze_policy: str = "from_start"
    augment: bool = True
    p_hflip: float = 0.5
    p_vflip: float = 0.0
    p_perspective: float = 0.5
    distortion: float = 0.3
    captions_per_image: str = "all"  # or "first"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.embedding_lr_scale <= 1:
            raise ValueError(
                f"embedding_lr_scale must be in (0, 1], got {self.embedding_lr_scale}"
            )
        if self.unfreeze_policy not in UNFREEZE_POLICIES:
            raise ValueError(f"unknown unfreeze_policy {self.unfreeze_policy!r}")
        if self.captions_per_image not in ("all", "first"):
            raise ValueError(f"captions_per_image must be 'all' or 'first'")

    def augment_config(self):
        return AugmentConfig(self.p_hflip, self.p_vflip, self.p_perspective, self.distortion)


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    val_loss: float
    val_bleu4: float
    lr_state: dict


@dataclass
class Sample:
    """One training pair: a caption against an image's annotation vectors.

    ``image`` is present only when augmentation should regenerate the
    features each epoch through the toy patch encoder; otherwise the stored
    ``features`` pass through unchanged.
    """

    image_id: str
    caption_ids: list
    references: list  # tokenized reference captions for BLEU
    features: np.ndarray
    image: np.ndarray = None


def cross_entropy(logits_seq, targets, pad_mask=None):
    """Mean negative log-likelihood over the unmasked positions."""
    if pad_mask is None:
        pad_mask = [1] * len(targets)
    if not len(logits_seq) == len(targets) == len(pad_mask):
        raise ValueError(
            f"length mismatch: {len(logits_seq)} logits, {len(targets)} targets, "
            f"{len(pad_mask)} mask entries"
        )
    total, count = _nll_sum(logits_seq, targets, pad_mask)
    if count == 0:
        raise ValueError("cross_entropy over a fully masked sequence")
    return mul(total, 1.0 / count)


def _nll_sum(logits_seq, targets, pad_mask):
    total, count = None, 0
    for logits, target, mask in zip(logits_seq, targets, pad_mask):
        if not mask:
            continue
        term = neg(pick(log_softmax(logits), target))
        total = term if total is None else total + term
        count += 1
    return total, count


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(params, state, base_lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam on all trainable parameters.

    The group scale multiplies the finished base update, so with identical
    gradients the embedding group's step is exactly ``lr_scale`` times the
    decoder group's.  Frozen parameters are skipped entirely.
    """
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for p in params:
        if not p.trainable:
            continue
        if p.grad is None:
            raise ValueError(f"parameter {p.name!r} has no gradient")
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * p.grad
        v *= beta2
        v += (1.0 - beta2) * p.grad**2
        base_update = base_lr * ((m / bc1) / (np.sqrt(v / bc2) + eps))
        p.data -= p.lr_scale * base_update


def _sample_annotations(sample, cfg, epoch):
    """Features for one sample, augmenting through the toy encoder if images drive them."""
    if sample.image is None or not cfg.augment:
        return sample.features
    rng = per_image_rng(cfg.seed, epoch, sample.image_id)
    img = augment_pipeline(sample.image, cfg.augment_config(), rng)
    grid = math.isqrt(sample.features.shape[0])
    return toy_patch_encode(img, grid, sample.image_id).annotations


def train_epoch(model, samples, cfg, adam_state, epoch):
    """One pass over the training pairs; returns the mean per-token NLL."""
    if not samples:
        raise ValueError("cannot train on an empty split")
    order = np.random.default_rng((cfg.seed, epoch)).permutation(len(samples))
    epoch_nll, epoch_tokens = 0.0, 0
    for start in range(0, len(order), cfg.batch_size):
        batch = order[start : start + cfg.batch_size]
        model.zero_grads()
        batch_total, batch_count = None, 0
        for idx in batch:
            sample = samples[idx]
            annotations = _sample_annotations(sample, cfg, epoch)
            logits_seq, _ = forward_teacher_forced(model, annotations, sample.caption_ids)
            total, count = _nll_sum(logits_seq, sample.caption_ids[1:], [1] * len(logits_seq))
            batch_total = total if batch_total is None else batch_total + total
            batch_count += count
        loss = mul(batch_total, 1.0 / batch_count)
        backward(loss)
        optimizer_step(model.parameters(), adam_state, cfg.base_lr)
        epoch_nll += float(batch_total.data)
        epoch_tokens += batch_count
    return epoch_nll / epoch_tokens


def evaluate(model, samples, vocab, cfg):
    """Teacher-forced loss plus corpus BLEU-4 of greedy decodes on a split."""
    if not samples:
        raise ValueError("cannot evaluate on an empty split")
    total_nll, total_tokens = 0.0, 0
    corpus = []
    with no_grad():
        for sample in samples:
            logits_seq, _ = forward_teacher_forced(model, sample.features, sample.caption_ids)
            for logits, target in zip(logits_seq, sample.caption_ids[1:]):
                total_nll -= float(log_softmax(logits).data[target])
                total_tokens += 1
            decoded = greedy_decode(model, sample.features, cfg.n_max)
            corpus.append((vocab.decode(decoded.tokens), sample.references))
    return total_nll / total_tokens, bleu(corpus, 4)


def validate_and_schedule(history, cfg):
    """Next action after an epoch: continue, unfreeze_embeddings, or stop.

    Breakdown = validation loss went up while validation BLEU-4 did not go
    down; under the on_breakdown policy its first occurrence releases the
    embedding group.  Training stops once BLEU-4 has not improved for
    ``patience`` consecutive epochs.
    """
    if not history:
        raise ValueError("schedule needs at least one epoch report")
    last = history[-1]
    frozen = last.lr_state.get("embedding", 0.0) == 0.0
    if cfg.unfreeze_policy == "on_breakdown" and frozen and len(history) >= 2:
        prev = history[-2]
        if last.val_loss > prev.val_loss and last.val_bleu4 >= prev.val_bleu4:
            return "unfreeze_embeddings"
    best_epoch, best = 0, -np.inf
    for i, report in enumerate(history):
        if report.val_bleu4 > best:
            best_epoch, best = i, report.val_bleu4
    if len(history) - 1 - best_epoch >= cfg.patience:
        return "stop"
    return "continue"


def fit_loop(model, vocab, train_samples, val_samples, cfg, log_path=None):
    """Full training run; returns (history, adam_state).

    ``val_samples`` may equal the training samples when no held-out split
    exists (degenerate but well-defined at desk scale).
    """
    adam_state = AdamState()
    model.embeddings.trainable = cfg.unfreeze_policy == "from_start"
    history = []
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            train_loss = train_epoch(model, train_samples, cfg, adam_state, epoch)
            val_loss, val_bleu4 = evaluate(model, val_samples, vocab, cfg)
            lr_state = {
                "decoder": cfg.base_lr,
                "embedding": cfg.base_lr * cfg.embedding_lr_scale
                if model.embeddings.trainable
                else 0.0,
            }
            history.append(EpochReport(epoch, train_loss, val_loss, val_bleu4, lr_state))
            action = validate_and_schedule(history, cfg)
            if log_fh:
                log_fh.write(
                    f"{epoch}\t{train_loss:.6f}\t{val_loss:.6f}\t{val_bleu4:.6f}\t{action}\n"
                )
                log_fh.flush()
            if action == "unfreeze_embeddings":
                model.embeddings.trainable = True
            elif action == "stop":
                break
    finally:
        if log_fh:
            log_fh.close()
    return history, adam_state


def build_samples(entries, features_by_id, vocab, cfg, images_by_id=None):
    """Assemble per-split training pairs from manifest-style entries.

    ``entries`` are (image_id, split, captions); each selected caption becomes
    one Sample (all five, or just the first, per ``cfg.captions_per_image``).
    """
    splits = {"train": [], "val": [], "test": []}
    for image_id, split, captions in entries:
        if image_id not in features_by_id:
            raise ValueError(f"no features for image {image_id!r}")
        features = features_by_id[image_id]
        references = [tokenize(c) for c in captions]
        selected = captions[:1] if cfg.captions_per_image == "first" else captions
        image = images_by_id.get(image_id) if images_by_id else None
        for caption in selected:
            splits[split].append(
                Sample(
                    image_id=image_id,
                    caption_ids=vocab.encode(tokenize(caption), cfg.n_max),
                    references=references,
                    features=features,
                    image=image,
                )
            )
    return splits


ICKP_MAGIC = b"ICKP"
ICKP_VERSION = 1


def _pack_named_array(name, array):
    blob = struct.pack("<I", len(name.encode())) + name.encode()
    blob += struct.pack("<I", array.ndim)
    blob += struct.pack(f"<{array.ndim}I", *array.shape)
    blob += array.astype("<f8").tobytes()
    return blob


def checkpoint_save(path, model, vocab, adam_state=None, extra_config=None):
    """Serialize model config, vocabulary, parameters and optimizer moments."""
    cfg = model.config
    config_lines = {
        "variant": cfg.variant,
        "vocab_size": cfg.vocab_size,
        "feat_dim": cfg.feat_dim,
        "hidden_size": cfg.hidden_size,
        "embed_dim": cfg.embed_dim,
        "attention_dim": cfg.attention_dim,
        "num_layers": cfg.num_layers,
        "init_mlp_depth": cfg.init_mlp_depth,
        "seed": cfg.seed,
    }
    if extra_config:
        for key, value in extra_config.items():
            config_lines.setdefault(key, value)
    config_blob = "".join(f"{k}={v}\n" for k, v in config_lines.items()).encode("utf-8")
    adam_state = adam_state or AdamState()
    with open(path, "wb") as fh:
        fh.write(ICKP_MAGIC)
        fh.write(struct.pack("<I", ICKP_VERSION))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(vocab)))
        for token in vocab.index_to_token:
            raw = token.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        params = model.parameters()
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            fh.write(_pack_named_array(p.name, p.data))
        fh.write(struct.pack("<Q", adam_state.step))
        fh.write(struct.pack("<I", len(adam_state.m)))
        for name in sorted(adam_state.m):
            fh.write(_pack_named_array(name, adam_state.m[name]))
            fh.write(adam_state.v[name].astype("<f8").tobytes())


class _Reader:
    def __init__(self, path):
        with open(path, "rb") as fh:
            self.buf = fh.read()
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.path}: truncated at byte {len(self.buf)} (needed {self.pos + n})"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def string(self):
        return self.take(self.u32()).decode("utf-8")

    def array(self):
        ndim = self.u32()
        shape = struct.unpack(f"<{ndim}I", self.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)
        return data.reshape(shape)


def checkpoint_load(path, model=None):
    """Rebuild (model, vocab, adam_state, config) from an ICKP file.

    When ``model`` is given the stored tensors are loaded into it and every
    name/shape must match.  The whole file is parsed before anything is
    applied, so a truncated file never leaves a partially updated model.
    """
    reader = _Reader(path)
    if reader.take(4) != ICKP_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {ICKP_MAGIC!r}")
    version = reader.u32()
    if version != ICKP_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    config = {}
    for line in reader.take(reader.u32()).decode("utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            config[key] = value
    tokens = [reader.string() for _ in range(reader.u32())]
    if tuple(tokens[:4]) != RESERVED:
        raise FormatError(f"{path}: vocabulary lacks the reserved header tokens")
    vocab = Vocabulary(tokens[4:])
    stored = {}
    for _ in range(reader.u32()):
        name = reader.string()
        stored[name] = reader.array()
    adam_state = AdamState(step=reader.u64())
    for _ in range(reader.u32()):
        name = reader.string()
        m = reader.array()
        v = np.frombuffer(reader.take(8 * m.size), dtype="<f8").astype(np.float64)
        adam_state.m[name] = m
        adam_state.v[name] = v.reshape(m.shape)

    if model is None:
        model_config = ModelConfig(
            variant=config["variant"],
            vocab_size=int(config["vocab_size"]),
            feat_dim=int(config["feat_dim"]),
            hidden_size=int(config["hidden_size"]),
            embed_dim=int(config["embed_dim"]),
            attention_dim=int(config["attention_dim"]),
            num_layers=int(config["num_layers"]),
            init_mlp_depth=int(config["init_mlp_depth"]),
            seed=int(config["seed"]),
        )
        model = build_model(model_config)
    expected = {p.name: p for p in model.parameters()}
    if set(expected) != set(stored):
        missing = sorted(set(expected) ^ set(stored))
        raise FormatError(f"{path}: parameter name mismatch on {missing}")
    for name, p in expected.items():
        if stored[name].shape != p.data.shape:
            raise FormatError(
                f"{path}: parameter {name!r}: checkpoint shape {stored[name].shape}, "
                f"model shape {p.data.shape}"
            )
    for name, p in expected.items():
        p.data = stored[name]
    return model, vocab, adam_state, config

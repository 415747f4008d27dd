"""Scikit-learn style front end over the caption models.

``LSTMCaptioner`` follows the estimator contract — constructor stores
hyperparameters verbatim, ``fit(X, y)`` learns from annotation vectors and
reference captions, ``predict(X)`` returns caption strings — so the decoder
composes with pipelines, ``clone`` and grid search.  X is an (n, L, D) array
or a sequence of FeatureSet / (L, D) arrays; y gives one or more reference
captions per image.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .captioner import ModelConfig, beam_decode, build_model, greedy_decode
from .metrics import bleu
from .text import build_vocab, load_embedding_file, tokenize
from .train import Sample, TrainConfig, fit_loop


def check_feature_arrays(X):
    """Normalize X to a list of (L, D) float arrays with uniform shape."""
    arrays = [np.asarray(getattr(item, "annotations", item), dtype=np.float64) for item in X]
    if not arrays:
        raise ValueError("X holds no feature sets")
    shape = arrays[0].shape
    for i, a in enumerate(arrays):
        if a.ndim != 2 or min(a.shape) < 1:
            raise ValueError(f"X[{i}] is not an L x D matrix (shape {a.shape})")
        if a.shape != shape:
            raise ValueError(f"X[{i}] shape {a.shape} differs from X[0] shape {shape}")
        if not np.isfinite(a).all():
            raise ValueError(f"X[{i}] holds non-finite values")
    return arrays


def check_caption_lists(y, n):
    """Normalize y to one list of caption strings per image."""
    if len(y) != n:
        raise ValueError(f"X and y disagree: {n} feature sets, {len(y)} caption entries")
    normalized = []
    for i, item in enumerate(y):
        captions = [item] if isinstance(item, str) else list(item)
        if not captions or not all(isinstance(c, str) and c.strip() for c in captions):
            raise ValueError(f"y[{i}] must hold one or more non-empty caption strings")
        normalized.append(captions)
    return normalized


class LSTMCaptioner(BaseEstimator):
    """Caption generator with a stacked-LSTM decoder in either framework.

    Parameters mirror the training configuration; ``variant`` selects
    "encoder_decoder" (image enters through the initial states only) or
    "soft_attention" (a per-step context vector is concatenated to the word
    embedding).  ``embedding_file`` optionally seeds the embedding matrix
    from pretrained text-format vectors, fine-tuned at 0.1x the decoder rate.
    """

    def __init__(self, variant="soft_attention", hidden_size=512, embed_dim=300,
                 attention_dim=256, num_layers=3, epochs=30, base_lr=1e-3,
                 batch_size=32, n_max=30, patience=10, min_freq=1,
                 unfreeze_policy="from_start", validation_fraction=0.1,
                 beam_width=1, embedding_file=None, seed=0):
        self.variant = variant
        self.hidden_size = hidden_size
        self.embed_dim = embed_dim
        self.attention_dim = attention_dim
        self.num_layers = num_layers
        self.epochs = epochs
        self.base_lr = base_lr
        self.batch_size = batch_size
        self.n_max = n_max
        self.patience = patience
        self.min_freq = min_freq
        self.unfreeze_policy = unfreeze_policy
        self.validation_fraction = validation_fraction
        self.beam_width = beam_width
        self.embedding_file = embedding_file
        self.seed = seed

    def fit(self, X, y):
        features = check_feature_arrays(X)
        captions = check_caption_lists(y, len(features))
        tokenized = [[tokenize(c) for c in caps] for caps in captions]
        self.vocab_ = build_vocab([t for caps in tokenized for t in caps],
                                  min_freq=self.min_freq)
        cfg = TrainConfig(
            base_lr=self.base_lr,
            batch_size=self.batch_size,
            hidden_size=self.hidden_size,
            embed_dim=self.embed_dim,
            attention_dim=self.attention_dim,
            num_layers=self.num_layers,
            n_max=self.n_max,
            epochs=self.epochs,
            patience=self.patience,
            seed=self.seed,
            unfreeze_policy=self.unfreeze_policy,
            augment=False,
        )
        samples = []
        for i, (feats, refs) in enumerate(zip(features, tokenized)):
            for ref in refs:
                samples.append(Sample(
                    image_id=f"item{i:05d}",
                    caption_ids=self.vocab_.encode(ref, cfg.n_max),
                    references=refs,
                    features=feats,
                ))
        n_val = int(len(samples) * self.validation_fraction)
        order = np.random.default_rng(self.seed).permutation(len(samples))
        val = [samples[i] for i in order[:n_val]]
        train = [samples[i] for i in order[n_val:]]
        if not train:
            raise ValueError("validation_fraction leaves no training samples")
        pretrained = None
        if self.embedding_file is not None:
            pretrained = load_embedding_file(self.embedding_file, self.vocab_,
                                             self.embed_dim, seed=self.seed)
        config = ModelConfig(
            variant=self.variant,
            vocab_size=len(self.vocab_),
            feat_dim=features[0].shape[1],
            hidden_size=self.hidden_size,
            embed_dim=self.embed_dim,
            attention_dim=self.attention_dim,
            num_layers=self.num_layers,
            seed=self.seed,
        )
        self.model_ = build_model(config, embeddings=pretrained)
        self.history_, _ = fit_loop(self.model_, self.vocab_, train, val or train, cfg)
        return self

    def predict(self, X):
        """Caption string per feature set (greedy, or beam when beam_width > 1)."""
        self._check_fitted()
        features = check_feature_arrays(X)
        out = []
        for feats in features:
            if self.beam_width > 1:
                result = beam_decode(self.model_, feats, self.beam_width, self.n_max)
            else:
                result = greedy_decode(self.model_, feats, self.n_max)
            out.append(" ".join(self.vocab_.decode(result.tokens)))
        return out

    def score(self, X, y):
        """Corpus BLEU-4 of the predictions against the reference captions."""
        self._check_fitted()
        captions = check_caption_lists(y, len(X))
        predictions = self.predict(X)
        corpus = [
            (tokenize(pred), [tokenize(c) for c in refs])
            for pred, refs in zip(predictions, captions)
        ]
        return bleu(corpus, 4)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this LSTMCaptioner instance is not fitted yet")

"""Tokenization, vocabulary construction and pretrained-embedding loading."""

from __future__ import annotations

import re
from collections import Counter

import numpy as np

from .errors import FormatError
from .tensor import Parameter, row

PAD, START, END, UNK = "<PAD>", "<START>", "<END>", "<UNK>"
RESERVED = (PAD, START, END, UNK)
PAD_ID, START_ID, END_ID, UNK_ID = 0, 1, 2, 3

_PUNCT = re.compile(r"[^\w\s]")


def tokenize(sentence):
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return _PUNCT.sub(" ", sentence.lower()).split()


class Vocabulary:
    """Token <-> index bijection with fixed reserved entries at indices 0-3."""

    def __init__(self, tokens):
        self.index_to_token = list(RESERVED) + list(tokens)
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    def index(self, token):
        return self.token_to_index.get(token, UNK_ID)

    def encode(self, tokens, n_max=None):
        """<START> + token indices + <END>, truncated to ``n_max`` entries."""
        ids = [START_ID] + [self.index(t) for t in tokens] + [END_ID]
        if n_max is not None and len(ids) > n_max:
            ids = ids[: n_max - 1] + [END_ID]
        return ids

    def decode(self, ids):
        """Tokens for indices, dropping the <PAD>/<START>/<END> sentinels."""
        return [
            self.index_to_token[i]
            for i in ids
            if i not in (PAD_ID, START_ID, END_ID)
        ]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.index_to_token:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.strip()]
        if tuple(tokens[:4]) != RESERVED:
            raise FormatError(f"vocabulary file {path} lacks the reserved header tokens")
        return cls(tokens[4:])


def build_vocab(captions, min_freq=5):
    """Frequency-filtered vocabulary, ordered by descending count then token.

    Tokens seen fewer than ``min_freq`` times fall back to <UNK> at encode
    time.  The ordering makes index assignment deterministic for a given
    corpus.
    """
    if not captions:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for tokens in captions:
        counts.update(tokens)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_freq and t not in RESERVED),
        key=lambda t: (-counts[t], t),
    )
    if not kept:
        raise ValueError(f"no token reaches min_freq={min_freq}; vocabulary would be empty")
    return Vocabulary(kept)


def _looks_like_header(parts):
    if len(parts) != 2:
        return False
    try:
        int(parts[0]), int(parts[1])
    except ValueError:
        return False
    return True


def load_embedding_file(path, vocab, dim, seed=0):
    """Read text-format word vectors into a vocabulary-aligned matrix.

    The file holds one token per line followed by ``dim`` decimals, optionally
    preceded by a "count dim" header line.  Tokens absent from the file
    (reserved ones included) are initialized to the elementwise mean of all
    loaded vectors plus uniform noise in +/-0.01 so their norms stay
    compatible.  Returns a Parameter in the fine-tuning group (lr_scale 0.1).
    """
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and _looks_like_header(parts):
                header_dim = int(parts[1])
                if header_dim != dim:
                    raise ValueError(
                        f"embedding file declares dimension {header_dim}, expected {dim}"
                    )
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise FormatError(
                    f"{path}: line {lineno}: expected {dim} values for {token!r}, "
                    f"got {len(values)}"
                )
            try:
                vectors[token] = np.array([float(x) for x in values])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric embedding value")

    loaded = [vectors[t] for t in vocab.index_to_token if t in vectors]
    fallback_mean = np.mean(loaded, axis=0) if loaded else np.zeros(dim)
    rng = np.random.default_rng(seed)
    matrix = np.empty((len(vocab), dim))
    for i, token in enumerate(vocab.index_to_token):
        if token in vectors:
            matrix[i] = vectors[token]
        else:
            matrix[i] = fallback_mean + rng.uniform(-0.01, 0.01, size=dim)
    return Parameter(matrix, name="embeddings", lr_scale=0.1)


def embed(embeddings, token_ids):
    """Embedding rows for a token-id sequence; gradient flows only to used rows."""
    vocab_size = embeddings.data.shape[0]
    for t in token_ids:
        if not 0 <= t < vocab_size:
            raise ValueError(f"token id {t} out of range for vocabulary size {vocab_size}")
    return [row(embeddings, t) for t in token_ids]

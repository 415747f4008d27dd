import numpy as np
import pytest

from capstack.errors import FormatError
from capstack.tensor import backward
from capstack.text import (
    END_ID,
    PAD_ID,
    START_ID,
    UNK_ID,
    Vocabulary,
    build_vocab,
    embed,
    load_embedding_file,
    tokenize,
)


def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("A black Dog runs.") == ["a", "black", "dog", "runs"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_collapses_whitespace():
    assert tokenize("two  dogs") == ["two", "dogs"]


def test_build_vocab_min_freq_filters():
    vocab = build_vocab([["a", "a", "a"], ["b"]], min_freq=2)
    assert "a" in vocab and "b" not in vocab
    assert vocab.index("b") == UNK_ID


def test_build_vocab_min_freq_one_keeps_everything():
    vocab = build_vocab([["x", "y"], ["z"]], min_freq=1)
    assert all(t in vocab for t in "xyz")


def test_build_vocab_tie_breaks_lexicographically():
    vocab = build_vocab([["cat", "ant"]], min_freq=1)
    assert vocab.index("ant") < vocab.index("cat")


def test_build_vocab_deterministic():
    corpus = [["dog", "runs"], ["dog", "sits"], ["cat", "runs"]]
    first = build_vocab(corpus, min_freq=1).index_to_token
    second = build_vocab(corpus, min_freq=1).index_to_token
    assert first == second


def test_build_vocab_rejects_empty_corpus():
    with pytest.raises(ValueError):
        build_vocab([], min_freq=1)


def test_reserved_indices_fixed():
    vocab = build_vocab([["word"]], min_freq=1)
    assert vocab.index_to_token[:4] == ["<PAD>", "<START>", "<END>", "<UNK>"]
    assert (PAD_ID, START_ID, END_ID, UNK_ID) == (0, 1, 2, 3)


def test_encode_decode_round_trip():
    vocab = build_vocab([["a", "red", "square"]], min_freq=1)
    tokens = ["a", "red", "square"]
    ids = vocab.encode(tokens)
    assert ids[0] == START_ID and ids[-1] == END_ID
    assert vocab.decode(ids) == tokens


def test_encode_truncates_to_n_max():
    vocab = build_vocab([["a", "b", "c", "d"]], min_freq=1)
    ids = vocab.encode(["a", "b", "c", "d"], n_max=4)
    assert len(ids) == 4
    assert ids[0] == START_ID and ids[-1] == END_ID


def test_vocab_save_load_round_trip(tmp_path):
    vocab = build_vocab([["red", "square", "red"]], min_freq=1)
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    assert Vocabulary.load(path).index_to_token == vocab.index_to_token


def _write_embeddings(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_embedding_file_echoes_stored_vector(tmp_path):
    vocab = build_vocab([["dog"]], min_freq=1)
    values = [f"{0.1 * k:.3f}" for k in range(1, 6)]
    path = tmp_path / "vec.txt"
    _write_embeddings(path, ["dog " + " ".join(values)])
    emb = load_embedding_file(path, vocab, dim=5)
    assert np.allclose(emb.data[vocab.index("dog")], [float(v) for v in values])
    assert emb.lr_scale == 0.1


def test_embedding_missing_token_uses_mean_plus_noise(tmp_path):
    vocab = build_vocab([["dog", "cat"]], min_freq=1)
    path = tmp_path / "vec.txt"
    _write_embeddings(path, ["dog 1.0 2.0 3.0"])
    emb = load_embedding_file(path, vocab, dim=3)
    fallback = emb.data[vocab.index("cat")]
    assert np.abs(fallback - np.array([1.0, 2.0, 3.0])).max() <= 0.01


def test_embedding_empty_file_all_fallback(tmp_path):
    vocab = build_vocab([["dog"]], min_freq=1)
    path = tmp_path / "vec.txt"
    path.write_text("", encoding="utf-8")
    emb = load_embedding_file(path, vocab, dim=4)
    assert emb.data.shape == (len(vocab), 4)
    assert np.abs(emb.data).max() <= 0.01


def test_embedding_wrong_value_count_reports_line(tmp_path):
    vocab = build_vocab([["dog"]], min_freq=1)
    path = tmp_path / "vec.txt"
    _write_embeddings(path, ["dog 1.0 2.0 3.0", "cat 1.0"])
    with pytest.raises(FormatError, match="line 2"):
        load_embedding_file(path, vocab, dim=3)


def test_embedding_header_dim_mismatch(tmp_path):
    vocab = build_vocab([["dog"]], min_freq=1)
    path = tmp_path / "vec.txt"
    _write_embeddings(path, ["100 300", "dog 1.0 2.0 3.0"])
    with pytest.raises(ValueError, match="300"):
        load_embedding_file(path, vocab, dim=3)


def test_embed_empty_sequence():
    from capstack.tensor import Parameter

    E = Parameter(np.eye(4), name="E")
    assert embed(E, []) == []


def test_embed_one_hot_identity():
    from capstack.tensor import Parameter

    E = Parameter(np.eye(6), name="E")
    (vec,) = embed(E, [2])
    expected = np.zeros(6)
    expected[2] = 1.0
    assert np.array_equal(vec.data, expected)


def test_embed_repeated_index_accumulates_gradient():
    from capstack.tensor import Parameter, add

    E = Parameter(np.arange(12.0).reshape(6, 2), name="E")
    first, second = embed(E, [5, 5])
    assert np.array_equal(first.data, second.data)
    backward(add(first, second).sum())
    assert np.array_equal(E.grad[5], [2.0, 2.0])


def test_embed_gradient_sparsity():
    from capstack.tensor import Parameter

    E = Parameter(np.random.default_rng(0).normal(size=(6, 3)), name="E")
    (vec,) = embed(E, [1])
    backward(vec.sum())
    untouched = [i for i in range(6) if i != 1]
    assert np.array_equal(E.grad[untouched], np.zeros((5, 3)))


def test_embed_rejects_out_of_range():
    from capstack.tensor import Parameter

    E = Parameter(np.eye(3), name="E")
    with pytest.raises(ValueError):
        embed(E, [3])

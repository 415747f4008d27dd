import numpy as np
import pytest

from capstack.errors import FormatError
from capstack.metrics import (
    bleu,
    cider,
    meteor_lite,
    porter_stem,
    read_caption_records,
)


def test_bleu_identical_candidate_scores_one():
    corpus = [(["a", "black", "dog", "runs"], [["a", "black", "dog", "runs"]])]
    for n in (1, 2, 3, 4):
        assert bleu(corpus, n) == 1.0


def test_bleu_zero_fourgram_overlap_is_zero():
    corpus = [(["a", "b", "c", "d"], [["a", "b", "x", "d"]])]
    assert bleu(corpus, 4) == 0.0


def test_bleu_clipped_unigram_hand_count():
    # "the the the" vs "the cat sat": clipped p1 = 1/3, c = r = 3, BP = 1
    corpus = [(["the", "the", "the"], [["the", "cat", "sat"]])]
    assert bleu(corpus, 1) == pytest.approx(1 / 3, abs=1e-12)


def test_bleu_brevity_penalty():
    corpus = [(["a", "b"], [["a", "b", "c", "d"]])]
    expected = np.exp(1 - 4 / 2) * 1.0  # p1 = 1 on the clipped counts
    assert bleu(corpus, 1) == pytest.approx(expected, abs=1e-12)


def test_bleu_candidate_equal_to_one_reference_maximal():
    refs = [["a", "red", "square"], ["the", "red", "square", "sits"]]
    corpus = [(["a", "red", "square"], refs)]
    assert bleu(corpus, 2) == 1.0


def test_bleu_corpus_is_not_mean_of_items():
    item1 = (["a", "b", "c"], [["a", "b", "c"]])
    item2 = (["z"], [["q"]])
    corpus_score = bleu([item1, item2], 1)
    mean_of_items = (bleu([item1], 1) + bleu([item2], 1)) / 2
    assert corpus_score == pytest.approx(0.75)
    assert mean_of_items == pytest.approx(0.5)
    assert corpus_score != mean_of_items


def test_bleu_rejects_empty_corpus():
    with pytest.raises(ValueError):
        bleu([], 4)


def test_cider_single_item_self_similarity():
    # candidate == reference, 3 tokens: orders 1..3 have grams (cosine 1),
    # order 4 has none, so the score is 10 * 3/4
    corpus = [(["a", "red", "square"], [["a", "red", "square"]])]
    assert cider(corpus) == pytest.approx(7.5, abs=1e-12)


def test_cider_disjoint_is_zero():
    corpus = [
        (["blue", "circle"], [["red", "square"]]),
        (["green", "triangle"], [["yellow", "shape"]]),
    ]
    assert cider(corpus) == 0.0


def test_cider_matches_independent_tfidf_oracle():
    """Two-item corpus with shared and unique unigrams, frozen against a
    dense-vector TF-IDF/cosine computation done outside this module."""
    corpus = [
        (["red", "dog"], [["red", "dog"], ["red", "cat"]]),
        (["red", "red", "cat"], [["red", "cat"]]),
    ]
    assert cider(corpus) == pytest.approx(2.8839456993363535, abs=1e-12)


def test_cider_rejects_empty_corpus():
    with pytest.raises(ValueError):
        cider([])


def test_meteor_identical_sentences():
    tokens = ["the", "cat", "sat"]
    expected = 1.0 - 0.5 * (1 / 3) ** 3  # F = 1, one chunk of three matches
    assert meteor_lite([(tokens, [tokens])]) == pytest.approx(expected, abs=1e-12)


def test_meteor_disjoint_is_zero():
    assert meteor_lite([(["dog"], [["cat"]])]) == 0.0


def test_meteor_stemmed_alignment_hand_value():
    # "cats sit" vs "cat sits": two stem matches in one chunk, P = R = 1
    corpus = [(["cats", "sit"], [["cat", "sits"]])]
    assert meteor_lite(corpus) == pytest.approx(0.9375, abs=1e-12)


def test_meteor_picks_best_reference():
    corpus = [(["a", "dog"], [["the", "cow"], ["a", "dog"]])]
    assert meteor_lite(corpus) == pytest.approx(1.0 - 0.5 * (1 / 2) ** 3, abs=1e-12)


def test_meteor_chunk_penalty_for_reordering():
    # every word matches but in two chunks: "b a" vs "a b"
    corpus = [(["b", "a"], [["a", "b"]])]
    score = meteor_lite(corpus)
    assert score == pytest.approx(1.0 - 0.5 * (2 / 2) ** 3, abs=1e-12)


def test_metrics_permutation_invariant_and_deterministic():
    corpus = [
        (["a", "red", "square"], [["a", "red", "square", "sits"]]),
        (["the", "blue", "circle"], [["a", "blue", "circle"]]),
        (["a", "dog"], [["a", "dog"], ["the", "dog"]]),
    ]
    reordered = [corpus[2], corpus[0], corpus[1]]
    for metric in (lambda c: bleu(c, 4), lambda c: bleu(c, 1), cider, meteor_lite):
        assert metric(corpus) == metric(reordered)
        assert metric(corpus) == metric(corpus)


def test_porter_stemmer_classic_forms():
    expected = {
        "caresses": "caress",
        "ponies": "poni",
        "cats": "cat",
        "feed": "feed",
        "plastered": "plaster",
        "motoring": "motor",
        "sitting": "sit",
        "happy": "happi",
        "relational": "relat",
        "dog": "dog",
    }
    for word, stem in expected.items():
        assert porter_stem(word) == stem


def test_caption_record_parsing(tmp_path):
    path = tmp_path / "caps.tsv"
    path.write_text("img0\tC\ta red square\nimg0\tR\tthe red square\n", encoding="utf-8")
    records = read_caption_records(path)
    assert records == [("img0", "C", "a red square"), ("img0", "R", "the red square")]


def test_caption_record_rejects_bad_flag(tmp_path):
    path = tmp_path / "caps.tsv"
    path.write_text("img0\tX\toops\n", encoding="utf-8")
    with pytest.raises(FormatError, match="flag"):
        read_caption_records(path)

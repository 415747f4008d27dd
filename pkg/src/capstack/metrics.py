"""Caption evaluation: corpus BLEU-N, CIDEr, and a reduced METEOR.

A corpus is a list of (candidate, references) pairs of lowercase token
lists.  BLEU aggregates clipped n-gram counts over the whole corpus (it is
not a mean of per-item scores).  CIDEr follows the plain TF-IDF/cosine
formulation with document frequencies taken from the evaluation corpus
itself, scaled by 10.  meteor_lite aligns unigrams on exact then stemmed
matches only — no synonym or paraphrase resources — so its values are not
comparable to toolkit METEOR numbers; the name flags the reduction.
"""

from __future__ import annotations

import math
from collections import Counter

from .errors import FormatError


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _validate_corpus(corpus):
    if not corpus:
        raise ValueError("empty evaluation corpus")
    for candidate, references in corpus:
        if not references:
            raise ValueError("every corpus item needs at least one reference")


def bleu(corpus, n=4):
    """Corpus-level BLEU-n: clipped modified precisions, geometric mean,
    brevity penalty against the closest reference length.

    Any precision of zero zeroes the whole score, per the standard rule.
    """
    _validate_corpus(corpus)
    if not 1 <= n <= 4:
        raise ValueError(f"BLEU order must be 1..4, got {n}")
    clipped = [0] * n
    totals = [0] * n
    cand_len, ref_len = 0, 0
    for candidate, references in corpus:
        cand_len += len(candidate)
        ref_len += min(
            (abs(len(ref) - len(candidate)), len(ref)) for ref in references
        )[1]
        for k in range(1, n + 1):
            counts = _ngrams(candidate, k)
            max_ref = Counter()
            for ref in references:
                for gram, cnt in _ngrams(ref, k).items():
                    max_ref[gram] = max(max_ref[gram], cnt)
            totals[k - 1] += sum(counts.values())
            clipped[k - 1] += sum(min(cnt, max_ref[g]) for g, cnt in counts.items())
    if any(c == 0 or t == 0 for c, t in zip(clipped, totals)):
        return 0.0
    log_precision = sum(math.log(c / t) for c, t in zip(clipped, totals)) / n
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision)


def _tfidf_vector(tokens, n, idf):
    counts = _ngrams(tokens, n)
    total = sum(counts.values())
    if total == 0:
        return {}
    return {g: (c / total) * idf[n][g] for g, c in counts.items()}


def _cosine(u, v):
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    dot = sum(u[g] * v.get(g, 0.0) for g in u)
    return dot / (nu * nv)


def cider(corpus):
    """TF-IDF consensus score, averaged over n-gram orders 1..4 and scaled x10.

    IDF uses ln(|corpus| / (1 + images whose references contain the n-gram)),
    computed over the evaluation corpus itself; a single-item corpus is
    degenerate (negative IDF) but allowed.
    """
    _validate_corpus(corpus)
    size = len(corpus)
    idf = {}
    for n in range(1, 5):
        doc_freq = Counter()
        for _, references in corpus:
            seen = set()
            for ref in references:
                seen.update(_ngrams(ref, n))
            doc_freq.update(seen)
        idf[n] = {g: math.log(size / (1 + df)) for g, df in doc_freq.items()}
        idf[n] = _DefaultIdf(idf[n], math.log(size / 1.0))
    item_scores = []
    for candidate, references in corpus:
        order_scores = []
        for n in range(1, 5):
            cand_vec = _tfidf_vector(candidate, n, idf)
            sims = [
                _cosine(cand_vec, _tfidf_vector(ref, n, idf)) for ref in references
            ]
            order_scores.append(sum(sims) / len(sims))
        item_scores.append(10.0 * sum(order_scores) / 4.0)
    return sum(item_scores) / size


class _DefaultIdf(dict):
    """IDF map that also prices n-grams never seen in any reference."""

    def __init__(self, mapping, unseen):
        super().__init__(mapping)
        self.unseen = unseen

    def __missing__(self, key):
        return self.unseen


_VOWELS = "aeiou"


def _cons(word, i):
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _cons(word, i - 1)
    return True


def _measure(stem):
    m, prev_vowel = 0, False
    for i in range(len(stem)):
        vowel = not _cons(stem, i)
        if prev_vowel and not vowel:
            m += 1
        prev_vowel = vowel
    return m


def _has_vowel(stem):
    return any(not _cons(stem, i) for i in range(len(stem)))


def _double_cons(word):
    return len(word) >= 2 and word[-1] == word[-2] and _cons(word, len(word) - 1)


def _cvc(word):
    if len(word) < 3:
        return False
    return (
        _cons(word, len(word) - 3)
        and not _cons(word, len(word) - 2)
        and _cons(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


_STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]
_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]
_STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def porter_stem(word):
    """Classic suffix-stripping stemmer (Porter, 1980)."""
    if len(word) <= 2:
        return word
    # step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif not word.endswith("ss") and word.endswith("s"):
        word = word[:-1]
    # step 1b
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    else:
        flag = False
        if word.endswith("ed") and _has_vowel(word[:-2]):
            word, flag = word[:-2], True
        elif word.endswith("ing") and _has_vowel(word[:-3]):
            word, flag = word[:-3], True
        if flag:
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _double_cons(word) and word[-1] not in "lsz":
                word = word[:-1]
            elif _measure(word) == 1 and _cvc(word):
                word += "e"
    # step 1c
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"
    # step 2
    for suffix, repl in _STEP2:
        if word.endswith(suffix):
            if _measure(word[: -len(suffix)]) > 0:
                word = word[: -len(suffix)] + repl
            break
    # step 3
    for suffix, repl in _STEP3:
        if word.endswith(suffix):
            if _measure(word[: -len(suffix)]) > 0:
                word = word[: -len(suffix)] + repl
            break
    # step 4
    for suffix in _STEP4:
        if word.endswith(suffix):
            stem = word[: -len(suffix)]
            if _measure(stem) > 1:
                if suffix == "ion" and (not stem or stem[-1] not in "st"):
                    break
                word = stem
            break
    # step 5a
    if word.endswith("e"):
        m = _measure(word[:-1])
        if m > 1 or (m == 1 and not _cvc(word[:-1])):
            word = word[:-1]
    # step 5b
    if _measure(word) > 1 and _double_cons(word) and word.endswith("l"):
        word = word[:-1]
    return word


def _align(candidate, reference):
    """Greedy left-to-right 1:1 unigram alignment: exact pass, then stems."""
    pairs = []
    cand_used = [False] * len(candidate)
    ref_used = [False] * len(reference)
    for ci, word in enumerate(candidate):
        for ri, ref_word in enumerate(reference):
            if not ref_used[ri] and ref_word == word:
                pairs.append((ci, ri))
                cand_used[ci] = ref_used[ri] = True
                break
    cand_stems = [porter_stem(w) for w in candidate]
    ref_stems = [porter_stem(w) for w in reference]
    for ci, stem in enumerate(cand_stems):
        if cand_used[ci]:
            continue
        for ri, ref_stem in enumerate(ref_stems):
            if not ref_used[ri] and ref_stem == stem:
                pairs.append((ci, ri))
                cand_used[ci] = ref_used[ri] = True
                break
    return sorted(pairs)


def _meteor_pair(candidate, reference):
    pairs = _align(candidate, reference)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    chunks = 1
    for (c0, r0), (c1, r1) in zip(pairs, pairs[1:]):
        if c1 != c0 + 1 or r1 != r0 + 1:
            chunks += 1
    penalty = 0.5 * (chunks / matches) ** 3
    return fmean * (1.0 - penalty)


def meteor_lite(corpus):
    """Reduced METEOR: exact+stem unigram alignment, best reference per item."""
    _validate_corpus(corpus)
    total = 0.0
    for candidate, references in corpus:
        total += max(_meteor_pair(candidate, ref) for ref in references)
    return total / len(corpus)


def read_caption_records(path):
    """Parse "id <TAB> C|R <TAB> sentence" lines into (id, flag, sentence)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 3 tab-separated fields")
            image_id, flag, sentence = parts
            if flag not in ("C", "R"):
                raise FormatError(f"{path}: line {lineno}: flag must be C or R, got {flag!r}")
            records.append((image_id, flag, sentence))
    return records

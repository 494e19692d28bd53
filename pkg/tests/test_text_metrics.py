import math
import warnings
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selective_asr.text_metrics import (
    NoMeasurableCorpusError,
    NormalizationPolicy,
    TranscriptPair,
    WerBreakdown,
    corpus_wer,
    corrupt_to_target,
    normalize_text,
    wer,
    word_errors,
)


def levenshtein(a, b):
    """Independent recursive oracle: minimum word edits turning a into b."""

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


words = st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), max_size=8)


class TestNormalize:
    def test_case_and_punctuation(self):
        assert normalize_text("Hello, World!") == ["hello", "world"]

    def test_empty(self):
        assert normalize_text("") == []

    def test_whitespace_collapse(self):
        assert normalize_text("a  b\tc") == ["a", "b", "c"]

    def test_keeps_contractions_whole(self):
        assert normalize_text("Don't stop") == ["dont", "stop"]

    def test_policy_can_keep_case(self):
        assert normalize_text("Hello, World", NormalizationPolicy(casefold=False)) == ["Hello", "World"]

    @given(st.text())
    def test_idempotent(self, raw):
        once = normalize_text(raw)
        assert normalize_text(" ".join(once)) == once
        assert all(w for w in once)


class TestWer:
    def test_identity(self):
        b = wer(TranscriptPair(("a", "b", "c"), ("a", "b", "c")))
        assert (b.substitutions, b.deletions, b.insertions, b.wer) == (0, 0, 0, 0.0)

    def test_all_deletions(self):
        b = wer(TranscriptPair(("hello", "world"), ()))
        assert b.deletions == 2 and b.wer == 100.0

    def test_one_substitution(self):
        b = wer(TranscriptPair(("a", "b", "c"), ("a", "x", "c")))
        assert b.substitutions == 1
        assert b.wer == pytest.approx(100 / 3)

    def test_prefers_substitution_on_ties(self):
        b = wer(TranscriptPair(("a", "b"), ("x", "y")))
        assert (b.substitutions, b.deletions, b.insertions) == (2, 0, 0)

    def test_empty_reference_is_flagged(self):
        b = wer(TranscriptPair((), ("a", "b")))
        assert b.undefined_denominator
        assert b.insertions == 2
        assert math.isnan(b.wer)

    def test_both_empty(self):
        b = wer(TranscriptPair((), ()))
        assert b.undefined_denominator and b.wer == 0.0

    def test_rejects_empty_words(self):
        with pytest.raises(ValueError):
            TranscriptPair(("a", ""), ("a",))

    @given(words, words)
    def test_matches_oracle(self, ref, hyp):
        b = word_errors(ref, hyp)
        assert b.errors == levenshtein(tuple(ref), tuple(hyp))
        assert b.substitutions + b.deletions <= len(ref)
        assert b.deletions - b.insertions == len(ref) - len(hyp)

    @given(words, words)
    def test_swap_exchanges_deletions_and_insertions(self, ref, hyp):
        fwd, back = word_errors(ref, hyp), word_errors(hyp, ref)
        assert fwd.errors == back.errors
        assert fwd.deletions - fwd.insertions == back.insertions - back.deletions


class TestCorpusWer:
    def test_pooled(self):
        assert corpus_wer([WerBreakdown(1, 0, 0, 2), WerBreakdown(0, 0, 0, 2)]) == 25.0

    def test_singleton(self):
        b = word_errors(["a", "b", "c"], ["a", "x", "c"])
        assert corpus_wer([b]) == pytest.approx(b.wer)

    def test_hand_pooled(self):
        assert corpus_wer([WerBreakdown(3, 0, 0, 10), WerBreakdown(0, 0, 0, 90)]) == pytest.approx(3.0)

    def test_skips_flagged(self):
        assert corpus_wer([WerBreakdown(0, 0, 5, 0), WerBreakdown(1, 0, 0, 4)]) == 25.0

    def test_all_empty_raises(self):
        with pytest.raises(NoMeasurableCorpusError):
            corpus_wer([WerBreakdown(0, 0, 1, 0)])


class TestCorrupt:
    def test_hundred_words_ten_percent(self):
        ref = [f"w{i}" for i in range(100)]
        hyp = corrupt_to_target(ref, 10.0, seed=7)
        assert 9.0 <= word_errors(ref, hyp).wer <= 11.0

    def test_zero_target_is_identity(self):
        ref = ["a", "b", "c"]
        assert corrupt_to_target(ref, 0.0, seed=1) == ref

    def test_single_word_full_error(self):
        hyp = corrupt_to_target(["a"], 100.0, seed=3)
        b = word_errors(["a"], hyp)
        assert b.substitutions == 1 and b.wer == 100.0

    def test_deterministic(self):
        ref = [f"w{i}" for i in range(40)]
        assert corrupt_to_target(ref, 30.0, 5) == corrupt_to_target(ref, 30.0, 5)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            corrupt_to_target([], 10.0, 0)
        with pytest.raises(ValueError):
            corrupt_to_target(["a"], 101.0, 0)

    @settings(max_examples=300)
    @given(n=st.integers(20, 120), vocab=st.integers(1, 30),
           target=st.floats(0, 100), seed=st.integers(0, 2**32))
    def test_within_one_edit(self, n, vocab, target, seed):
        rng = np.random.default_rng(seed)
        ref = [f"v{int(i)}" for i in rng.integers(0, vocab, size=n)]
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            hyp = corrupt_to_target(ref, target, seed)
        assert abs(word_errors(ref, hyp).errors - round(target * n / 100)) <= 1

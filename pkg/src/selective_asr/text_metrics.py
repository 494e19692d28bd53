"""Word error rate, text normalization and controlled hypothesis corruption."""

from __future__ import annotations

import math
import string
import unicodedata
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NormalizationPolicy",
    "DEFAULT_POLICY",
    "normalize_text",
    "TranscriptPair",
    "WerBreakdown",
    "wer",
    "word_errors",
    "corpus_wer",
    "corrupt_to_target",
    "CorruptionWarning",
    "NoMeasurableCorpusError",
]


class NoMeasurableCorpusError(ValueError):
    """Raised when every reference in a corpus is empty."""


class CorruptionWarning(UserWarning):
    """The requested error count could not be hit within one word."""


@dataclass(frozen=True)
class NormalizationPolicy:
    casefold: bool = True
    strip_punctuation: bool = True
    unicode_form: str = "NFC"


DEFAULT_POLICY = NormalizationPolicy()


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P") or ch in string.punctuation


def normalize_text(raw: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> list[str]:
    """Turn a raw transcript into a word sequence.

    Punctuation characters are deleted (not replaced by spaces) so that
    contractions such as ``don't`` stay one word.
    """
    text = raw
    if policy.casefold:
        text = text.casefold()
    text = unicodedata.normalize(policy.unicode_form, text)
    if policy.strip_punctuation:
        text = "".join(ch for ch in text if not _is_punct(ch))
    return text.split()


@dataclass(frozen=True)
class TranscriptPair:
    reference: tuple[str, ...]
    hypothesis: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "reference", tuple(self.reference))
        object.__setattr__(self, "hypothesis", tuple(self.hypothesis))
        if any(w == "" for w in self.reference + self.hypothesis):
            raise ValueError("word sequences must not contain empty words")

    @classmethod
    def from_text(cls, reference: str, hypothesis: str,
                  policy: NormalizationPolicy = DEFAULT_POLICY) -> "TranscriptPair":
        return cls(tuple(normalize_text(reference, policy)),
                   tuple(normalize_text(hypothesis, policy)))


@dataclass(frozen=True)
class WerBreakdown:
    """Edit counts for one utterance.

    ``wer`` is on the 0-100 scale. When the reference is empty the
    denominator is undefined: ``undefined_denominator`` is set, ``wer`` is
    NaN (or 0.0 when the hypothesis is also empty) and corpus pooling skips
    the utterance.
    """

    substitutions: int
    deletions: int
    insertions: int
    reference_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def undefined_denominator(self) -> bool:
        return self.reference_words == 0

    @property
    def wer(self) -> float:
        if self.reference_words == 0:
            return 0.0 if self.errors == 0 else math.nan
        return 100.0 * self.errors / self.reference_words


def _align(ref: Sequence[str], hyp: Sequence[str]) -> tuple[int, int, int]:
    n, m = len(ref), len(hyp)
    # cost[i][j]: edits turning ref[:i] into hyp[:j]
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    row0 = cost[0]
    for j in range(1, m + 1):
        row0[j] = j
    for i in range(1, n + 1):
        prev, cur = cost[i - 1], cost[i]
        r = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (r != hyp[j - 1])
            up = prev[j] + 1
            left = cur[j - 1] + 1
            cur[j] = diag if diag <= up and diag <= left else (up if up <= left else left)

    # backtrace; diagonal first so equal-cost paths favour substitutions
    s = d = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        c = cost[i][j]
        if i > 0 and j > 0 and c == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and c == cost[i - 1][j] + 1:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return s, d, ins


def wer(pair: TranscriptPair) -> WerBreakdown:
    s, d, i = _align(pair.reference, pair.hypothesis)
    return WerBreakdown(s, d, i, len(pair.reference))


def word_errors(reference: Sequence[str], hypothesis: Sequence[str]) -> WerBreakdown:
    """Shortcut for ``wer(TranscriptPair(reference, hypothesis))``."""
    return wer(TranscriptPair(tuple(reference), tuple(hypothesis)))


def corpus_wer(pairs: Iterable[WerBreakdown]) -> float:
    """Pooled corpus WER: total edits over total reference words."""
    errors = words = 0
    for b in pairs:
        if b.undefined_denominator:
            continue
        errors += b.errors
        words += b.reference_words
    if words == 0:
        raise NoMeasurableCorpusError("no utterance with a non-empty reference")
    return 100.0 * errors / words


_LETTERS = np.array(list("abcdefghijklmnopqrstuvwxyz"))


def _foreign_word(rng: np.random.Generator, avoid: set[str]) -> str:
    while True:
        w = "".join(rng.choice(_LETTERS, size=int(rng.integers(3, 8))))
        if w not in avoid:
            avoid.add(w)
            return w


def corrupt_to_target(reference: Sequence[str], target_wer: float, seed: int) -> list[str]:
    """Produce a hypothesis whose WER against ``reference`` is close to ``target_wer``.

    round(target_wer * N / 100) edits are drawn as substitution, deletion or
    insertion with equal probability. Substituted and inserted words are
    fresh tokens absent from the reference. Deletions and insertions are then
    paired off into substitutions so they cannot cancel in alignment, which
    makes the measured edit count exact. When every word must change, all
    words are substituted and any remainder becomes insertions. A ``CorruptionWarning`` is emitted if the
    measured edit count misses the request by more than one.
    """
    if not 0.0 <= target_wer <= 100.0:
        raise ValueError(f"target_wer must lie in [0, 100], got {target_wer}")
    ref = list(reference)
    n = len(ref)
    if n == 0:
        raise ValueError("reference must be non-empty")
    k = int(round(target_wer * n / 100.0))
    if k == 0:
        return ref

    rng = np.random.default_rng(seed)
    avoid = set(ref)
    if k >= n:
        n_sub, n_del, n_ins = n, 0, k - n
    else:
        ops = rng.integers(0, 3, size=k)
        n_sub, n_del, n_ins = (int((ops == o).sum()) for o in range(3))

    # Hypothesis words are kept reference words plus fresh tokens, so the
    # distance is at least S + max(D, I); pairing each deletion with an
    # insertion as two substitutions makes that bound equal S + D + I.
    pairs = min(n_del, n_ins)
    n_sub, n_del, n_ins = n_sub + 2 * pairs, n_del - pairs, n_ins - pairs

    positions = rng.permutation(n)
    sub_pos = set(positions[:n_sub].tolist())
    del_pos = set(positions[n_sub:n_sub + n_del].tolist())
    inserts: dict[int, int] = {}
    # gap g sits before ref[g]; gap n follows the last word
    for g in rng.integers(0, n + 1, size=n_ins).tolist():
        inserts[g] = inserts.get(g, 0) + 1

    out: list[str] = []
    for p in range(n + 1):
        for _ in range(inserts.get(p, 0)):
            out.append(_foreign_word(rng, avoid))
        if p == n:
            break
        if p in del_pos:
            continue
        out.append(_foreign_word(rng, avoid) if p in sub_pos else ref[p])

    measured = word_errors(ref, out).errors
    if abs(measured - k) > 1:
        warnings.warn(
            f"corruption reached {measured} edits, requested {k} (n={n})",
            CorruptionWarning,
            stacklevel=2,
        )
    return out

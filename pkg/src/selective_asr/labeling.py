"""Invocation labels from per-utterance WER and three-format training manifests."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

import numpy as np

from .confidence import DEFAULT_BINS, ConfidenceLevel, LevelBins, level_from_probability
from .corpus import Utterance
from .text_metrics import DEFAULT_POLICY, NormalizationPolicy, normalize_text, word_errors

if TYPE_CHECKING:
    from .engine import BaseModelOutput

log = logging.getLogger(__name__)

__all__ = [
    "InvocationLabel",
    "IntervalPolicy",
    "UnknownLanguageError",
    "assign_label",
    "LabelRecord",
    "build_record",
    "build_records",
    "MissingOutputError",
    "EmptyClassError",
    "TrainingExample",
    "TrainingManifest",
    "format_example",
    "balance_manifest",
    "DECISION_TOKENS",
    "DEFAULT_RATIO",
]

# No : Yes : Uncertain
DEFAULT_RATIO = (1.0, 1.5, 1.5)


class InvocationLabel(enum.Enum):
    NO = "no"
    YES = "yes"
    UNCERTAIN = "uncertain"

    @classmethod
    def parse(cls, value: "str | InvocationLabel") -> "InvocationLabel":
        if isinstance(value, InvocationLabel):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown invocation label {value!r}") from None


class UnknownLanguageError(KeyError):
    def __init__(self, language: str):
        self.language = language
        super().__init__(f"no interval center configured for language {language!r}")

    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class IntervalPolicy:
    """WER intervals that map an utterance to an invocation label.

    ``agnostic``: No on [0, no_upper], Uncertain on (no_upper, yes_lower],
    Yes above. ``specific``: per-language center i (a backend's WER for that
    language) with Uncertain on (i - half_width, i + half_width].
    """

    mode: str = "agnostic"
    no_upper: float = 2.0
    yes_lower: float = 10.0
    centers: Mapping[str, float] = field(default_factory=dict)
    half_width: float = 2.5

    def __post_init__(self):
        if self.mode not in ("agnostic", "specific"):
            raise ValueError(f"mode must be 'agnostic' or 'specific', got {self.mode!r}")
        if self.mode == "agnostic" and not self.no_upper < self.yes_lower:
            raise ValueError(f"no_upper ({self.no_upper}) must be below yes_lower ({self.yes_lower})")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "centers", {k: float(v) for k, v in dict(self.centers).items()})

    def bounds(self, language: str) -> tuple[float, float]:
        """(upper edge of No, upper edge of Uncertain) for ``language``."""
        if self.mode == "agnostic":
            return self.no_upper, self.yes_lower
        try:
            i = self.centers[language]
        except KeyError:
            raise UnknownLanguageError(language) from None
        # round away float noise so e.g. 5.45 + 2.5 compares equal to 7.95
        return round(i - self.half_width, 9), round(i + self.half_width, 9)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "no_upper": self.no_upper, "yes_lower": self.yes_lower,
                "centers": dict(self.centers), "half_width": self.half_width}


def assign_label(wer: float, language: str, policy: IntervalPolicy) -> InvocationLabel:
    if math.isnan(wer) or wer < 0:
        raise ValueError(f"wer must be a non-negative number, got {wer}")
    lo, hi = policy.bounds(language)
    if wer <= lo:
        return InvocationLabel.NO
    if wer <= hi:
        return InvocationLabel.UNCERTAIN
    return InvocationLabel.YES


@dataclass(frozen=True)
class LabelRecord:
    utterance_id: str
    language_true: str
    language_pseudo: str
    wer: float
    label: InvocationLabel
    confidence_level: ConfidenceLevel
    posterior_probability: float
    hypothesis: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "language_true": self.language_true,
            "language_pseudo": self.language_pseudo,
            "wer": self.wer,
            "label": self.label.value,
            "confidence_level": self.confidence_level.name,
            "posterior_probability": self.posterior_probability,
            "hypothesis": " ".join(self.hypothesis),
        }


# (hypothesis, reference, language posterior, lid_correct) -> level
Scorer = Callable[[Sequence[str], Sequence[str], float, bool], ConfidenceLevel]


def build_record(
    utterance: Utterance,
    base_output: "BaseModelOutput",
    reference: Sequence[str] | None = None,
    policy: IntervalPolicy = IntervalPolicy(),
    bins: LevelBins = DEFAULT_BINS,
    *,
    scorer: Scorer | None = None,
    normalization: NormalizationPolicy = DEFAULT_POLICY,
) -> LabelRecord | None:
    """Label one utterance from its base-model output.

    ``reference`` defaults to the normalized ``utterance.text``. Returns None
    (and logs why) when there is no usable reference or hypothesis. The
    default grading uses the language posterior; ``scorer`` replaces it, but
    a wrong pseudo language still forces level D.
    """
    if reference is None and utterance.text is not None:
        reference = normalize_text(utterance.text, normalization)
    if not reference:
        log.warning("skipping %s: missing reference transcript", utterance.utterance_id)
        return None
    if base_output.hypothesis is None:
        log.warning("skipping %s: base output has no hypothesis", utterance.utterance_id)
        return None

    hyp = tuple(base_output.hypothesis)
    wer = word_errors(reference, hyp).wer
    label = assign_label(wer, utterance.language, policy)
    lid_correct = base_output.language_pred == utterance.language
    p = base_output.language_confidence
    if scorer is None:
        level = level_from_probability(p, lid_correct, bins)
    else:
        level = scorer(hyp, reference, p, lid_correct) if lid_correct else ConfidenceLevel.D
    return LabelRecord(
        utterance_id=utterance.utterance_id,
        language_true=utterance.language,
        language_pseudo=base_output.language_pred,
        wer=wer,
        label=label,
        confidence_level=ConfidenceLevel.parse(level),
        posterior_probability=p,
        hypothesis=hyp,
    )


class MissingOutputError(KeyError):
    def __init__(self, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__(f"no base output for {len(self.missing)} utterance(s): {self.missing[:10]}")

    def __str__(self):
        return self.args[0]


def build_records(
    utterances: Sequence[Utterance],
    outputs: Mapping[str, "BaseModelOutput"],
    policy: IntervalPolicy = IntervalPolicy(),
    bins: LevelBins = DEFAULT_BINS,
    *,
    scorer: Scorer | None = None,
    workers: int | None = None,
) -> list[LabelRecord]:
    """Label a corpus, preserving input order; skipped utterances are dropped."""
    missing = [u.utterance_id for u in utterances if u.utterance_id not in outputs]
    if missing:
        raise MissingOutputError(missing)

    def one(u: Utterance):
        return build_record(u, outputs[u.utterance_id], None, policy, bins, scorer=scorer)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, utterances))
    else:
        results = [one(u) for u in utterances]
    return [r for r in results if r is not None]


DECISION_TOKENS = {
    InvocationLabel.NO: "<|invoke_no|>",
    InvocationLabel.YES: "<|invoke_yes|>",
    InvocationLabel.UNCERTAIN: "<|invoke_uncertain|>",
}

SPECIAL_FIELDS = ("language", "language_confidence", "decision_token")


@dataclass(frozen=True)
class TrainingExample:
    utterance_id: str
    task_format: str
    language: str
    language_confidence: float
    decision_token: str
    transcription: str | None
    confidence_token: str | None
    loss_mask: tuple[str, ...]

    def to_dict(self) -> dict:
        d = {
            "utterance_id": self.utterance_id,
            "task_format": self.task_format,
            "language": self.language,
            "language_confidence": self.language_confidence,
            "decision_token": self.decision_token,
            "loss_mask": list(self.loss_mask),
        }
        if self.transcription is not None:
            d["transcription"] = self.transcription
        if self.confidence_token is not None:
            d["confidence_token"] = self.confidence_token
        return d


def format_example(record: LabelRecord) -> TrainingExample:
    """Render a record in its label's training format.

    no        -> transcript + decision token; loss on both.
    yes       -> decision token only; loss on special tokens.
    uncertain -> pseudo transcript + decision + confidence token; loss on
                 special tokens only.
    """
    label = record.label
    transcript = " ".join(record.hypothesis)
    if label is InvocationLabel.NO:
        return TrainingExample(record.utterance_id, "no", record.language_pseudo,
                               record.posterior_probability, DECISION_TOKENS[label],
                               transcript, None, SPECIAL_FIELDS + ("transcription",))
    if label is InvocationLabel.YES:
        return TrainingExample(record.utterance_id, "yes", record.language_pseudo,
                               record.posterior_probability, DECISION_TOKENS[label],
                               None, None, SPECIAL_FIELDS)
    return TrainingExample(record.utterance_id, "uncertain", record.language_pseudo,
                           record.posterior_probability, DECISION_TOKENS[label],
                           transcript, f"<|conf_{record.confidence_level.name}|>",
                           SPECIAL_FIELDS + ("confidence_token",))


@dataclass
class TrainingManifest:
    examples: list[TrainingExample]

    @property
    def counts(self) -> dict[str, int]:
        out = {"no": 0, "yes": 0, "uncertain": 0}
        for ex in self.examples:
            out[ex.task_format] += 1
        return out

    def to_dicts(self) -> list[dict]:
        return [ex.to_dict() for ex in self.examples]


class EmptyClassError(ValueError):
    pass


def _targets(counts: Sequence[int], ratio: Sequence[float]) -> list[int]:
    scale = min(c / r for c, r in zip(counts, ratio))
    return [min(c, int(round(scale * r))) for c, r in zip(counts, ratio)]


def balance_manifest(
    records: Iterable[LabelRecord],
    ratio: Sequence[float] = DEFAULT_RATIO,
    seed: int = 0,
) -> TrainingManifest:
    """Subsample classes toward ``ratio`` (No:Yes:Uncertain) and format them.

    Never duplicates a record; kept records stay in input order.
    """
    if len(ratio) != 3 or any(r <= 0 for r in ratio):
        raise ValueError(f"ratio must be three positive numbers, got {tuple(ratio)}")
    order = (InvocationLabel.NO, InvocationLabel.YES, InvocationLabel.UNCERTAIN)
    usable = [r for r in records if not math.isnan(r.wer)]
    by_class = {lab: [i for i, r in enumerate(usable) if r.label is lab] for lab in order}
    counts = [len(by_class[lab]) for lab in order]
    if min(counts) == 0:
        raise EmptyClassError(
            "cannot balance with an empty class: "
            + ", ".join(f"{lab.value}={c}" for lab, c in zip(order, counts))
        )
    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    for lab, target in zip(order, _targets(counts, ratio)):
        idx = by_class[lab]
        if target >= len(idx):
            keep.update(idx)
        else:
            keep.update(rng.choice(idx, size=target, replace=False).tolist())
    return TrainingManifest([format_example(r) for i, r in enumerate(usable) if i in keep])

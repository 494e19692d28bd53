"""Synthetic multilingual corpora for desk-scale routing experiments.

Each utterance gets a latent difficulty d (gamma, mean 1). The simulated base
model transcribes at ``base_wer[lang] * d`` and every SOTA backend at its
fixture WER times d, so the hard utterances are hard for everyone and the
benefit of invoking grows with d. The simulated router sees noisy views of
the base model's true WER:

* the decision token comes from the interval policy applied to a
  multiplicatively perturbed WER;
* posterior probability and entropy are affine in another perturbed WER,
  scaled so that the default fusion thresholds sit at about 5% WER;
* the confidence level is binned from a third perturbed probability, and is
  D whenever the language was misidentified.

A small share of utterances get a wrong language tag, most of them with low
language confidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .backends import (
    BackendDescriptor,
    BackendKind,
    LidTopRegistry,
    ReplayBackend,
    SyntheticBackend,
    build_lid_top,
)
from .confidence import DEFAULT_BINS, LevelBins, level_from_probability
from .corpus import Utterance, write_jsonl
from .engine import BaseModelOutput
from .evaluation import EvaluationCorpus
from .labeling import IntervalPolicy, assign_label
from .text_metrics import corrupt_to_target, word_errors

__all__ = [
    "MLS_FIXTURE_WER",
    "LANGUAGES",
    "mls_descriptors",
    "SyntheticSpec",
    "SyntheticCorpus",
    "make_corpus",
]

# WER (%) of LID-routed commercial/open models on the MLS test set.
MLS_FIXTURE_WER: dict[str, dict[str, float]] = {
    "openai": {"de": 4.68, "en": 5.81, "es": 4.26, "fr": 5.82, "it": 9.95, "nl": 9.89, "pl": 4.52},
    "meta": {"de": 4.83, "en": 7.34, "es": 4.02, "fr": 5.45, "it": 9.62, "nl": 12.11, "pl": 7.00},
    "assembly": {"de": 3.91, "en": 5.23, "es": 4.73, "fr": 7.26, "it": 13.69, "nl": 9.81, "pl": 5.57},
}
LANGUAGES = ("de", "en", "es", "fr", "it", "nl", "pl")


def mls_descriptors(kind: BackendKind = BackendKind.SYNTHETIC, dataset: str = "mls",
                       cost_per_audio_second: float = 1.0) -> list[BackendDescriptor]:
    return [
        BackendDescriptor(
            backend_id=name,
            kind=kind,
            supported_languages=frozenset(wers),
            cost_per_audio_second=cost_per_audio_second,
            per_language_wer=dict(wers),
            dataset_wer={dataset: dict(wers)},
        )
        for name, wers in MLS_FIXTURE_WER.items()
    ]


@dataclass(frozen=True)
class SyntheticSpec:
    n_utterances: int = 2100
    # base WER as a multiple of the best backend's WER; 7.86 / 6.08 by default
    base_factor: float = 7.86 / 6.08
    difficulty_shape: float = 1.5
    min_words: int = 12
    max_words: int = 40
    seconds_per_word: tuple[float, float] = (0.3, 0.5)
    uniform_duration: float | None = None
    lid_error_rate: float = 0.02
    lid_error_low_confidence: float = 0.8
    decision_noise: float = 0.6
    score_noise: float = 0.5
    level_noise: float = 0.5
    # WER (%) at which the score proxies sit on the default thresholds
    score_pivot: float = 5.0
    vocab_size: int = 400


@dataclass
class SyntheticCorpus:
    utterances: list[Utterance]
    outputs: list[BaseModelOutput]
    descriptors: list[BackendDescriptor]
    dataset: str

    @property
    def registry(self) -> LidTopRegistry:
        return build_lid_top(self.descriptors, self.dataset)

    def evaluation_corpus(self, policy: IntervalPolicy = IntervalPolicy()) -> EvaluationCorpus:
        backends = {d.backend_id: SyntheticBackend(d, self.dataset) for d in self.descriptors}
        return EvaluationCorpus(self.utterances, ReplayBackend(self.outputs), self.registry,
                                backends, policy=policy, name=self.dataset)

    def write(self, directory) -> dict[str, Path]:
        """Write corpus manifest, replay store and backend fixtures as JSONL."""
        directory = Path(directory)
        paths = {
            "corpus": directory / "corpus.jsonl",
            "replay": directory / "replay.jsonl",
            "backends": directory / "backends.jsonl",
        }
        write_jsonl(paths["corpus"], (u.to_dict() for u in self.utterances))
        write_jsonl(paths["replay"], (o.to_dict() for o in self.outputs))
        write_jsonl(paths["backends"], (d.to_dict() for d in self.descriptors))
        return paths


def _vocabulary(rng: np.random.Generator, size: int) -> list[str]:
    syllables = ["ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "di", "pa", "zu", "be", "go", "ha", "ji"]
    words: set[str] = set()
    while len(words) < size:
        words.add("".join(rng.choice(syllables, size=int(rng.integers(1, 4)))))
    return sorted(words)


def make_corpus(seed: int = 0, spec: SyntheticSpec = SyntheticSpec(), dataset: str = "mls",
                descriptors: list[BackendDescriptor] | None = None,
                bins: LevelBins = DEFAULT_BINS,
                decision_policy: IntervalPolicy = IntervalPolicy()) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    descriptors = descriptors or mls_descriptors(dataset=dataset)
    registry = build_lid_top(descriptors, dataset)
    langs = registry.languages
    vocab = {lang: [f"{w}{lang}" for w in _vocabulary(rng, spec.vocab_size)] for lang in langs}
    slope_p = (1.0 - 0.96) / spec.score_pivot
    slope_e = 0.0015 / spec.score_pivot

    utterances, outputs = [], []
    for idx in range(spec.n_utterances):
        lang = langs[int(rng.integers(len(langs)))]
        uid = f"{dataset}-{lang}-{idx:05d}"
        n_words = int(rng.integers(spec.min_words, spec.max_words + 1))
        words = [vocab[lang][i] for i in rng.integers(spec.vocab_size, size=n_words)]
        d = float(rng.gamma(spec.difficulty_shape, 1.0 / spec.difficulty_shape))
        if spec.uniform_duration is not None:
            duration = spec.uniform_duration
        else:
            duration = round(n_words * float(rng.uniform(*spec.seconds_per_word)), 2)
        utt = Utterance(uid, lang, " ".join(words), audio=f"{lang}/{idx:05d}.flac",
                        duration=duration, difficulty=d)

        base_target = min(100.0, registry.wers[lang] * spec.base_factor * d)
        hyp = corrupt_to_target(words, base_target, int(rng.integers(2**63)))
        true_wer = word_errors(words, hyp).wer

        if rng.random() < spec.lid_error_rate:
            pred = [l for l in langs if l != lang][int(rng.integers(len(langs) - 1))]
            low = rng.random() < spec.lid_error_low_confidence
            lang_conf = float(rng.uniform(0.1, 0.5) if low else rng.uniform(0.5, 0.95))
        else:
            pred = lang
            lang_conf = float(1.0 - rng.beta(1.0, 30.0))

        def view(noise):
            return true_wer * float(np.exp(rng.normal(0.0, noise))) + float(rng.exponential(0.5))

        decision = assign_label(view(spec.decision_noise), lang, decision_policy)
        w_score = view(spec.score_noise)
        prob = float(np.clip(1.0 - slope_p * w_score, 0.0, 1.0))
        ent = float(max(0.0, slope_e * w_score))
        level_prob = float(np.clip(1.0 - slope_p * view(spec.level_noise), 0.0, 1.0))
        level = level_from_probability(level_prob, pred == lang, bins)

        utterances.append(utt)
        outputs.append(BaseModelOutput(
            utterance_id=uid,
            language_pred=pred,
            language_confidence=round(lang_conf, 6),
            decision=decision,
            hypothesis=tuple(hyp),
            confidence_level=level,
            probability=round(prob, 8),
            entropy=round(ent, 8),
        ))
    return SyntheticCorpus(utterances, outputs, list(descriptors), dataset)

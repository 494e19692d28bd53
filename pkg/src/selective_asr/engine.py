"""Runtime router: base-model output in, direct-or-invoke decision out."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .confidence import (
    ConfidenceLevel,
    ConfidenceSummary,
    FusionThresholds,
    PosteriorMatrix,
    Verdict,
    fuse,
    summarize,
)
from .labeling import InvocationLabel

__all__ = [
    "BaseModelOutput",
    "Route",
    "Reason",
    "RoutingDecision",
    "EngineConfig",
    "route",
    "resolve_thresholds",
]

REPLAY_FIELDS = {
    "utterance_id", "hypothesis", "language_pred", "language_confidence",
    "decision_token", "confidence_level", "posterior", "probability", "entropy",
}


@dataclass(frozen=True)
class BaseModelOutput:
    """What the base model emitted for one utterance.

    Confidence evidence comes either as a full ``posterior`` matrix or as
    precomputed ``probability``/``entropy`` values; the matrix wins if both
    are given.
    """

    utterance_id: str
    language_pred: str
    language_confidence: float
    decision: InvocationLabel
    hypothesis: tuple[str, ...] | None = None
    confidence_level: ConfidenceLevel | None = None
    posterior: PosteriorMatrix | None = None
    probability: float | None = None
    entropy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "decision", InvocationLabel.parse(self.decision))
        if self.hypothesis is not None:
            hyp = self.hypothesis.split() if isinstance(self.hypothesis, str) else tuple(self.hypothesis)
            object.__setattr__(self, "hypothesis", tuple(hyp))
        if self.confidence_level is not None:
            object.__setattr__(self, "confidence_level", ConfidenceLevel.parse(self.confidence_level))
        if self.posterior is not None and not isinstance(self.posterior, PosteriorMatrix):
            object.__setattr__(self, "posterior", PosteriorMatrix(np.asarray(self.posterior)))
        if not 0.0 <= self.language_confidence <= 1.0:
            raise ValueError(f"language_confidence must be in [0, 1], got {self.language_confidence}")
        self.validate()

    @property
    def has_scores(self) -> bool:
        return self.posterior is not None or (self.probability is not None and self.entropy is not None)

    def validate(self) -> None:
        if self.decision is InvocationLabel.NO and self.hypothesis is None:
            raise ValueError(f"{self.utterance_id}: decision 'no' requires a hypothesis")
        if self.decision is InvocationLabel.UNCERTAIN:
            missing = [name for name, ok in (
                ("hypothesis", self.hypothesis is not None),
                ("confidence_level", self.confidence_level is not None),
                ("posterior or probability/entropy", self.has_scores),
            ) if not ok]
            if missing:
                raise ValueError(f"{self.utterance_id}: decision 'uncertain' requires {', '.join(missing)}")

    def summary(self) -> ConfidenceSummary:
        if self.confidence_level is None or not self.has_scores:
            raise ValueError(f"{self.utterance_id}: no confidence evidence")
        if self.posterior is not None:
            return summarize(self.posterior, self.confidence_level)
        return ConfidenceSummary(float(self.probability), float(self.entropy), self.confidence_level)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BaseModelOutput":
        unknown = set(d) - REPLAY_FIELDS
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        return cls(
            utterance_id=str(d["utterance_id"]),
            language_pred=str(d["language_pred"]),
            language_confidence=float(d["language_confidence"]),
            decision=d["decision_token"],
            hypothesis=d.get("hypothesis"),
            confidence_level=d.get("confidence_level"),
            posterior=d.get("posterior"),
            probability=d.get("probability"),
            entropy=d.get("entropy"),
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "utterance_id": self.utterance_id,
            "language_pred": self.language_pred,
            "language_confidence": self.language_confidence,
            "decision_token": self.decision.value,
        }
        if self.hypothesis is not None:
            d["hypothesis"] = " ".join(self.hypothesis)
        if self.confidence_level is not None:
            d["confidence_level"] = self.confidence_level.name
        if self.posterior is not None:
            d["posterior"] = self.posterior.values.tolist()
        if self.probability is not None:
            d["probability"] = self.probability
        if self.entropy is not None:
            d["entropy"] = self.entropy
        return d


class Route(enum.Enum):
    DIRECT = "direct"
    INVOKE = "invoke"


class Reason(enum.Enum):
    DECISION_NO = "DecisionNo"
    LOW_LANGUAGE_CONFIDENCE = "LowLanguageConfidence"
    DECISION_YES = "DecisionYes"
    FUSION_INVOKE = "FusionInvoke"
    FUSION_ACCEPT = "FusionAccept"
    # fixed-policy comparison systems (random, always-invoke, never-invoke, oracle)
    BASELINE_INVOKE = "BaselineInvoke"
    BASELINE_DIRECT = "BaselineDirect"


_INVOKE_REASONS = {Reason.DECISION_YES, Reason.FUSION_INVOKE, Reason.BASELINE_INVOKE}


@dataclass(frozen=True)
class RoutingDecision:
    utterance_id: str
    route: Route
    reason: Reason
    target_language: str | None = None
    hypothesis: tuple[str, ...] | None = None

    def __post_init__(self):
        if (self.route is Route.INVOKE) != (self.reason in _INVOKE_REASONS):
            raise ValueError(f"route {self.route.value} inconsistent with reason {self.reason.value}")
        if self.route is Route.INVOKE and not self.target_language:
            raise ValueError("invoke decisions need a target language")

    @property
    def invoked(self) -> bool:
        return self.route is Route.INVOKE

    @property
    def transcript_source(self) -> str:
        return "backend" if self.invoked else "base"


@dataclass(frozen=True)
class EngineConfig:
    thresholds: FusionThresholds = field(default_factory=FusionThresholds)
    overrides: Mapping[str, FusionThresholds] = field(default_factory=dict)
    language_confidence_floor: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.language_confidence_floor <= 1.0:
            raise ValueError("language_confidence_floor must be in [0, 1]")
        object.__setattr__(self, "overrides", dict(self.overrides))

    def with_thresholds(self, **changes) -> "EngineConfig":
        t = self.thresholds
        new = FusionThresholds(
            changes.get("probability_floor", t.probability_floor),
            changes.get("entropy_ceiling", t.entropy_ceiling),
            changes.get("level_threshold", t.level_threshold),
        )
        return EngineConfig(new, self.overrides, self.language_confidence_floor)


def resolve_thresholds(language: str, config: EngineConfig) -> FusionThresholds:
    return config.overrides.get(language, config.thresholds)


def route(output: BaseModelOutput, config: EngineConfig) -> RoutingDecision:
    """Decide whether to keep the base transcript or call a backend.

    Precedence: low language confidence keeps the base transcript whatever
    the decision token says; then No/Yes map directly; Uncertain goes
    through the fusion rule with the language's thresholds.
    """
    uid, lang, hyp = output.utterance_id, output.language_pred, output.hypothesis
    if output.language_confidence < config.language_confidence_floor:
        return RoutingDecision(uid, Route.DIRECT, Reason.LOW_LANGUAGE_CONFIDENCE, hypothesis=hyp)
    if output.decision is InvocationLabel.NO:
        return RoutingDecision(uid, Route.DIRECT, Reason.DECISION_NO, hypothesis=hyp)
    if output.decision is InvocationLabel.YES:
        return RoutingDecision(uid, Route.INVOKE, Reason.DECISION_YES, target_language=lang)
    verdict = fuse(output.summary(), resolve_thresholds(lang, config))
    if verdict is Verdict.INVOKE:
        return RoutingDecision(uid, Route.INVOKE, Reason.FUSION_INVOKE, target_language=lang)
    return RoutingDecision(uid, Route.DIRECT, Reason.FUSION_ACCEPT, hypothesis=hyp)


def route_many(outputs: Sequence[BaseModelOutput], config: EngineConfig) -> list[RoutingDecision]:
    return [route(o, config) for o in outputs]

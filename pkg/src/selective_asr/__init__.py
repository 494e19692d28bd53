"""Selective backend invocation for multilingual speech recognition.

A base model transcribes every utterance and also says whether it trusts
itself (no / yes / uncertain). This package turns those outputs into routing
decisions, labels training data for the base model, and measures the
accuracy/cost trade-off of the resulting cascade.
"""

from .confidence import (
    ConfidenceLevel,
    ConfidenceSummary,
    FusionThresholds,
    LevelBins,
    PosteriorMatrix,
    Verdict,
    entropy,
    fuse,
    level_from_probability,
    posterior_probability,
)
from .engine import BaseModelOutput, EngineConfig, Reason, Route, RoutingDecision, resolve_thresholds, route
from .labeling import IntervalPolicy, InvocationLabel, assign_label, balance_manifest, build_record
from .text_metrics import corpus_wer, corrupt_to_target, normalize_text, wer, word_errors

__version__ = "0.1.0"

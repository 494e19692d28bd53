"""Posterior, entropy and transcription-level confidence plus the fusion rule."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "ConfidenceLevel",
    "PosteriorMatrix",
    "FusionThresholds",
    "ConfidenceSummary",
    "Verdict",
    "LevelBins",
    "DEFAULT_BINS",
    "posterior_probability",
    "entropy",
    "summarize",
    "fuse",
    "level_from_probability",
]

ROW_SUM_TOL = 1e-6


class ConfidenceLevel(enum.IntEnum):
    """Transcription grade; comparison follows quality (A > B > C > D)."""

    D = 0
    C = 1
    B = 2
    A = 3

    @classmethod
    def parse(cls, value: "str | ConfidenceLevel") -> "ConfidenceLevel":
        if isinstance(value, ConfidenceLevel):
            return value
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown confidence level {value!r}") from None


@dataclass(frozen=True)
class PosteriorMatrix:
    """T x C matrix of per-step class posteriors (rows are distributions)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"posterior matrix must be 2-D, got shape {v.shape}")
        t, c = v.shape
        if t < 1 or c < 2:
            raise ValueError(f"need T >= 1 and C >= 2, got T={t}, C={c}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("posterior entries must lie in [0, 1]")
        sums = v.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValueError(f"row {bad[0]} sums to {sums[bad[0]]:.8f}, expected 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def C(self) -> int:
        return self.values.shape[1]


def _as_matrix(m) -> PosteriorMatrix:
    return m if isinstance(m, PosteriorMatrix) else PosteriorMatrix(m)


def posterior_probability(m) -> float:
    """Mean over steps of the largest class posterior."""
    v = _as_matrix(m).values
    return float(v.max(axis=1).mean())


def entropy(m) -> float:
    """Mean per-entry entropy term, -sum(y log y) / (T * C), in nats.

    Zero entries contribute nothing (0 log 0 = 0).
    """
    v = _as_matrix(m).values
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(v > 0.0, v * np.log(v), 0.0)
    return float(-terms.sum() / v.size)


@dataclass(frozen=True)
class FusionThresholds:
    probability_floor: float = 0.96
    entropy_ceiling: float = 0.0015
    level_threshold: ConfidenceLevel = ConfidenceLevel.B

    def __post_init__(self):
        if not 0.0 <= self.probability_floor <= 1.0:
            raise ValueError(f"probability_floor must be in [0, 1], got {self.probability_floor}")
        if self.entropy_ceiling < 0.0:
            raise ValueError(f"entropy_ceiling must be >= 0, got {self.entropy_ceiling}")
        object.__setattr__(self, "level_threshold", ConfidenceLevel.parse(self.level_threshold))

    def to_dict(self) -> dict:
        return {
            "probability_floor": self.probability_floor,
            "entropy_ceiling": self.entropy_ceiling,
            "level_threshold": self.level_threshold.name,
        }


@dataclass(frozen=True)
class ConfidenceSummary:
    posterior_probability: float
    entropy: float
    transcription_confidence: ConfidenceLevel

    def __post_init__(self):
        object.__setattr__(self, "transcription_confidence",
                           ConfidenceLevel.parse(self.transcription_confidence))


def summarize(m, level: ConfidenceLevel | str) -> ConfidenceSummary:
    m = _as_matrix(m)
    return ConfidenceSummary(posterior_probability(m), entropy(m), ConfidenceLevel.parse(level))


class Verdict(enum.Enum):
    INVOKE = "invoke"
    ACCEPT = "accept"


def fuse(summary: ConfidenceSummary, thresholds: FusionThresholds) -> Verdict:
    """Invoke only when all three measures signal difficulty.

    All comparisons are strict, so a value sitting exactly on its threshold
    counts as confident.
    """
    if (
        summary.posterior_probability < thresholds.probability_floor
        and summary.entropy > thresholds.entropy_ceiling
        and summary.transcription_confidence < thresholds.level_threshold
    ):
        return Verdict.INVOKE
    return Verdict.ACCEPT


@dataclass(frozen=True)
class LevelBins:
    """Lower probability edge of each confidence level.

    Edges must strictly decrease from A to D and D must start at 0 so the
    bins tile [0, 1] without overlap.
    """

    edges: Mapping[ConfidenceLevel, float] = field(default_factory=lambda: {
        ConfidenceLevel.A: 0.98,
        ConfidenceLevel.B: 0.96,
        ConfidenceLevel.C: 0.90,
        ConfidenceLevel.D: 0.0,
    })

    def __post_init__(self):
        edges = {ConfidenceLevel.parse(k): float(v) for k, v in dict(self.edges).items()}
        if set(edges) != set(ConfidenceLevel):
            missing = sorted(l.name for l in set(ConfidenceLevel) - set(edges))
            raise ValueError(f"level bins missing levels: {missing}")
        if edges[ConfidenceLevel.D] != 0.0:
            raise ValueError("level D must start at 0.0 so the bins cover [0, 1]")
        ordered = [edges[l] for l in sorted(ConfidenceLevel, reverse=True)]
        if any(not 0.0 <= e <= 1.0 for e in ordered):
            raise ValueError("bin edges must lie in [0, 1]")
        if any(a <= b for a, b in zip(ordered, ordered[1:])):
            raise ValueError(f"bin edges must strictly decrease from A to D: {ordered}")
        object.__setattr__(self, "edges", edges)

    def lookup(self, p: float) -> ConfidenceLevel:
        for level in sorted(ConfidenceLevel, reverse=True):
            if p >= self.edges[level]:
                return level
        return ConfidenceLevel.D

    def to_dict(self) -> dict:
        return {l.name: e for l, e in sorted(self.edges.items(), reverse=True)}


DEFAULT_BINS = LevelBins()


def level_from_probability(p: float, lid_correct: bool, bins: LevelBins = DEFAULT_BINS) -> ConfidenceLevel:
    """Grade a transcription from its language posterior.

    A wrong language identification always yields the lowest grade.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must be in [0, 1], got {p}")
    if not lid_correct:
        return ConfidenceLevel.D
    return bins.lookup(p)

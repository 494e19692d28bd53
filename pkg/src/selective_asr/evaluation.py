"""Corpus-level metrics, comparison baselines and report rendering.

Every report is computed from a per-utterance routing log, so numbers can
always be re-derived from the log alone.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .backends import InvocationLedger, LidTopRegistry, ReplayBackend
from .corpus import Utterance
from .engine import EngineConfig, Reason, Route, RoutingDecision, route
from .labeling import IntervalPolicy, InvocationLabel, assign_label
from .text_metrics import DEFAULT_POLICY, NormalizationPolicy, WerBreakdown, normalize_text, word_errors

log = logging.getLogger(__name__)

__all__ = [
    "invocation_rate",
    "invocation_efficiency",
    "decision_scores",
    "invoke_error_rate",
    "EvaluationCorpus",
    "ReplayGapError",
    "LogEntry",
    "EvaluationReport",
    "report_from_log",
    "evaluate_decisions",
    "evaluate_system",
    "engine_decisions",
    "base_system",
    "lid_top_system",
    "random_invocation_baseline",
    "oracle_baseline",
    "ground_truth",
    "sweep",
    "render_table",
    "report_rows",
    "SYSTEMS",
]

SYSTEMS = ("base", "random", "sima", "lid-top")


def invocation_rate(decisions: Iterable[RoutingDecision | bool]) -> float:
    flags = [d if isinstance(d, bool) else d.invoked for d in decisions]
    if not flags:
        raise ValueError("invocation rate of an empty collection is undefined")
    return 100.0 * sum(flags) / len(flags)


def invocation_efficiency(base_wer: float, system_wer: float, rate: float) -> float | None:
    """WER points saved per unit of invocation rate; None when nothing was invoked."""
    if rate <= 0:
        return None
    return (base_wer - system_wer) / (rate / 100.0)


def decision_scores(predicted: Sequence[RoutingDecision | bool],
                    truth: Sequence[bool]) -> tuple[float, float | None]:
    """(accuracy %, F1 % with Invoke as the positive class).

    F1 is None when the truth holds no Invoke examples.
    """
    pred = [p if isinstance(p, bool) else p.invoked for p in predicted]
    if len(pred) != len(truth):
        raise ValueError("predictions and truth differ in length")
    if not pred:
        raise ValueError("no decisions to score")
    tp = sum(p and t for p, t in zip(pred, truth))
    fp = sum(p and not t for p, t in zip(pred, truth))
    fn = sum(t and not p for p, t in zip(pred, truth))
    tn = len(pred) - tp - fp - fn
    accuracy = 100.0 * (tp + tn) / len(pred)
    if tp + fn == 0:
        return accuracy, None
    return accuracy, 100.0 * 2 * tp / (2 * tp + fp + fn)


def invoke_error_rate(decisions: Sequence[RoutingDecision],
                      true_languages: Mapping[str, str]) -> float:
    """Share of all utterances sent to a backend for the wrong language."""
    if not decisions:
        raise ValueError("no decisions")
    wrong = sum(1 for d in decisions
                if d.invoked and d.target_language != true_languages[d.utterance_id])
    return 100.0 * wrong / len(decisions)


class ReplayGapError(ValueError):
    def __init__(self, missing: Sequence[str], empty: Sequence[str] = ()):
        self.missing, self.empty = list(missing), list(empty)
        parts = []
        if self.missing:
            parts.append(f"{len(self.missing)} without replay record: {self.missing[:20]}")
        if self.empty:
            parts.append(f"{len(self.empty)} without reference: {self.empty[:20]}")
        super().__init__("; ".join(parts))


class EvaluationCorpus:
    """Utterances plus everything needed to transcribe them either way.

    Hypotheses and their edit counts are memoized, so evaluating several
    systems on one corpus transcribes each (utterance, source) pair once.
    """

    def __init__(self, utterances: Sequence[Utterance], base: ReplayBackend,
                 registry: LidTopRegistry, backends: Mapping[str, Any], *,
                 rates: Mapping[str, float] | None = None,
                 policy: IntervalPolicy = IntervalPolicy(),
                 normalization: NormalizationPolicy = DEFAULT_POLICY,
                 name: str | None = None):
        self.utterances = list(utterances)
        self.base = base
        self.registry = registry
        self.backends = dict(backends)
        if rates is None:
            rates = {bid: b.descriptor.cost_per_audio_second for bid, b in self.backends.items()}
        self.rates = dict(rates)
        self.policy = policy
        self.normalization = normalization
        self.name = name or registry.dataset
        self._by_id = {u.utterance_id: u for u in self.utterances}
        self._refs: dict[str, list[str]] = {}
        self._base_err: dict[str, WerBreakdown] = {}
        self._backend_err: dict[tuple[str, str], tuple[str, WerBreakdown]] = {}
        self.validate()

    def __len__(self) -> int:
        return len(self.utterances)

    def validate(self) -> None:
        missing = [u.utterance_id for u in self.utterances if u.utterance_id not in self.base]
        empty = [u.utterance_id for u in self.utterances if not self.reference(u.utterance_id)]
        if missing or empty:
            raise ReplayGapError(missing, empty)

    def utterance(self, utterance_id: str) -> Utterance:
        return self._by_id[utterance_id]

    def reference(self, utterance_id: str) -> list[str]:
        if utterance_id not in self._refs:
            self._refs[utterance_id] = normalize_text(self._by_id[utterance_id].text or "",
                                                      self.normalization)
        return self._refs[utterance_id]

    def base_errors(self, utterance_id: str) -> WerBreakdown:
        if utterance_id not in self._base_err:
            hyp = self.base.transcribe(self._by_id[utterance_id])
            self._base_err[utterance_id] = word_errors(self.reference(utterance_id), hyp)
        return self._base_err[utterance_id]

    def backend_errors(self, utterance_id: str, language: str) -> tuple[str, WerBreakdown]:
        key = (utterance_id, language)
        if key not in self._backend_err:
            backend_id = self.registry.lookup(language)
            hyp = self.backends[backend_id].transcribe(self._by_id[utterance_id], language)
            self._backend_err[key] = (backend_id, word_errors(self.reference(utterance_id), hyp))
        return self._backend_err[key]

    def prefetch(self, workers: int | None = None) -> None:
        """Transcribe every utterance with the base and its true-language backend."""
        def one(u: Utterance):
            self.base_errors(u.utterance_id)
            self.backend_errors(u.utterance_id, u.language)

        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(one, self.utterances))
        else:
            for u in self.utterances:
                one(u)

    @property
    def true_languages(self) -> dict[str, str]:
        return {u.utterance_id: u.language for u in self.utterances}


def ground_truth(corpus: EvaluationCorpus) -> dict[str, bool]:
    """Reference invoke/keep label for each utterance.

    The base WER is mapped through the corpus interval policy; Uncertain
    utterances count as Invoke exactly when the true-language backend makes
    fewer errors than the base model.
    """
    truth = {}
    for u in corpus.utterances:
        base = corpus.base_errors(u.utterance_id)
        label = assign_label(base.wer, u.language, corpus.policy)
        if label is InvocationLabel.UNCERTAIN:
            _, backend = corpus.backend_errors(u.utterance_id, u.language)
            truth[u.utterance_id] = backend.errors < base.errors
        else:
            truth[u.utterance_id] = label is InvocationLabel.YES
    return truth


@dataclass(frozen=True)
class LogEntry:
    utterance_id: str
    language: str
    route: str
    reason: str
    target_language: str | None
    backend_id: str | None
    errors: int
    reference_words: int
    base_errors: int
    audio_seconds: float
    cost: float
    lid_top_cost: float
    truth_invoke: bool

    @property
    def invoked(self) -> bool:
        return self.route == Route.INVOKE.value


@dataclass
class EvaluationReport:
    system: str
    corpus: str
    utterances: int
    wer: float
    base_wer: float
    invocation_rate: float
    duration_rate: float
    efficiency: float | None
    efficiency_macro: float | None
    decision_accuracy: float
    decision_f1: float | None
    cost: float
    cost_multiplier: float
    invoke_error_rate: float
    per_language: dict[str, "EvaluationReport"] = field(default_factory=dict)
    log: list[LogEntry] = field(default_factory=list, repr=False)

    def to_dict(self, *, include_languages: bool = True) -> dict[str, Any]:
        d = {k: v for k, v in asdict(self).items() if k not in ("per_language", "log")}
        if include_languages:
            d["per_language"] = {k: r.to_dict(include_languages=False)
                                 for k, r in self.per_language.items()}
        return d


def _summarize(entries: Sequence[LogEntry], system: str, corpus: str) -> EvaluationReport:
    words = sum(e.reference_words for e in entries)
    n = len(entries)
    wer = 100.0 * sum(e.errors for e in entries) / words
    base_wer = 100.0 * sum(e.base_errors for e in entries) / words
    rate = invocation_rate([e.invoked for e in entries])
    seconds = sum(e.audio_seconds for e in entries)
    duration_rate = 100.0 * sum(e.audio_seconds for e in entries if e.invoked) / seconds
    acc, f1 = decision_scores([e.invoked for e in entries], [e.truth_invoke for e in entries])
    cost = sum(e.cost for e in entries)
    lid_top_cost = sum(e.lid_top_cost for e in entries)
    wrong = sum(1 for e in entries if e.invoked and e.target_language != e.language)
    return EvaluationReport(
        system=system,
        corpus=corpus,
        utterances=n,
        wer=wer,
        base_wer=base_wer,
        invocation_rate=rate,
        duration_rate=duration_rate,
        efficiency=invocation_efficiency(base_wer, wer, rate),
        efficiency_macro=None,
        decision_accuracy=acc,
        decision_f1=f1,
        cost=cost,
        cost_multiplier=cost / lid_top_cost if lid_top_cost > 0 else 0.0,
        invoke_error_rate=100.0 * wrong / n,
    )


def report_from_log(entries: Sequence[LogEntry], system: str, corpus: str) -> EvaluationReport:
    """Build the full report (with per-language rows) from a routing log."""
    entries = list(entries)
    report = _summarize(entries, system, corpus)
    for lang in sorted({e.language for e in entries}):
        report.per_language[lang] = _summarize([e for e in entries if e.language == lang],
                                               system, corpus)
    effs = [r.efficiency for r in report.per_language.values() if r.efficiency is not None]
    report.efficiency_macro = float(np.mean(effs)) if effs else None
    report.log = entries
    return report


def evaluate_decisions(corpus: EvaluationCorpus, decisions: Sequence[RoutingDecision],
                       system: str, truth: Mapping[str, bool] | None = None) -> EvaluationReport:
    """Transcribe per the decisions, bill invocations and report."""
    if truth is None:
        truth = ground_truth(corpus)
    ledger = InvocationLedger(corpus.rates)
    entries = []
    for d in decisions:
        u = corpus.utterance(d.utterance_id)
        base = corpus.base_errors(u.utterance_id)
        lid_top_id = corpus.registry.lookup(u.language)
        lid_top_cost = u.billable_seconds * corpus.rates[lid_top_id]
        if d.invoked:
            backend_id, errs = corpus.backend_errors(u.utterance_id, d.target_language)
            entry = ledger.record(u, backend_id)
            cost = entry.cost if entry else 0.0
        else:
            backend_id, errs, cost = None, base, 0.0
        entries.append(LogEntry(
            utterance_id=u.utterance_id,
            language=u.language,
            route=d.route.value,
            reason=d.reason.value,
            target_language=d.target_language,
            backend_id=backend_id,
            errors=errs.errors,
            reference_words=errs.reference_words,
            base_errors=base.errors,
            audio_seconds=u.billable_seconds,
            cost=cost,
            lid_top_cost=lid_top_cost,
            truth_invoke=truth[u.utterance_id],
        ))
    return report_from_log(entries, system, corpus.name)


def engine_decisions(corpus: EvaluationCorpus, config: EngineConfig) -> list[RoutingDecision]:
    return [route(corpus.base.output(u.utterance_id), config) for u in corpus.utterances]


def evaluate_system(corpus: EvaluationCorpus, config: EngineConfig, system: str = "sima",
                    truth: Mapping[str, bool] | None = None) -> EvaluationReport:
    return evaluate_decisions(corpus, engine_decisions(corpus, config), system, truth)


def _fixed(corpus: EvaluationCorpus, invoke: Iterable[bool]) -> list[RoutingDecision]:
    out = []
    for u, flag in zip(corpus.utterances, invoke):
        if flag:
            out.append(RoutingDecision(u.utterance_id, Route.INVOKE, Reason.BASELINE_INVOKE,
                                       target_language=u.language))
        else:
            out.append(RoutingDecision(u.utterance_id, Route.DIRECT, Reason.BASELINE_DIRECT))
    return out


def base_system(corpus: EvaluationCorpus, truth=None) -> EvaluationReport:
    return evaluate_decisions(corpus, _fixed(corpus, [False] * len(corpus)), "base", truth)


def lid_top_system(corpus: EvaluationCorpus, truth=None) -> EvaluationReport:
    """Always invoke the best backend for the (known) spoken language."""
    return evaluate_decisions(corpus, _fixed(corpus, [True] * len(corpus)), "lid-top", truth)


def random_invocation_baseline(corpus: EvaluationCorpus, rate: float, seed: int,
                               truth=None) -> EvaluationReport:
    """Invoke a uniformly random subset of exactly round(rate * N / 100) utterances.

    Invoked utterances go to the backend for their spoken language, so rate
    100 reproduces the LID-Top system.
    """
    if not 0.0 <= rate <= 100.0:
        raise ValueError(f"rate must be in [0, 100], got {rate}")
    n = len(corpus)
    k = int(round(rate * n / 100.0))
    chosen = set(np.random.default_rng(seed).choice(n, size=k, replace=False).tolist())
    return evaluate_decisions(corpus, _fixed(corpus, [i in chosen for i in range(n)]),
                              "random", truth)


def oracle_baseline(corpus: EvaluationCorpus, rate: float, truth=None) -> EvaluationReport:
    """Invoke the round(rate * N / 100) utterances with the largest error savings."""
    n = len(corpus)
    k = int(round(rate * n / 100.0))
    gains = []
    for i, u in enumerate(corpus.utterances):
        _, b = corpus.backend_errors(u.utterance_id, u.language)
        gains.append((corpus.base_errors(u.utterance_id).errors - b.errors, -i))
    chosen = {-neg_i for _, neg_i in sorted(gains, reverse=True)[:k]}
    return evaluate_decisions(corpus, _fixed(corpus, [i in chosen for i in range(n)]),
                              "oracle", truth)


def sweep(corpus: EvaluationCorpus, config: EngineConfig,
          probability_floors: Sequence[float], entropy_ceilings: Sequence[float]) -> list[dict]:
    """Invocation rate and WER over a grid of fusion thresholds."""
    truth = ground_truth(corpus)
    rows = []
    for p in probability_floors:
        for e in entropy_ceilings:
            cfg = config.with_thresholds(probability_floor=p, entropy_ceiling=e)
            r = evaluate_system(corpus, cfg, "sima", truth)
            rows.append({"probability_floor": p, "entropy_ceiling": e,
                         "invocation_rate": r.invocation_rate, "wer": r.wer,
                         "efficiency": r.efficiency})
    return rows


def _fmt(v: float | None, digits: int = 2) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return f"{v:.{digits}f}"


COLUMNS = ("WER", "Rate", "ACC", "F1", "Cost", "Invoke-Errors", "Efficiency")


def _cells(r: EvaluationReport) -> list[str]:
    return [_fmt(r.wer), _fmt(r.invocation_rate), _fmt(r.decision_accuracy), _fmt(r.decision_f1),
            _fmt(r.cost_multiplier), _fmt(r.invoke_error_rate), _fmt(r.efficiency)]


def render_table(reports: Sequence[EvaluationReport], per_language: bool = True) -> str:
    """Plain-text table, one row per system, then per-language rows."""
    header = ["system", "lang", *COLUMNS]
    rows = []
    for r in reports:
        rows.append([r.system, "all", *_cells(r)])
    if per_language:
        for r in reports:
            for lang, sub in r.per_language.items():
                rows.append([r.system, lang, *_cells(sub)])
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    out = [line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    macro = [f"{r.system}: macro efficiency {_fmt(r.efficiency_macro)}, "
             f"pooled {_fmt(r.efficiency)}" for r in reports if r.invocation_rate > 0]
    return "\n".join(out + ([""] + macro if macro else []))


def report_rows(reports: Sequence[EvaluationReport]) -> list[dict]:
    """Flat records for line-delimited output: one per (system, language)."""
    rows = []
    for r in reports:
        rows.append({"language": "all", **r.to_dict(include_languages=False)})
        for lang, sub in r.per_language.items():
            rows.append({"language": lang, **sub.to_dict(include_languages=False)})
    return rows

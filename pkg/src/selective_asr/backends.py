"""ASR backend adapters, the per-language best-backend registry and cost ledger.

Synthetic backends derive their corruption seed from
``sha256(f"{backend_id}/{utterance_id}")``: the first 8 bytes, big-endian,
as an unsigned integer. Same backend and utterance therefore always yield the
same hypothesis, with no global RNG state.

Backend fixture lines look like::

    {"backend_id": "assembly", "kind": "synthetic", "supported_languages": ["de", "en"],
     "cost_per_audio_second": 1.0, "per_language_wer": {"de": 3.91, "en": 5.23},
     "dataset_wer": {"voxpopuli": {"de": 9.1}}}

Remote backends add ``endpoint``, ``auth_env`` (name of the environment
variable holding a bearer token) and ``timeout`` in seconds.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import httpx

from .corpus import Utterance, load_jsonl
from .engine import BaseModelOutput
from .text_metrics import DEFAULT_POLICY, NormalizationPolicy, corrupt_to_target, normalize_text

log = logging.getLogger(__name__)

__all__ = [
    "BackendKind",
    "BackendDescriptor",
    "BackendError",
    "ReplayMissError",
    "ReplayBackend",
    "SyntheticBackend",
    "RemoteBackend",
    "make_backend",
    "load_descriptors",
    "synthetic_seed",
    "NoBackendError",
    "LidTopRegistry",
    "build_lid_top",
    "LedgerEntry",
    "InvocationLedger",
]

DESCRIPTOR_FIELDS = {
    "backend_id", "kind", "supported_languages", "cost_per_audio_second",
    "per_language_wer", "dataset_wer", "endpoint", "auth_env", "timeout",
}


class BackendKind(enum.Enum):
    REPLAY = "replay"
    SYNTHETIC = "synthetic"
    REMOTE = "remote"


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    kind: BackendKind
    supported_languages: frozenset[str]
    cost_per_audio_second: float = 1.0
    per_language_wer: Mapping[str, float] = field(default_factory=dict)
    dataset_wer: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    endpoint: str | None = None
    auth_env: str | None = None
    timeout: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BackendKind(self.kind))
        object.__setattr__(self, "supported_languages", frozenset(self.supported_languages))
        if not self.supported_languages:
            raise ValueError(f"{self.backend_id}: supported_languages must be non-empty")
        if self.cost_per_audio_second < 0:
            raise ValueError(f"{self.backend_id}: cost_per_audio_second must be >= 0")
        if self.kind is BackendKind.REMOTE and not self.endpoint:
            raise ValueError(f"{self.backend_id}: remote backends need an endpoint")

    def wer_for(self, language: str, dataset: str | None = None) -> float | None:
        """Fixture WER for ``language``; dataset-specific values take priority."""
        if dataset is not None and language in self.dataset_wer.get(dataset, {}):
            return float(self.dataset_wer[dataset][language])
        value = self.per_language_wer.get(language)
        return None if value is None else float(value)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BackendDescriptor":
        unknown = set(d) - DESCRIPTOR_FIELDS
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        return cls(
            backend_id=str(d["backend_id"]),
            kind=BackendKind(d["kind"]),
            supported_languages=frozenset(d["supported_languages"]),
            cost_per_audio_second=float(d.get("cost_per_audio_second", 1.0)),
            per_language_wer={k: float(v) for k, v in d.get("per_language_wer", {}).items()},
            dataset_wer={ds: {k: float(v) for k, v in m.items()}
                         for ds, m in d.get("dataset_wer", {}).items()},
            endpoint=d.get("endpoint"),
            auth_env=d.get("auth_env"),
            timeout=float(d.get("timeout", 30.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "backend_id": self.backend_id,
            "kind": self.kind.value,
            "supported_languages": sorted(self.supported_languages),
            "cost_per_audio_second": self.cost_per_audio_second,
            "per_language_wer": dict(self.per_language_wer),
        }
        if self.dataset_wer:
            d["dataset_wer"] = {k: dict(v) for k, v in self.dataset_wer.items()}
        if self.kind is BackendKind.REMOTE:
            d.update(endpoint=self.endpoint, auth_env=self.auth_env, timeout=self.timeout)
        return d


def load_descriptors(path) -> list[BackendDescriptor]:
    descs = load_jsonl(path, BackendDescriptor.from_dict)
    ids = [d.backend_id for d in descs]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ValueError(f"{path}: duplicate backend ids {dupes}")
    return descs


class BackendError(RuntimeError):
    def __init__(self, backend_id: str, message: str, retriable: bool = False):
        self.backend_id = backend_id
        self.retriable = retriable
        super().__init__(f"[{backend_id}] {message}")


class ReplayMissError(KeyError):
    def __init__(self, utterance_id: str):
        self.utterance_id = utterance_id
        super().__init__(f"no replay record for utterance {utterance_id!r}")

    def __str__(self):
        return self.args[0]


def synthetic_seed(backend_id: str, utterance_id: str) -> int:
    digest = hashlib.sha256(f"{backend_id}/{utterance_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class ReplayBackend:
    """Serves stored base-model outputs; read-only after construction."""

    def __init__(self, outputs: Iterable[BaseModelOutput], backend_id: str = "base"):
        self.backend_id = backend_id
        self._outputs: dict[str, BaseModelOutput] = {}
        for o in outputs:
            if o.utterance_id in self._outputs:
                raise ValueError(f"duplicate replay record {o.utterance_id!r}")
            self._outputs[o.utterance_id] = o

    @classmethod
    def load(cls, path, backend_id: str = "base") -> "ReplayBackend":
        return cls(load_jsonl(path, BaseModelOutput.from_dict), backend_id)

    def __contains__(self, utterance_id: str) -> bool:
        return utterance_id in self._outputs

    def __len__(self) -> int:
        return len(self._outputs)

    @property
    def outputs(self) -> Mapping[str, BaseModelOutput]:
        return self._outputs

    def output(self, utterance_id: str) -> BaseModelOutput:
        try:
            return self._outputs[utterance_id]
        except KeyError:
            raise ReplayMissError(utterance_id) from None

    def transcribe(self, utterance: Utterance, language: str | None = None) -> list[str]:
        hyp = self.output(utterance.utterance_id).hypothesis
        return list(hyp) if hyp is not None else []


class SyntheticBackend:
    """Stand-in for a strong ASR model, built by corrupting the reference.

    The target WER is the descriptor's fixture WER for the utterance language
    scaled by ``utterance.difficulty`` and capped at 100. Asking it to decode
    in a language other than the spoken one yields a fully wrong transcript.
    """

    def __init__(self, descriptor: BackendDescriptor, dataset: str | None = None,
                 normalization: NormalizationPolicy = DEFAULT_POLICY):
        if descriptor.kind is not BackendKind.SYNTHETIC:
            raise ValueError(f"{descriptor.backend_id} is not a synthetic backend")
        self.descriptor = descriptor
        self.backend_id = descriptor.backend_id
        self.dataset = dataset
        self.normalization = normalization

    def target_wer(self, utterance: Utterance, language: str) -> float:
        if language != utterance.language:
            return 100.0
        base = self.descriptor.wer_for(language, self.dataset)
        if base is None:
            raise BackendError(self.backend_id, f"no fixture WER for language {language!r}")
        return min(100.0, base * utterance.difficulty)

    def transcribe(self, utterance: Utterance, language: str | None = None) -> list[str]:
        language = language or utterance.language
        if language not in self.descriptor.supported_languages:
            raise BackendError(self.backend_id, f"language {language!r} not supported")
        reference = normalize_text(utterance.text or "", self.normalization)
        if not reference:
            return []
        return corrupt_to_target(reference, self.target_wer(utterance, language),
                                 synthetic_seed(self.backend_id, utterance.utterance_id))


class RemoteBackend:
    """HTTP adapter: POSTs the audio reference and reads back text.

    The response may be plain text or JSON with a ``text`` field.
    """

    def __init__(self, descriptor: BackendDescriptor, client: httpx.Client | None = None,
                 normalization: NormalizationPolicy = DEFAULT_POLICY):
        if descriptor.kind is not BackendKind.REMOTE:
            raise ValueError(f"{descriptor.backend_id} is not a remote backend")
        self.descriptor = descriptor
        self.backend_id = descriptor.backend_id
        self.normalization = normalization
        self._client = client or httpx.Client()

    def _headers(self) -> dict[str, str]:
        env = self.descriptor.auth_env
        token = os.environ.get(env) if env else None
        return {"Authorization": f"Bearer {token}"} if token else {}

    def transcribe(self, utterance: Utterance, language: str | None = None) -> list[str]:
        payload = {
            "utterance_id": utterance.utterance_id,
            "audio": utterance.audio,
            "language": language or utterance.language,
        }
        try:
            resp = self._client.post(self.descriptor.endpoint, json=payload,
                                     headers=self._headers(), timeout=self.descriptor.timeout)
        except httpx.TimeoutException as e:
            raise BackendError(self.backend_id, f"timeout: {e}", retriable=True) from e
        except httpx.HTTPError as e:
            raise BackendError(self.backend_id, f"transport error: {e}", retriable=True) from e
        if resp.status_code >= 400:
            raise BackendError(self.backend_id, f"HTTP {resp.status_code}",
                               retriable=resp.status_code >= 500 or resp.status_code == 429)
        text = resp.text
        if resp.headers.get("content-type", "").startswith("application/json"):
            text = resp.json().get("text", "")
        return normalize_text(text, self.normalization)


def make_backend(descriptor: BackendDescriptor, *, dataset: str | None = None,
                 replay: ReplayBackend | None = None, client: httpx.Client | None = None):
    if descriptor.kind is BackendKind.SYNTHETIC:
        return SyntheticBackend(descriptor, dataset)
    if descriptor.kind is BackendKind.REMOTE:
        return RemoteBackend(descriptor, client)
    if replay is None:
        raise ValueError(f"{descriptor.backend_id}: replay backends need a replay store")
    return replay


class NoBackendError(KeyError):
    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class LidTopRegistry:
    """Per-language lowest-fixture-WER backend for one dataset.

    Assumes the spoken language is known (LID mistakes are not modelled).
    """

    dataset: str
    mapping: Mapping[str, str]
    wers: Mapping[str, float]

    def lookup(self, language: str) -> str:
        try:
            return self.mapping[language]
        except KeyError:
            raise NoBackendError(f"no backend registered for language {language!r} "
                                 f"on dataset {self.dataset!r}") from None

    @property
    def languages(self) -> list[str]:
        return sorted(self.mapping)

    def average_wer(self) -> float:
        return sum(self.wers.values()) / len(self.wers)


def build_lid_top(descriptors: Sequence[BackendDescriptor], dataset: str,
                  languages: Iterable[str] | None = None) -> LidTopRegistry:
    """Pick, per language, the backend with the lowest fixture WER.

    Ties go to the lexicographically smallest backend_id.
    """
    if languages is None:
        languages = {lang for d in descriptors for lang in d.supported_languages
                     if d.wer_for(lang, dataset) is not None}
    mapping, wers, gaps = {}, {}, []
    for lang in sorted(set(languages)):
        candidates = [(d.wer_for(lang, dataset), d.backend_id) for d in descriptors
                      if lang in d.supported_languages and d.wer_for(lang, dataset) is not None]
        if not candidates:
            gaps.append(lang)
            continue
        best_wer, best_id = min(candidates)
        mapping[lang], wers[lang] = best_id, best_wer
    if gaps:
        raise NoBackendError(f"no backend covers language(s) {gaps} on dataset {dataset!r}")
    return LidTopRegistry(dataset, mapping, wers)


@dataclass(frozen=True)
class LedgerEntry:
    utterance_id: str
    backend_id: str
    audio_seconds: float
    cost: float


class InvocationLedger:
    """Append-only record of backend calls and what they cost.

    A lock serializes appends so concurrent producers see one ordered log.
    A repeated (utterance_id, backend_id) pair is rejected with a warning.
    """

    def __init__(self, rates: Mapping[str, float]):
        self.rates = dict(rates)
        self._entries: list[LedgerEntry] = []
        self._seen: set[tuple[str, str]] = set()
        self._lock = threading.Lock()

    @classmethod
    def for_backends(cls, descriptors: Iterable[BackendDescriptor]) -> "InvocationLedger":
        return cls({d.backend_id: d.cost_per_audio_second for d in descriptors})

    def record(self, utterance: Utterance, backend_id: str) -> LedgerEntry | None:
        if backend_id not in self.rates:
            raise KeyError(f"backend {backend_id!r} is not registered with the ledger")
        key = (utterance.utterance_id, backend_id)
        seconds = utterance.billable_seconds
        with self._lock:
            if key in self._seen:
                log.warning("duplicate invocation of %s for %s ignored", backend_id, utterance.utterance_id)
                return None
            entry = LedgerEntry(utterance.utterance_id, backend_id, seconds,
                                seconds * self.rates[backend_id])
            self._seen.add(key)
            self._entries.append(entry)
        return entry

    @property
    def entries(self) -> list[LedgerEntry]:
        with self._lock:
            return list(self._entries)

    def total_cost(self) -> float:
        return sum(e.cost for e in self.entries)

    def totals(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for e in self.entries:
            out[e.backend_id] = out.get(e.backend_id, 0.0) + e.cost
        return out

    def __len__(self) -> int:
        return len(self.entries)

"""Utterance metadata and line-delimited JSON manifests.

Corpus manifest lines look like::

    {"utterance_id": "mls-de-0001", "audio": "de/0001.flac", "language": "de",
     "text": "reference transcript", "duration": 12.4}

``audio`` and ``duration`` are optional. ``difficulty`` (default 1.0) is an
optional knob read only by synthetic backends.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")

CORPUS_FIELDS = {"utterance_id", "audio", "language", "text", "duration", "difficulty"}


class ManifestError(ValueError):
    """A manifest line could not be parsed; carries path and line number."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    language: str
    text: str | None = None
    audio: str | None = None
    duration: float | None = None
    difficulty: float = 1.0

    @property
    def billable_seconds(self) -> float:
        """Audio length used for cost; one unit when the duration is unknown."""
        return 1.0 if self.duration is None else float(self.duration)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Utterance":
        unknown = set(d) - CORPUS_FIELDS
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        for key in ("utterance_id", "language"):
            if not d.get(key):
                raise ValueError(f"missing required field {key!r}")
        return cls(
            utterance_id=str(d["utterance_id"]),
            language=str(d["language"]),
            text=d.get("text"),
            audio=d.get("audio"),
            duration=None if d.get("duration") is None else float(d["duration"]),
            difficulty=float(d.get("difficulty", 1.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(path, lineno, f"invalid JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise ManifestError(path, lineno, "expected a JSON object")
            yield lineno, obj


def load_jsonl(path, parse: Callable[[dict], T]) -> list[T]:
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            out.append(parse(obj))
        except (ValueError, TypeError, KeyError) as e:
            raise ManifestError(path, lineno, str(e)) from None
    return out


def write_jsonl(path, rows: Iterable[dict]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            n += 1
    return n


def load_corpus(path) -> list[Utterance]:
    utts = load_jsonl(path, Utterance.from_dict)
    seen = set()
    for u in utts:
        if u.utterance_id in seen:
            raise ValueError(f"{path}: duplicate utterance_id {u.utterance_id!r}")
        seen.add(u.utterance_id)
    return utts

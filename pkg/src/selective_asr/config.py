"""Engine configuration file (JSON, versioned, strict keys).

Example::

    {
      "schema_version": 1,
      "dataset": "mls",
      "thresholds": {"probability_floor": 0.96, "entropy_ceiling": 0.0015, "level_threshold": "B"},
      "language_overrides": {"pl": {"probability_floor": 0.97, "entropy_ceiling": 0.001,
                                    "level_threshold": "C"}},
      "language_confidence_floor": 0.5,
      "level_bins": {"A": 0.98, "B": 0.96, "C": 0.90, "D": 0.0},
      "interval_policy": {"mode": "specific", "centers_from_lid_top": true, "half_width": 2.5},
      "backends_file": "backends.jsonl",
      "cost_rates": {"assembly": 0.002},
      "corpus_file": "corpus.jsonl",
      "replay_file": "replay.jsonl",
      "seed": 0
    }

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .backends import BackendDescriptor, LidTopRegistry, build_lid_top, load_descriptors
from .confidence import DEFAULT_BINS, FusionThresholds, LevelBins
from .engine import EngineConfig
from .labeling import IntervalPolicy

__all__ = ["SCHEMA_VERSION", "ConfigError", "AppConfig", "load_config", "parse_config"]

SCHEMA_VERSION = 1

TOP_KEYS = {
    "schema_version", "dataset", "thresholds", "language_overrides",
    "language_confidence_floor", "level_bins", "interval_policy", "backends_file",
    "backends", "cost_rates", "corpus_file", "replay_file", "seed",
}
THRESHOLD_KEYS = {"probability_floor", "entropy_ceiling", "level_threshold"}
POLICY_KEYS = {"mode", "no_upper", "yes_lower", "half_width", "centers", "centers_file",
               "centers_from_lid_top"}


class ConfigError(ValueError):
    pass


def _check_keys(obj: Any, allowed: set[str], where: str) -> Mapping[str, Any]:
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    return obj


def _thresholds(obj: Any, where: str, require_all: bool) -> FusionThresholds:
    obj = _check_keys(obj, THRESHOLD_KEYS, where)
    if require_all and set(obj) != THRESHOLD_KEYS:
        raise ConfigError(f"{where}: missing {sorted(THRESHOLD_KEYS - set(obj))}")
    try:
        return FusionThresholds(**obj)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


@dataclass(frozen=True)
class AppConfig:
    engine: EngineConfig = field(default_factory=EngineConfig)
    policy: IntervalPolicy = field(default_factory=IntervalPolicy)
    bins: LevelBins = DEFAULT_BINS
    descriptors: tuple[BackendDescriptor, ...] = ()
    dataset: str = "default"
    seed: int = 0
    corpus_file: Path | None = None
    replay_file: Path | None = None

    @property
    def registry(self) -> LidTopRegistry:
        return build_lid_top(self.descriptors, self.dataset)

    @property
    def rates(self) -> dict[str, float]:
        return {d.backend_id: d.cost_per_audio_second for d in self.descriptors}

    def public_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "dataset": self.dataset,
            "thresholds": self.engine.thresholds.to_dict(),
            "language_overrides": {k: v.to_dict() for k, v in self.engine.overrides.items()},
            "language_confidence_floor": self.engine.language_confidence_floor,
            "level_bins": self.bins.to_dict(),
            "interval_policy": self.policy.to_dict(),
            "backends": sorted(d.backend_id for d in self.descriptors),
        }


def parse_config(raw: Mapping[str, Any], base_dir: Path | str = ".") -> AppConfig:
    base_dir = Path(base_dir)
    raw = _check_keys(raw, TOP_KEYS, "config")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config: schema_version must be {SCHEMA_VERSION}, got {version!r}")

    def path(key):
        return None if raw.get(key) is None else (base_dir / raw[key])

    thresholds = _thresholds(raw.get("thresholds", {}), "thresholds", require_all=False)
    overrides = {lang: _thresholds(t, f"language_overrides.{lang}", require_all=True)
                 for lang, t in _check_keys(raw.get("language_overrides", {}),
                                            set(raw.get("language_overrides", {})),
                                            "language_overrides").items()}
    try:
        engine = EngineConfig(thresholds, overrides, float(raw.get("language_confidence_floor", 0.5)))
        bins = LevelBins(raw["level_bins"]) if "level_bins" in raw else DEFAULT_BINS
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None

    descriptors: list[BackendDescriptor] = []
    if raw.get("backends_file"):
        descriptors += load_descriptors(path("backends_file"))
    for i, d in enumerate(raw.get("backends", [])):
        try:
            descriptors.append(BackendDescriptor.from_dict(d))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"backends[{i}]: {e}") from None
    rates = raw.get("cost_rates", {})
    known = {d.backend_id for d in descriptors}
    if set(rates) - known:
        raise ConfigError(f"cost_rates: unknown backend(s) {sorted(set(rates) - known)}")
    descriptors = [dataclasses.replace(d, cost_per_audio_second=float(rates[d.backend_id]))
                   if d.backend_id in rates else d for d in descriptors]

    dataset = str(raw.get("dataset", "default"))
    p = dict(_check_keys(raw.get("interval_policy", {}), POLICY_KEYS, "interval_policy"))
    centers = dict(p.pop("centers", {}))
    if p.get("centers_file"):
        centers.update(json.loads((base_dir / p.pop("centers_file")).read_text(encoding="utf-8")))
    p.pop("centers_file", None)
    if p.pop("centers_from_lid_top", False):
        centers = {**build_lid_top(descriptors, dataset).wers, **centers}
    try:
        policy = IntervalPolicy(centers=centers, **p)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"interval_policy: {e}") from None
    if policy.mode == "specific" and not policy.centers:
        raise ConfigError("interval_policy: specific mode needs centers")

    return AppConfig(engine=engine, policy=policy, bins=bins, descriptors=tuple(descriptors),
                     dataset=dataset, seed=int(raw.get("seed", 0)),
                     corpus_file=path("corpus_file"), replay_file=path("replay_file"))


def load_config(path) -> AppConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    return parse_config(raw, path.parent)

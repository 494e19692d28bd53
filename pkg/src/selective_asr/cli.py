"""Command line: ``selective-asr {label,evaluate,sweep,serve,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evaluation as ev
from .backends import ReplayBackend, make_backend
from .config import AppConfig, ConfigError, load_config
from .corpus import ManifestError, load_corpus, write_jsonl
from .labeling import (
    DEFAULT_RATIO,
    EmptyClassError,
    IntervalPolicy,
    MissingOutputError,
    UnknownLanguageError,
    balance_manifest,
    build_records,
    format_example,
    TrainingManifest,
)

log = logging.getLogger("selective_asr")


class CliError(Exception):
    """Reported on stderr with exit status 1."""


def _ratio(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        values = ()
    if len(values) != 3 or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError(f"expected three positive numbers a:b:c, got {text!r}")
    return values  # type: ignore[return-value]


def _grid(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            n = int(round((stop - start) / step)) + 1
            return [round(start + i * step, 10) for i in range(n)]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _existing(path: Path | None, what: str) -> Path:
    if path is None:
        raise CliError(f"no {what} given (flag or config file)")
    if not Path(path).exists():
        raise CliError(f"{what} not found: {path}")
    return Path(path)


def _config(args) -> AppConfig:
    if getattr(args, "config", None) is None:
        return AppConfig()
    return load_config(_existing(args.config, "config file"))


def _inputs(args, cfg: AppConfig):
    corpus_path = _existing(getattr(args, "corpus", None) or cfg.corpus_file, "corpus manifest")
    replay_path = _existing(getattr(args, "replay", None) or cfg.replay_file, "replay store")
    return load_corpus(corpus_path), ReplayBackend.load(replay_path)


def _evaluation_corpus(args, cfg: AppConfig) -> ev.EvaluationCorpus:
    utterances, replay = _inputs(args, cfg)
    if not cfg.descriptors:
        raise CliError("config lists no backends")
    backends = {d.backend_id: make_backend(d, dataset=cfg.dataset, replay=replay)
                for d in cfg.descriptors}
    return ev.EvaluationCorpus(utterances, replay, cfg.registry, backends, rates=cfg.rates,
                               policy=cfg.policy, name=cfg.dataset)


def cmd_label(args) -> int:
    cfg = _config(args)
    utterances, replay = _inputs(args, cfg)
    policy = cfg.policy
    if args.policy:
        centers = dict(policy.centers)
        if args.centers:
            centers.update(json.loads(_existing(args.centers, "centers file").read_text()))
        policy = IntervalPolicy(mode=args.policy, no_upper=policy.no_upper,
                                yes_lower=policy.yes_lower, centers=centers,
                                half_width=args.half_width or policy.half_width)
    records = build_records(utterances, replay.outputs, policy, cfg.bins, workers=args.workers)
    out = Path(args.out_dir)
    write_jsonl(out / "labels.jsonl", (r.to_dict() for r in records))
    if args.no_balance:
        manifest = TrainingManifest([format_example(r) for r in records])
    else:
        seed = cfg.seed if args.seed is None else args.seed
        manifest = balance_manifest(records, args.ratio, seed)
    write_jsonl(out / "manifest.jsonl", manifest.to_dicts())
    counts = manifest.counts
    print(f"labelled {len(records)} of {len(utterances)} utterances")
    print("manifest " + " ".join(f"{k}={v}" for k, v in counts.items())
          + f" total={len(manifest.examples)}")
    return 0


def _systems(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in ev.SYSTEMS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown system(s) {bad}; choose from {', '.join(ev.SYSTEMS)}")
    return names


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    corpus = _evaluation_corpus(args, cfg)
    seed = cfg.seed if args.seed is None else args.seed
    truth = ev.ground_truth(corpus)
    reports: dict[str, ev.EvaluationReport] = {}
    order = [s for s in ("base", "sima", "lid-top", "random") if s in args.systems]
    for name in order:
        if name == "base":
            reports[name] = ev.base_system(corpus, truth)
        elif name == "lid-top":
            reports[name] = ev.lid_top_system(corpus, truth)
        elif name == "sima":
            reports[name] = ev.evaluate_system(corpus, cfg.engine, "sima", truth)
        else:
            if args.rate is not None:
                rate = args.rate
            else:
                sima = reports.get("sima") or ev.evaluate_system(corpus, cfg.engine, "sima", truth)
                rate = sima.invocation_rate
            reports[name] = ev.random_invocation_baseline(corpus, rate, seed, truth)
    ordered = [reports[s] for s in args.systems]
    out = Path(args.out_dir)
    write_jsonl(out / "reports.jsonl", ev.report_rows(ordered))
    for r in ordered:
        write_jsonl(out / f"log-{r.system}.jsonl", (vars(e) for e in r.log))
    table = ev.render_table(ordered, per_language=not args.summary_only)
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    corpus = _evaluation_corpus(args, cfg)
    rows = ev.sweep(corpus, cfg.engine, args.p_grid, args.e_grid)
    if args.out:
        write_jsonl(args.out, rows)
    print(f"{'P':>6} {'E':>8} {'rate':>7} {'WER':>6}")
    for r in rows:
        print(f"{r['probability_floor']:6.3f} {r['entropy_ceiling']:8.5f} "
              f"{r['invocation_rate']:7.2f} {r['wer']:6.2f}")
    return 0


def cmd_serve(args) -> int:
    from .service import create_app, serve

    cfg = _config(args)
    utterances, replay = _inputs(args, cfg)
    backends = {d.backend_id: make_backend(d, dataset=cfg.dataset, replay=replay)
                for d in cfg.descriptors}
    serve(create_app(cfg, utterances, replay, backends), args.host, args.port)
    return 0


def cmd_synth(args) -> int:
    from .synthetic import SyntheticSpec, make_corpus

    sc = make_corpus(args.seed, SyntheticSpec(n_utterances=args.n), dataset=args.dataset)
    paths = sc.write(args.out_dir)
    config = {
        "schema_version": 1,
        "dataset": args.dataset,
        "thresholds": {"probability_floor": 0.96, "entropy_ceiling": 0.0015, "level_threshold": "B"},
        "language_confidence_floor": 0.5,
        "backends_file": paths["backends"].name,
        "corpus_file": paths["corpus"].name,
        "replay_file": paths["replay"].name,
        "seed": args.seed,
    }
    (Path(args.out_dir) / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {len(sc.utterances)} utterances to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selective-asr",
                                     description="Selective backend invocation for multilingual ASR.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required, help="engine config JSON")
        p.add_argument("--corpus", type=Path, help="corpus manifest (JSONL)")
        p.add_argument("--replay", type=Path, help="base-model replay store (JSONL)")

    p = sub.add_parser("label", help="build invocation labels and a training manifest")
    common(p)
    p.add_argument("--policy", choices=["agnostic", "specific"])
    p.add_argument("--centers", type=Path, help="JSON map language -> WER center")
    p.add_argument("--half-width", type=float)
    p.add_argument("--ratio", type=_ratio, default=DEFAULT_RATIO, help="No:Yes:Uncertain, default 1:1.5:1.5")
    p.add_argument("--no-balance", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", default="labels")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("evaluate", help="evaluate routing systems and write reports")
    common(p, config_required=True)
    p.add_argument("--systems", type=_systems, default=list(ev.SYSTEMS))
    p.add_argument("--rate", type=float, help="invocation rate for the random system")
    p.add_argument("--rate-from", choices=["sima"], default="sima",
                   help="take the random system's rate from this system (default)")
    p.add_argument("--seed", type=int)
    p.add_argument("--summary-only", action="store_true")
    p.add_argument("--out-dir", default="reports")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="invocation rate / WER over a threshold grid")
    common(p, config_required=True)
    p.add_argument("--p-grid", type=_grid, default=_grid("0.90:0.99:0.01"))
    p.add_argument("--e-grid", type=_grid, default=_grid("0.0005:0.005:0.0005"))
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP router")
    common(p, config_required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="write a synthetic corpus, replay store and config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("-n", type=int, default=2100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", default="mls")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingOutputError as e:
        print(f"error: missing replay records: {', '.join(e.missing)}", file=sys.stderr)
    except ev.ReplayGapError as e:
        print(f"error: {e}", file=sys.stderr)
    except (CliError, ConfigError, ManifestError, EmptyClassError, UnknownLanguageError) as e:
        print(f"error: {e}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())

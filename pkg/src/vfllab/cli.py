"""Command-line front end: a thin shell over :mod:`vfllab.experiments`.

Subcommands::

    vfllab train    --config cfg.json [--out DIR] [--set K=V ...] [--seed N]
    vfllab attack   --config cfg.json --transcripts t.jsonl [--seed N] [--out DIR]
    vfllab sweep    --config cfg.json --axis defense.kdk.epsilon --values 0.25,0.45,0.66
    vfllab report   --report report.json --out DIR [--format csv,svg_plot]
    vfllab validate --config cfg.json [--set K=V ...]

Exit codes: 0 success, 1 config/validation error (the message names the
offending field), 2 runtime failure.  ``VFL_SEED`` supplies the seed list
when neither the config nor ``--seed`` does.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError
from .experiments import (
    attack_from_transcripts,
    config_from_dict,
    config_to_dict,
    emit_report,
    report_from_payload,
    run,
    set_by_path,
    sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfllab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser, *, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
            p.add_argument(
                "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                help="override a config field by dotted path (repeatable)",
            )
            p.add_argument("--seed", type=int, default=None, help="run a single seed")
        p.add_argument("--out", default=None, help="output directory for artifacts")
        level = p.add_mutually_exclusive_group()
        level.add_argument("--quiet", action="store_true", help="suppress the summary")
        level.add_argument("--verbose", action="store_true", help="print per-seed rows")

    common(sub.add_parser("train", help="run the configured experiment"))

    p_attack = sub.add_parser("attack", help="mount the configured attacks on saved transcripts")
    common(p_attack)
    p_attack.add_argument("--transcripts", required=True, help="transcript JSONL from a train run")

    p_sweep = sub.add_parser("sweep", help="fan one config field over a value grid")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, help="dotted config path, e.g. defense.kdk.epsilon")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")

    p_report = sub.add_parser("report", help="re-emit artifacts from a stored report.json")
    common(p_report, config=False)
    p_report.add_argument("--report", required=True, help="path to report.json")
    p_report.add_argument(
        "--format", default="json,csv,svg_plot",
        help="comma-separated subset of json,csv,svg_plot",
    )

    common(sub.add_parser("validate", help="parse the config and echo the resolved form"))
    return parser


def _load_document(args) -> dict:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a JSON object")
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        set_by_path(doc, key, value)
    if args.seed is not None:
        doc["seeds"] = [args.seed]
    elif "seeds" not in doc and os.environ.get("VFL_SEED"):
        try:
            doc["seeds"] = [int(os.environ["VFL_SEED"])]
        except ValueError as exc:
            raise ConfigError("VFL_SEED", f"not an integer: {os.environ['VFL_SEED']!r}") from exc
    return doc


def _print_summary(report, *, verbose: bool) -> None:
    print(f"config {report.config_hash[:12]}  wall {report.wall_clock_s:.1f}s")
    for split, stats in report.aggregates.get("model", {}).items():
        print(
            f"model  {split:<5} top1 median {stats['top1']['median']:.3f} "
            f"(min {stats['top1']['min']:.3f}, max {stats['top1']['max']:.3f})"
        )
    for kind, splits in report.aggregates.get("attacks", {}).items():
        for split, stats in splits.items():
            print(
                f"attack {kind:<7} {split:<5} asr median {stats['asr_top1']['median']:.3f} "
                f"(min {stats['asr_top1']['min']:.3f}, max {stats['asr_top1']['max']:.3f})"
            )
    if verbose:
        for r in report.rows:
            print(
                f"  seed {r.seed} {r.attack} {r.split}: model {r.model_top1:.3f} "
                f"asr {r.asr_top1:.3f}"
            )


def _cmd_train(args) -> int:
    cfg = config_from_dict(_load_document(args))
    report = run(cfg, out_dir=args.out)
    if not args.quiet:
        _print_summary(report, verbose=args.verbose)
    if report.incomplete:
        print(f"run incomplete: {report.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_attack(args) -> int:
    cfg = config_from_dict(_load_document(args))
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    reports = attack_from_transcripts(cfg, args.transcripts, seed, out_dir=args.out)
    if not args.quiet:
        for r in reports:
            print(f"{r.kind} {r.split}: asr top1 {r.top1_asr:.3f} topk {r.topk_asr:.3f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = config_from_dict(_load_document(args))
    values = []
    for chunk in args.values.split(","):
        chunk = chunk.strip()
        if not chunk:
            raise ConfigError("--values", "empty value in list")
        try:
            values.append(json.loads(chunk))
        except json.JSONDecodeError:
            values.append(chunk)
    reports, trend = sweep(cfg, args.axis, values, out_dir=args.out)
    if not args.quiet:
        for row in trend:
            cells = [f"{k}={v}" for k, v in row.items() if k != "axis"]
            print(f"{args.axis}: " + "  ".join(cells))
    if any(r.incomplete for r in reports):
        bad = next(r for r in reports if r.incomplete)
        print(f"sweep incomplete: {bad.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        with open(args.report) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError("report", f"cannot read {args.report}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("report", f"invalid JSON in {args.report}: {exc}") from exc
    report = report_from_payload(payload)
    formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
    for f in formats:
        if f not in ("json", "csv", "svg_plot"):
            raise ConfigError("--format", f"unknown format {f!r}")
    out = args.out if args.out is not None else os.path.dirname(args.report) or "."
    emit_report(report, out, formats=formats)
    if not args.quiet:
        _print_summary(report, verbose=args.verbose)
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = config_from_dict(_load_document(args))
    print(json.dumps(config_to_dict(cfg), sort_keys=True, indent=2))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "train": _cmd_train,
        "attack": _cmd_attack,
        "sweep": _cmd_sweep,
        "report": _cmd_report,
        "validate": _cmd_validate,
    }[args.subcommand]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end for the experiment runner.

Verbs mirror the four experiment kinds plus gen-data. Exit codes: 0 on
success, 2 on configuration problems, 3 when some sweep cells failed but the
run completed. Set MCSPOISON_LOG=INFO (or DEBUG) for progress output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError
from .experiments import (
    KINDS,
    config_to_dict,
    emit_report,
    generate_population_csv,
    load_config,
    resolve_config,
    run_experiment,
)

LOG_ENV_VAR = "MCSPOISON_LOG"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcspoison",
        description="Data-poisoning experiments against crowdsensing worker selection.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (
        ("alpha-sweep", "vary the generator's realism weight"),
        ("poison-sweep", "vary the poison fraction at fixed alpha"),
        ("benchmark", "compare attacks on detectability and damage"),
        ("campaign", "run the worker-selection economy under attack"),
        ("gen-data", "write the synthetic worker population to CSV"),
    ):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", help="JSON config; omitted fields use defaults")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--seed", type=int, help="replace the config's seed list with one seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells (default 1)")
    return parser


def _configure_logging():
    level_name = os.environ.get(LOG_ENV_VAR, "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config, kind=args.verb)
        else:
            cfg = resolve_config({}, kind=args.verb)
        if args.seed is not None:
            doc = config_to_dict(cfg)
            doc["seeds"] = [args.seed]
            cfg = resolve_config(doc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = args.out if args.out else cfg.output_dir

    if args.verb == "gen-data":
        manifest = generate_population_csv(cfg, out_dir)
        print(f"wrote {len(manifest['files'])} files to {out_dir}")
        return 0

    if cfg.kind not in KINDS:
        print(f"config error: kind {cfg.kind!r} not runnable", file=sys.stderr)
        return 2
    if args.jobs is not None and args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return 2

    report = run_experiment(cfg, jobs=args.jobs)
    emit_report(report, out_dir)
    print(
        f"{cfg.kind}: {len(report.raw_rows)} raw rows, "
        f"{len(report.errors)} failed cells -> {out_dir}"
    )
    if report.errors:
        for failure in report.errors:
            print(f"  cell {failure['cell']}: {failure['error']}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

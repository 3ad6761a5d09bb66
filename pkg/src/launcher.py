"""Coverage explorer launcher: single runs, run matrices and summaries.

Usage:
  python src/launcher.py explore --config configs/room.yaml [--seed N] [--planner hfe] [--out results]
  python src/launcher.py matrix --spec configs/matrix.yaml --out results [--workers 4]
  python src/launcher.py summarize --in results
"""

import argparse
import os
import sys

import yaml

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from config import ConfigError, _deep_merge, load_config, parse_overrides  # noqa: E402
from harness import (  # noqa: E402
    PLANNERS,
    build_run_config,
    expand_matrix,
    format_table,
    read_summary,
    run_matrix,
    run_one,
    summarize,
    write_comparison,
    write_summary,
)
from log_config import setup_logging  # noqa: E402


def _cmd_explore(args: argparse.Namespace) -> int:
    overrides = parse_overrides(args.set)
    run_over = {}
    if args.seed is not None:
        run_over["seed"] = args.seed
    if args.planner is not None:
        run_over["planner"] = args.planner
    if run_over:
        overrides = _deep_merge(overrides, {"run": run_over})

    cfg = load_config(args.config, overrides)
    log = setup_logging("explore", cfg)
    config = build_run_config(cfg)
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    if config.world.path is not None:
        config.world.resolve(base_dir)

    log.info("=" * 60)
    log.info("explore  planner=%s  world=%s  seed=%d", config.planner, config.world.label, config.seed)
    log.info("=" * 60)
    record = run_one(config, args.out, base_dir)
    if args.out:
        write_summary(os.path.join(args.out, "summary.csv"), [record])
        log.info("Per-step CSV: %s", record.csv_path)
    log.info("Status %s  coverage %.4f  steps %d", record.status, record.final_coverage, record.steps)
    if record.status == "aborted":
        log.error("Aborted: %s", record.diagnostic)
        return 1
    return 0


def _cmd_matrix(args: argparse.Namespace) -> int:
    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read matrix spec {args.spec}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{args.spec}: {exc}") from exc
    if not isinstance(spec, dict):
        raise ConfigError(f"{args.spec}: top level must be a mapping")

    overrides = parse_overrides(args.set)
    if overrides:
        spec["base"] = _deep_merge(spec.get("base") or {}, overrides)
    log = setup_logging("matrix", spec.get("base") or {})
    configs = expand_matrix(spec)
    records = run_matrix(configs, args.out, workers=args.workers,
                         base_dir=os.path.dirname(os.path.abspath(args.spec)))
    table = summarize(records)
    write_comparison(os.path.join(args.out, "comparison.csv"), table)
    print(format_table(table))

    aborted = [r for r in records if r.status == "aborted"]
    for r in aborted:
        log.error("Run %s aborted: %s", r.run_id, r.diagnostic)
    return 1 if aborted else 0


def _cmd_summarize(args: argparse.Namespace) -> int:
    setup_logging("summarize", {"logging": {"directory": None}})
    table = summarize(read_summary(args.input))
    out_dir = args.input if os.path.isdir(args.input) else os.path.dirname(os.path.abspath(args.input))
    write_comparison(os.path.join(out_dir, "comparison.csv"), table)
    print(format_table(table))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Hierarchical coverage explorer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="Run one coverage mission")
    p.add_argument("--config", default=None, help="Path to config (YAML or key = value)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--planner", choices=PLANNERS, default=None)
    p.add_argument("--out", default=None, help="Output directory for CSVs")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config key")
    p.set_defaults(func=_cmd_explore)

    p = sub.add_parser("matrix", help="Run a planner x environment x seed matrix")
    p.add_argument("--spec", required=True, help="Matrix spec YAML (base + matrix)")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a base config key")
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("summarize", help="Median comparison table from summary.csv")
    p.add_argument("--in", dest="input", required=True, help="Matrix output directory or summary.csv")
    p.set_defaults(func=_cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

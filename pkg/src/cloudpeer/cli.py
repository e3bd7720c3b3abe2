"""Command-line runner: ``cloudpeer --preset fig6 --sweep 5x5,10x10,15x15 --out results``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PRESETS, load_config, load_preset, parse_config
from .errors import ConfigError
from .oracle import oracle_check
from .scenario import EXIT_CONFIG, EXIT_OK, EXIT_STARVED, csv_text, run_scenario, sweep, write_outputs


def parse_sizes(text: str) -> list[tuple[int, int]]:
    sizes = []
    for part in text.split(","):
        part = part.strip().lower()
        try:
            h, v = (int(x) for x in part.split("x"))
        except ValueError:
            raise ConfigError(f"--sweep: {part!r} is not of the form HxV") from None
        if h < 1 or v < 1:
            raise ConfigError(f"--sweep: {part!r} needs positive partitions")
        sizes.append((h, v))
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cloudpeer", description="Run seeded CloudPeer scenarios.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario JSON file")
    src.add_argument("--preset", choices=PRESETS, help="bundled scenario")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="directory for metrics.csv, allocations and trace hash")
    p.add_argument("--trace", action="store_true", help="also write the full message log as TSV")
    p.add_argument("--oracle", action="store_true", help="cross-check scripted queries against a central matcher")
    p.add_argument("--sweep", help="workload sizes, e.g. 5x5,10x10,15x15")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_preset(args.preset) if args.preset else load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.oracle:
            report = oracle_check(cfg)
            print(f"grants_equal={report.equal} distributed={len(report.distributed)} "
                  f"central={len(report.central)} rendezvous_violations={len(report.rendezvous_violations)} "
                  f"overprovisioned={len(report.overprovisioned)} "
                  f"duplicate_notifications={len(report.duplicate_notifications)}")
            return EXIT_OK if report.ok else EXIT_STARVED
        results = sweep(cfg, parse_sizes(args.sweep)) if args.sweep else [run_scenario(cfg)]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    sys.stdout.write(csv_text(results))
    for r in results:
        print(f"# {r.config.name} units={r.units_per_workload} trace_hash={r.trace_hash} "
              f"allocations={len(r.allocations)} waiting={','.join(r.waiting) or '-'}", file=sys.stderr)
    if args.out:
        write_outputs(results, args.out, trace=args.trace)
    starved = [u for r in results for u in r.metrics.starved]
    if starved:
        print(f"starvation: {len(starved)} work unit(s) never completed", file=sys.stderr)
        return EXIT_STARVED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

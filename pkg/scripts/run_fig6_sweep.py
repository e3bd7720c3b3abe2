"""Workload sweep on the fig6 preset; prints the metrics CSV and writes it under results/."""

import argparse
from pathlib import Path

from cloudpeer.cli import parse_sizes
from cloudpeer.config import load_preset
from cloudpeer.scenario import csv_text, sweep, write_outputs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="5x5,10x10,15x15")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path, default=Path("results/fig6"))
    args = ap.parse_args()
    cfg = load_preset("fig6")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    results = sweep(cfg, parse_sizes(args.sizes))
    write_outputs(results, args.out)
    print(csv_text(results), end="")


if __name__ == "__main__":
    main()

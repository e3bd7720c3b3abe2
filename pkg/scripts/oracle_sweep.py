"""Cross-check the cell-based coordinator against the central matcher on random micro-schedules."""

import argparse
import random

from cloudpeer.index import IndexConfig, build_cells
from cloudpeer.oracle import random_schedule, replay


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    bad = 0
    for i in range(args.runs):
        f, dim = rng.randint(1, 4), rng.randint(1, 4)
        sched = random_schedule(rng, dim, rng.randint(0, 8), rng.randint(0, 8))
        rep = replay(sched, cells=build_cells(dim, IndexConfig(f, dim=dim)))
        if not rep.ok:
            bad += 1
            print(f"run {i}: f={f} dim={dim} {rep}")
    print(f"{args.runs} schedules, {bad} discrepancies")


if __name__ == "__main__":
    main()

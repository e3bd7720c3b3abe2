"""Hop counts, ownership errors and per-join message cost for seeded overlays of growing size."""

import random
import statistics

from cloudpeer.overlay import Overlay, OverlayConfig, owner_oracle
from cloudpeer.simnet import Network, Simulator


def main(sizes=(2, 4, 16, 64, 100, 256), keys=1000, seed=1):
    cfg = OverlayConfig()
    print("n\tmean_hops\tmax_hops\towner_errors\tjoin_msgs")
    for n in sizes:
        net = Network(Simulator())
        ov = Overlay(cfg, net, seed=seed)
        ov.build(f"node-{i}" for i in range(n - 1))
        before = len(net.records)
        ov.add("last-joiner")
        join_msgs = len(net.records) - before
        ids = ov.live_ids()
        rng = random.Random(seed)
        hops, errors = [], 0
        for _ in range(keys):
            k = rng.randrange(cfg.space)
            r = ov.route(rng.choice(ids), k)
            hops.append(len(r.hops))
            errors += r.owner != owner_oracle(ids, k)
        print(f"{n}\t{statistics.fmean(hops):.2f}\t{max(hops)}\t{errors}\t{join_msgs}")


if __name__ == "__main__":
    main()

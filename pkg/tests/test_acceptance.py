"""The eight acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (run with ``-s`` to see them).
"""

import itertools
import math
import random
import time

import pytest

from cloudpeer.config import PRESETS, load_preset
from cloudpeer.coordination import DiscoveryQuery, UpdateQuery
from cloudpeer.fabric import QueryTiming
from cloudpeer.index import IndexConfig, Point, Region, build_cells, imap_discovery, imap_update, matches
from cloudpeer.oracle import random_schedule, replay
from cloudpeer.overlay import OverlayConfig, owner_oracle
from cloudpeer.provisioner import ScenarioTrace, compute_metrics
from cloudpeer.scenario import csv_text, run_scenario, sweep

from conftest import make_overlay, random_keys

LATTICE = [i / 16 for i in range(17)]
POINT_LATTICE = LATTICE[:-1]


def report(n, ok, detail):
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def _span(cell_list):
    ks = [c.cell_index[0] for c in cell_list]
    return ks[0], ks[-1]


def _meets(r, p, cells):
    a, b = _span(imap_discovery(r, cells))
    c, d = _span(imap_update(p, cells)[1])
    return a <= d and c <= b


def test_1_rendezvous():
    t0 = time.perf_counter()
    violations = checked = 0
    intervals = [(a, b) for a in LATTICE for b in LATTICE if a <= b]
    for f in range(1, 5):
        # every (region, point) pair on the lattice, dims 1 and 2
        for dim in (1, 2):
            cells = build_cells(dim, IndexConfig(f, dim=dim))
            upd = {p: _span(imap_update(Point(p), cells)[1])
                   for p in itertools.product(POINT_LATTICE, repeat=dim)}
            for box in itertools.product(intervals, repeat=dim):
                r = Region(tuple(b[0] for b in box), tuple(b[1] for b in box))
                a, b = _span(imap_discovery(r, cells))
                for p in itertools.product(*[[x for x in POINT_LATTICE if lo <= x <= hi] for lo, hi in box]):
                    checked += 1
                    c, d = upd[p]
                    if not (a <= d and c <= b):
                        violations += 1
        # dim 3: one representative per (max lower, min upper, min p, max p) class; a region
        # (0, A, 0)-(B, 1, 1) holds p = (lo, hi, lo) exactly when A <= hi and B >= lo
        cells = build_cells(3, IndexConfig(f, dim=3))
        for lo, hi in itertools.combinations_with_replacement(POINT_LATTICE, 2):
            p = Point((lo, hi, lo))
            for a in (x for x in LATTICE if x <= hi):
                for b in (x for x in LATTICE if x >= lo):
                    r = Region((0.0, a, 0.0), (b, 1.0, 1.0))
                    assert matches(r, p)
                    checked += 1
                    violations += not _meets(r, p, cells)
    cells4 = build_cells(4, IndexConfig(3, dim=4))
    rng = random.Random(2024)
    n4 = 0
    while n4 < 10_000:
        lo = [rng.random() for _ in range(4)]
        hi = [rng.uniform(x, 1) for x in lo]
        p = Point(tuple(rng.uniform(a, b) if b < 1 else rng.uniform(a, math.nextafter(1, 0)) for a, b in zip(lo, hi)))
        r = Region(tuple(lo), tuple(hi))
        if not matches(r, p):
            continue
        n4 += 1
        violations += not _meets(r, p, cells4)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 30
    report(1, ok, f"{checked} lattice pairs + {n4} random dim-4 pairs, {violations} violations, {elapsed:.1f}s")
    assert ok


def _routes(n):
    ov = make_overlay(n, seed=n + 1)
    ids = ov.live_ids()
    rng = random.Random(n)
    out = []
    for k in random_keys(1000, 100 + n):
        src = rng.choice(ids)
        r = ov.route(src, k)
        out.append((src, k, r, owner_oracle(ids, k)))
    return out


def test_2_routing_owner_and_hops():
    t0 = time.perf_counter()
    wrong = 0
    mean_hops = None
    for n in (1, 2, 16, 100):
        routes = _routes(n)
        wrong += sum(r.owner != truth for _, _, r, truth in routes)
        if n == 100:
            mean_hops = sum(len(r.hops) for _, _, r, _ in routes) / len(routes)
    bound = math.ceil(math.log(100, 16)) + 2
    elapsed = time.perf_counter() - t0
    ok = wrong == 0 and mean_hops <= bound and elapsed < 30
    report(2, ok, f"owner mismatches {wrong}/4000, mean hops at n=100 {mean_hops:.2f} <= {bound}, {elapsed:.1f}s")
    assert ok


def test_2_routing_convergence_by_phase():
    """Prefix-phase hops strictly improve (shl, -distance); the delivery hop strictly closes distance."""
    cfg = OverlayConfig()
    bad = 0
    for n in (1, 2, 16, 100):
        for src, k, r, _ in _routes(n):
            path = [src] + r.hops
            for a, b in zip(path[:-2], path[1:-1]):
                if (cfg.shl(b, k), -cfg.distance(b, k)) <= (cfg.shl(a, k), -cfg.distance(a, k)):
                    bad += 1
            if r.hops and cfg.distance(path[-1], k) >= cfg.distance(path[-2], k):
                bad += 1
    report(2, bad == 0, f"phase-wise convergence, {bad} offending hops")
    assert bad == 0


def test_2_routing_literal_lexicographic_invariant():
    """Every hop, including the final leaf-set delivery, strictly increases (shl, -distance)."""
    cfg = OverlayConfig()
    bad_routes = impossible = 0
    for n in (1, 2, 16, 100):
        for src, k, r, owner in _routes(n):
            path = [src] + r.hops
            if any((cfg.shl(b, k), -cfg.distance(b, k)) <= (cfg.shl(a, k), -cfg.distance(a, k))
                   for a, b in zip(path, path[1:])):
                bad_routes += 1
                # no path can satisfy it when the source already shares more digits than the owner
                impossible += cfg.shl(src, k) > cfg.shl(owner, k)
    ok = bad_routes == 0
    report(2, ok, f"literal lexicographic check: {bad_routes}/4000 routes violate it at the delivery hop, "
                  f"{impossible} of them from a source sharing a longer prefix than the owner itself")
    assert ok


def test_3_cell_construction():
    cells = build_cells(4, IndexConfig(3, dim=4))
    keys = {c.overlay_key for c in cells}
    ok = len(cells) == 81 and len(keys) == 81
    report(3, ok, f"{len(cells)} cells, {len(keys)} distinct keys")
    assert ok


def test_4_tables56():
    r = run_scenario(load_preset("tables56"))
    grants = [(a.query_id, a.vm_id) for a in r.allocations]
    ok = grants == [("Query 3", "VM 2")] and r.waiting == ["Query 1", "Query 2"]
    report(4, ok, f"grants {grants}, waiting {r.waiting}")
    assert ok


def test_5_no_overprovisioning():
    t0 = time.perf_counter()
    rng = random.Random(5)
    grids = {(f, d): build_cells(d, IndexConfig(f, dim=d)) for f in (1, 2, 3, 4) for d in (1, 2, 3, 4)}
    bad = 0
    runs = 1000
    for i in range(runs):
        f, d = rng.choice(sorted(grids))
        sched = random_schedule(rng, d, rng.randint(0, 8), rng.randint(0, 8))
        if not replay(sched, cells=grids[(f, d)]).ok:
            bad += 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 60
    report(5, ok, f"{runs} micro-schedules, {bad} discrepancies, {elapsed:.1f}s")
    assert ok


def test_6_trend_reproduction():
    t0 = time.perf_counter()
    results = sweep(load_preset("fig6"), [(5, 5), (10, 10), (15, 15)])
    elapsed = time.perf_counter() - t0
    rt = [r.metrics.mean_response_time for r in results]
    cd = [r.metrics.mean_coordination_delay for r in results]
    msgs = [r.metrics.total_messages for r in results]
    populated = all(all(v > 0 for v in r.metrics.message_counts.values()) for r in results)
    single_slot = all(s.slots == 1 for s in results[0].services.values()) and len(results[0].services) == 9
    ok = (rt == sorted(rt) and cd == sorted(cd) and msgs == sorted(msgs) and populated and single_slot
          and elapsed < 60)
    report(6, ok, f"response {rt}, coordination {[round(x, 4) for x in cd]}, messages {msgs}, {elapsed:.1f}s")
    assert ok


@pytest.mark.parametrize("preset", PRESETS)
def test_7_determinism(preset):
    cfg = load_preset(preset)
    a, b = run_scenario(cfg), run_scenario(cfg)
    ok = a.trace_hash == b.trace_hash and csv_text([a]).encode() == csv_text([b]).encode()
    report(7, ok, f"{preset}: trace hash {a.trace_hash[:16]}... stable, CSV identical")
    assert ok


def test_8_coordination_delay_decomposition():
    timing = QueryTiming("scripted", 0.0, placed_time=1.0, grant_time=4.0, notify_time=4.1)
    m = compute_metrics(ScenarioTrace([], {"scripted": timing}, [], {}), [])
    total, mapping, waiting, notify = m.coordination["scripted"]
    exact = max(abs(mapping - 1.0), abs(waiting - 3.0), abs(notify - 0.1)) <= 1e-9
    identity_err = abs(mapping + waiting + notify - total)
    for preset in PRESETS:
        for t, mp, w, nt in run_scenario(load_preset(preset)).metrics.coordination.values():
            identity_err = max(identity_err, abs(mp + w + nt - t))
    ok = exact and identity_err <= 1e-9
    report(8, ok, f"components ({mapping:.9f}, {waiting:.9f}, {notify:.9f}), max |sum - total| {identity_err:.1e}")
    assert ok

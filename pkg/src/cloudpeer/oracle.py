"""Cross-check mode: replay a small schedule through the distributed coordinator and a
centralized single-queue matcher, and compare what each one grants."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Union

from .config import ScenarioConfig
from .coordination import CentralMatcher, Coordinator, DiscoveryQuery, UpdateQuery
from .errors import ConfigError
from .index import CellGrid, Point, Region, imap_discovery, imap_update, matches

Event = Union[DiscoveryQuery, UpdateQuery]

MAX_QUERIES = 8
MAX_UPDATES = 8
MAX_F_MIN = 4


@dataclass
class OracleReport:
    equal: bool
    distributed: list[tuple]
    central: list[tuple]
    rendezvous_violations: list[tuple[str, str]] = field(default_factory=list)
    overprovisioned: list[str] = field(default_factory=list)
    duplicate_notifications: list[tuple] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.equal and not self.rendezvous_violations and not self.overprovisioned
                and not self.duplicate_notifications)


def _event_time(e: Event) -> float:
    return e.submit_time if isinstance(e, DiscoveryQuery) else e.publish_time


def replay(schedule: list[Event], coordinator: Coordinator | None = None, cells: CellGrid | None = None,
           before_each=None) -> OracleReport:
    """Apply ``schedule`` in (time, position) order to both matchers and compare grants."""
    if coordinator is None:
        coordinator = Coordinator(cells)
    cells = coordinator.cells
    central = CentralMatcher()
    ordered = sorted(enumerate(schedule), key=lambda p: (_event_time(p[1]), p[0]))
    for _, ev in ordered:
        if before_each is not None:
            before_each(_event_time(ev))
        if isinstance(ev, DiscoveryQuery):
            coordinator.store_discovery(ev, now=ev.submit_time)
            central.store_discovery(ev, now=ev.submit_time)
        else:
            coordinator.handle_update(ev, now=ev.publish_time)
            central.handle_update(ev, now=ev.publish_time)

    dist = sorted(a.key() for a in coordinator.allocations)
    cent = sorted(a.key() for a in central.allocations)

    queries = [e for e in schedule if isinstance(e, DiscoveryQuery)]
    updates = [e for e in schedule if isinstance(e, UpdateQuery)]
    violations = []
    for q in queries:
        q_cells = {c.cell_index for c in imap_discovery(q.region, cells)}
        for u in updates:
            if matches(q.region, u.point):
                _, region = imap_update(u.point, cells)
                if not q_cells & {c.cell_index for c in region}:
                    violations.append((q.query_id, u.vm_id))

    per_update = Counter()
    for a in coordinator.allocations:
        per_update[(a.vm_id, a.update_time)] += a.units
    over = []
    for u in updates:
        if per_update[(u.vm_id, u.publish_time)] > u.capacity:
            over.append(u.vm_id)
    dupes = [k for k, n in Counter(dist).items() if n > 1]
    return OracleReport(dist == cent, dist, cent, violations, over, dupes)


def random_schedule(rng: random.Random, dim: int, n_queries: int, n_updates: int,
                    lattice: int = 16, horizon: int = 20) -> list[Event]:
    """Random micro-schedule on a coarse lattice so boundary cases come up often."""

    def coord() -> float:
        return rng.randrange(lattice) / lattice

    events: list[Event] = []
    for i in range(n_queries):
        lo, hi = [], []
        for _ in range(dim):
            a, b = sorted((coord(), coord() + rng.choice((0, 1 / lattice, 0.25, 0.5))))
            lo.append(a)
            hi.append(min(b, 1.0))
        events.append(DiscoveryQuery(f"q{i}", Region(tuple(lo), tuple(hi)), float(rng.randrange(horizon)),
                                     reply_to="p", units_requested=rng.choice((1, 1, 2))))
    vms = [f"vm{j}" for j in range(max(1, n_updates - 1))]
    used: set[tuple[str, float]] = set()
    for j in range(n_updates):
        vm = rng.choice(vms)
        # a VM publishes sequentially, so its publish times are distinct
        t = float(rng.randrange(horizon))
        while (vm, t) in used:
            t += 0.5
        used.add((vm, t))
        events.append(UpdateQuery(vm, Point(tuple(coord() for _ in range(dim))),
                                  rng.choice((0, 1, 1, 2, 3)), t))
    rng.shuffle(events)
    return events


def schedule_from_config(cfg: ScenarioConfig) -> list[Event]:
    out: list[Event] = []
    for ev in cfg.scripted:
        if ev.kind == "discovery":
            out.append(DiscoveryQuery(ev.token, cfg.schema.normalize_region(ev.payload), ev.time,
                                      reply_to=ev.source, units_requested=ev.units))
        else:
            out.append(UpdateQuery(ev.token, cfg.schema.normalize(ev.payload), ev.capacity, ev.time))
    return out


def oracle_check(cfg: ScenarioConfig) -> OracleReport:
    """Replay the scripted schedule of a small config over a live overlay-backed coordinator."""
    from .scenario import build_fabric

    schedule = schedule_from_config(cfg)
    n_q = sum(isinstance(e, DiscoveryQuery) for e in schedule)
    n_u = len(schedule) - n_q
    if n_q > MAX_QUERIES or n_u > MAX_UPDATES or cfg.f_min > MAX_F_MIN:
        raise ConfigError(f"oracle mode is limited to {MAX_QUERIES} queries, {MAX_UPDATES} updates "
                          f"and f_min <= {MAX_F_MIN} (got {n_q}, {n_u}, {cfg.f_min})")
    fabric = build_fabric(cfg)
    return replay(schedule, fabric.coordinator, before_each=fabric.sim.run_until)

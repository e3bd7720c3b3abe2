"""Cloud peer matchmaking: rendezvous of discovery and update queries at index cells.

Every operation runs to completion inside a single simulated event.  Discovery queries
are placed at all cells returned by ``imap_discovery``; update queries reach every cell of
their event region, and the first of those cells (the *home* cell) holds the only
authoritative capacity counter for that VM.  Claims from any cell are serialized there,
which is what keeps replicated state from granting the same unit twice.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Protocol

from .errors import DuplicateQuery, InvalidArgument
from .index import CellGrid, IndexCell, Point, Region, imap_discovery, imap_update, matches

CellIndex = tuple[int, ...]


@dataclass(frozen=True)
class DiscoveryQuery:
    query_id: str
    region: Region
    submit_time: float
    reply_to: str = ""
    units_requested: int = 1

    def __post_init__(self):
        if self.units_requested < 1:
            raise InvalidArgument("units_requested must be >= 1")

    @property
    def order(self) -> tuple[float, str]:
        return (self.submit_time, self.query_id)


@dataclass(frozen=True)
class UpdateQuery:
    vm_id: str
    point: Point
    capacity: int
    publish_time: float
    # grants the VM had received when it published; None means "trust capacity as-is"
    acked_grants: int | None = None

    def __post_init__(self):
        if self.capacity < 0:
            raise InvalidArgument("capacity must be >= 0")

    @property
    def order(self) -> tuple[float, str]:
        return (self.publish_time, self.vm_id)


@dataclass(frozen=True)
class Allocation:
    query_id: str
    vm_id: str
    units: int
    grant_time: float
    update_time: float = 0.0

    def key(self) -> tuple:
        return (self.query_id, self.vm_id, self.units, self.update_time)


@dataclass
class StoredUpdate:
    update: UpdateQuery
    home: bool


@dataclass
class CoordinatorCellState:
    cell: IndexCell
    waiting: list[DiscoveryQuery] = field(default_factory=list)
    stored_updates: dict[str, StoredUpdate] = field(default_factory=dict)
    # authoritative remaining capacity for VMs homed here
    counters: dict[str, int] = field(default_factory=dict)

    def enqueue(self, q: DiscoveryQuery) -> None:
        keys = [w.order for w in self.waiting]
        self.waiting.insert(bisect.bisect_right(keys, q.order), q)

    def dequeue(self, query_id: str) -> None:
        self.waiting = [w for w in self.waiting if w.query_id != query_id]


class Transport(Protocol):
    """Message side effects of coordination; each method returns the delay it adds."""

    def cell_message(self, src: CellIndex, dst: CellIndex, category: str) -> float: ...

    def notify(self, q: DiscoveryQuery, alloc: Allocation, home: CellIndex, delay: float) -> None: ...


class NullTransport:
    def cell_message(self, src, dst, category):
        return 0.0

    def notify(self, q, alloc, home, delay):
        pass


class Coordinator:
    def __init__(self, cells: CellGrid, transport: Transport | None = None):
        self.cells = cells
        self.transport = transport if transport is not None else NullTransport()
        self.states: dict[CellIndex, CoordinatorCellState] = {}
        self.queries: dict[str, DiscoveryQuery] = {}
        self.demand: dict[str, int] = {}
        self.placements: dict[str, list[CellIndex]] = {}
        self.vm_home: dict[str, CellIndex] = {}
        self.vm_region: dict[str, list[CellIndex]] = {}
        self.latest: dict[str, UpdateQuery] = {}
        self.granted_total: dict[str, int] = {}
        self.allocations: list[Allocation] = []
        self.seen_ids: set[str] = set()

    def state(self, idx: CellIndex) -> CoordinatorCellState:
        st = self.states.get(idx)
        if st is None:
            st = self.states[idx] = CoordinatorCellState(self.cells.cell_at(idx))
        return st

    # -- claims ------------------------------------------------------------

    def claim(self, home: CellIndex, query_id: str, vm_id: str, units: int, now: float) -> int:
        st = self.states.get(home)
        if st is None or vm_id not in st.counters:
            return 0
        granted = min(units, st.counters[vm_id])
        if granted <= 0:
            return 0
        st.counters[vm_id] -= granted
        self.granted_total[vm_id] = self.granted_total.get(vm_id, 0) + granted
        if st.counters[vm_id] == 0:
            del st.counters[vm_id]
            self._evict(vm_id, notify_from=home)
        return granted

    def _evict(self, vm_id: str, notify_from: CellIndex | None) -> None:
        for idx in self.vm_region.get(vm_id, []):
            st = self.states.get(idx)
            if st is None or vm_id not in st.stored_updates:
                continue
            del st.stored_updates[vm_id]
            if notify_from is not None and idx != notify_from:
                self.transport.cell_message(notify_from, idx, "notification")
        home = self.vm_home.get(vm_id)
        if home is not None and home in self.states:
            self.states[home].counters.pop(vm_id, None)

    def _grant(self, q: DiscoveryQuery, u: UpdateQuery, home: CellIndex, via: CellIndex,
               now: float) -> Allocation | None:
        delay = self.transport.cell_message(via, home, "query_routing") if via != home else 0.0
        got = self.claim(home, q.query_id, u.vm_id, self.demand[q.query_id], now)
        if not got:
            return None
        alloc = Allocation(q.query_id, u.vm_id, got, now, u.publish_time)
        self.allocations.append(alloc)
        self.demand[q.query_id] -= got
        self.transport.notify(q, alloc, home, delay)
        return alloc

    # -- discovery side ---------------------------------------------------------

    def store_discovery(self, q: DiscoveryQuery, now: float | None = None) -> list[Allocation]:
        if q.query_id in self.seen_ids:
            raise DuplicateQuery(f"query id {q.query_id!r} already used")
        now = q.submit_time if now is None else now
        self.seen_ids.add(q.query_id)
        self.queries[q.query_id] = q
        self.demand[q.query_id] = q.units_requested
        cells = [c.cell_index for c in imap_discovery(q.region, self.cells)]

        found: dict[str, tuple[UpdateQuery, CellIndex]] = {}
        for idx in cells:
            st = self.states.get(idx)
            if st is None:
                continue
            for vm_id, stored in st.stored_updates.items():
                if vm_id not in found and matches(q.region, stored.update.point):
                    found[vm_id] = (stored.update, idx)
        grants = []
        for u, via in sorted(found.values(), key=lambda pair: pair[0].order):
            alloc = self._grant(q, u, self.vm_home[u.vm_id], via, now)
            if alloc:
                grants.append(alloc)
            if self.demand[q.query_id] == 0:
                break

        if self.demand[q.query_id] > 0:
            for idx in cells:
                self.state(idx).enqueue(q)
            self.placements[q.query_id] = cells
        else:
            self._retire(q.query_id)
        return grants

    def cancel_discovery(self, query_id: str) -> None:
        for idx in self.placements.pop(query_id, []):
            st = self.states.get(idx)
            if st is not None:
                st.dequeue(query_id)
        self.queries.pop(query_id, None)
        self.demand.pop(query_id, None)

    def _retire(self, query_id: str) -> None:
        self.cancel_discovery(query_id)

    # -- update side ----------------------------------------------------------------

    def handle_update(self, u: UpdateQuery, now: float | None = None) -> list[Allocation]:
        now = u.publish_time if now is None else now
        prev = self.latest.get(u.vm_id)
        if prev is not None and u.publish_time < prev.publish_time:
            return []
        if prev is not None:
            self._evict(u.vm_id, notify_from=None)
        home_cell, region = imap_update(u.point, self.cells)
        home = home_cell.cell_index
        region_idx = [c.cell_index for c in region]
        self.latest[u.vm_id] = u
        self.vm_home[u.vm_id] = home
        self.vm_region[u.vm_id] = region_idx

        capacity = u.capacity
        if u.acked_grants is not None:
            in_flight = self.granted_total.get(u.vm_id, 0) - u.acked_grants
            capacity = max(0, capacity - max(0, in_flight))
        if capacity == 0:
            return []
        self.state(home).counters[u.vm_id] = capacity

        # nominees from every region cell, merged at home in FIFO order
        nominees: dict[str, tuple[DiscoveryQuery, CellIndex]] = {}
        for idx in region_idx:
            st = self.states.get(idx)
            if st is None:
                continue
            for q in st.waiting:
                if q.query_id not in nominees and matches(q.region, u.point):
                    nominees[q.query_id] = (q, idx)
        grants = []
        for q, via in sorted(nominees.values(), key=lambda pair: pair[0].order):
            if u.vm_id not in self.state(home).counters:
                break
            alloc = self._grant(q, u, home, via, now)
            if alloc:
                grants.append(alloc)
                if self.demand[q.query_id] == 0:
                    self._retire(q.query_id)

        if u.vm_id in self.state(home).counters:
            for idx in region_idx:
                self.state(idx).stored_updates[u.vm_id] = StoredUpdate(u, idx == home)
        return grants

    # -- failure handling -----------------------------------------------------------

    def drop_cells(self, lost: set[CellIndex]) -> tuple[list[str], list[str]]:
        """Forget all soft state touching ``lost``; returns (lost query ids, lost vm ids)."""
        lost_q = sorted(qid for qid, cells in self.placements.items() if lost & set(cells))
        lost_vm = sorted(vm for vm, cells in self.vm_region.items()
                         if lost & set(cells) and self._has_residual(vm))
        for qid in lost_q:
            self.cancel_discovery(qid)
        for vm in lost_vm:
            self._evict(vm, notify_from=None)
        for idx in lost:
            self.states.pop(idx, None)
        return lost_q, lost_vm

    def _has_residual(self, vm_id: str) -> bool:
        home = self.vm_home.get(vm_id)
        return home is not None and home in self.states and vm_id in self.states[home].counters

    # -- views ----------------------------------------------------------------------

    def waiting_ids(self) -> list[str]:
        return sorted(self.placements)

    def residual(self, vm_id: str) -> int:
        home = self.vm_home.get(vm_id)
        if home is None or home not in self.states:
            return 0
        return self.states[home].counters.get(vm_id, 0)

    def audit(self) -> list[str]:
        """Structural invariants of the per-cell state."""
        problems = []
        for idx, st in self.states.items():
            orders = [q.order for q in st.waiting]
            if orders != sorted(orders):
                problems.append(f"cell {idx}: waiting list out of FIFO order")
            if len({q.query_id for q in st.waiting}) != len(st.waiting):
                problems.append(f"cell {idx}: duplicate waiting entry")
        for qid, cells in self.placements.items():
            q = self.queries[qid]
            expected = [c.cell_index for c in imap_discovery(q.region, self.cells)]
            if cells != expected:
                problems.append(f"{qid}: placed at {cells}, imap says {expected}")
            for idx in expected:
                if qid not in {w.query_id for w in self.state(idx).waiting}:
                    problems.append(f"{qid}: missing from cell {idx}")
        return problems


class CentralMatcher:
    """Single-queue reference matcher: no cells, no replication, same FIFO rules."""

    def __init__(self):
        self.waiting: list[DiscoveryQuery] = []
        self.demand: dict[str, int] = {}
        self.latest: dict[str, UpdateQuery] = {}
        self.remaining: dict[str, int] = {}
        self.granted_total: dict[str, int] = {}
        self.allocations: list[Allocation] = []

    def _give(self, q: DiscoveryQuery, u: UpdateQuery, now: float) -> None:
        got = min(self.demand[q.query_id], self.remaining[u.vm_id])
        if got <= 0:
            return
        self.remaining[u.vm_id] -= got
        self.demand[q.query_id] -= got
        self.granted_total[u.vm_id] = self.granted_total.get(u.vm_id, 0) + got
        self.allocations.append(Allocation(q.query_id, u.vm_id, got, now, u.publish_time))

    def store_discovery(self, q: DiscoveryQuery, now: float | None = None) -> None:
        now = q.submit_time if now is None else now
        self.demand[q.query_id] = q.units_requested
        live = [self.latest[v] for v in sorted(self.remaining) if self.remaining[v] > 0]
        for u in sorted(live, key=lambda u: u.order):
            if self.demand[q.query_id] == 0:
                break
            if matches(q.region, u.point):
                self._give(q, u, now)
        if self.demand[q.query_id] > 0:
            self.waiting.append(q)
            self.waiting.sort(key=lambda w: w.order)

    def handle_update(self, u: UpdateQuery, now: float | None = None) -> None:
        now = u.publish_time if now is None else now
        prev = self.latest.get(u.vm_id)
        if prev is not None and u.publish_time < prev.publish_time:
            return
        self.latest[u.vm_id] = u
        cap = u.capacity
        if u.acked_grants is not None:
            cap = max(0, cap - max(0, self.granted_total.get(u.vm_id, 0) - u.acked_grants))
        self.remaining[u.vm_id] = cap
        for q in list(self.waiting):
            if self.remaining[u.vm_id] == 0:
                break
            if matches(q.region, u.point):
                self._give(q, u, now)
                if self.demand[q.query_id] == 0:
                    self.waiting.remove(q)

    def cancel_discovery(self, query_id: str) -> None:
        self.waiting = [w for w in self.waiting if w.query_id != query_id]

    def waiting_ids(self) -> list[str]:
        return sorted(w.query_id for w in self.waiting)

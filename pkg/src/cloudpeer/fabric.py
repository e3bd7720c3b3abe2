"""The Cloud peer service: queries routed over the overlay to index cells, coordinated there.

A query submitted at time ``t`` is routed from its entry peer to the owner of every target
cell; placement happens as one event once the slowest route has arrived, which keeps
placement atomic across cells.  Grants produce a notification message from the owner of
the update's home cell to the submitter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .coordination import Allocation, Coordinator, DiscoveryQuery, UpdateQuery
from .errors import RoutingFailure
from .index import CellGrid, imap_discovery, imap_update
from .overlay import NodeId, Overlay, derive_id, owner_oracle
from .simnet import Network, Simulator

CellIndex = tuple[int, ...]


@dataclass
class QueryTiming:
    query_id: str
    submit_time: float
    placed_time: float | None = None
    grant_time: float | None = None
    notify_time: float | None = None
    lost: bool = False

    @property
    def complete(self) -> bool:
        return self.notify_time is not None

    def components(self) -> tuple[float, float, float]:
        """(mapping latency, waiting time, notification delay)."""
        mapping = self.placed_time - self.submit_time
        waiting = self.grant_time - self.placed_time
        notify = self.notify_time - self.grant_time
        return mapping, waiting, notify

    @property
    def coordination_delay(self) -> float:
        return self.notify_time - self.submit_time


@dataclass
class Endpoint:
    """Something outside the overlay (provisioner, management service) that receives messages."""
    name: str
    node_id: NodeId
    on_notify: Callable[[Allocation, float], None] | None = None
    on_lost: Callable[[str], None] | None = None


@dataclass
class FabricLog:
    queries: dict[str, QueryTiming] = field(default_factory=dict)
    allocations: list[Allocation] = field(default_factory=list)
    updates: list[UpdateQuery] = field(default_factory=list)
    events: list[str] = field(default_factory=list)


class CloudPeerFabric:
    def __init__(self, overlay: Overlay, cells: CellGrid, resubmit_timeout: float = 30.0):
        self.overlay = overlay
        self.net: Network = overlay.net
        self.sim: Simulator = overlay.net.sim
        self.cells = cells
        self.coordinator = Coordinator(cells, transport=self)
        self.resubmit_timeout = resubmit_timeout
        self.endpoints: dict[str, Endpoint] = {}
        self.query_owner: dict[str, str] = {}
        self.vm_owner: dict[str, str] = {}
        self.log = FabricLog()
        self.bootstrap_name: str | None = None

    # -- peers -----------------------------------------------------------------

    def add_peer(self, name: str) -> NodeId:
        node_id = self.overlay.id_for(name)
        boot = self.overlay.nearest_live(node_id)
        before = {c.cell_index: self.cell_owner(c.cell_index) for c in self.cells} if boot else {}
        self.overlay.join(boot, node_id, name=name)
        if self.bootstrap_name is None:
            self.bootstrap_name = name
        else:
            src = self.overlay.names.get(self.bootstrap_name) or self.overlay.live_ids()[0]
            self.net.send(src, node_id, "index_init")
        for idx, old in before.items():
            if self.cell_owner(idx) == node_id and self._cell_has_state(idx):
                self.net.send(old, node_id, "maintenance")
        return node_id

    def initialize_index(self) -> None:
        """Route every control point from the bootstrap peer to its owner."""
        src = self.overlay.names[self.bootstrap_name]
        for c in self.cells:
            self.overlay.route(src, c.overlay_key, category="index_init")

    def add_endpoint(self, name: str, on_notify=None, on_lost=None) -> Endpoint:
        ep = Endpoint(name, derive_id(f"endpoint:{name}", self.overlay.cfg), on_notify, on_lost)
        self.endpoints[name] = ep
        return ep

    def cell_owner(self, idx: CellIndex) -> NodeId:
        return owner_oracle(self.overlay.live_ids(), self.cells.cell_at(idx).overlay_key, self.overlay.cfg)

    def _cell_has_state(self, idx: CellIndex) -> bool:
        st = self.coordinator.states.get(idx)
        return st is not None and bool(st.waiting or st.stored_updates or st.counters)

    def entry_node(self, peer: str) -> NodeId:
        node = self.overlay.names.get(peer)
        if node is not None and self.overlay.is_live(node):
            return node
        live = sorted(self.overlay.names.items())
        if not live:
            raise RoutingFailure("no live Cloud peer to submit through")
        return live[0][1]

    def fail_peer(self, name: str) -> None:
        self._depart(name, graceful=False)

    def leave_peer(self, name: str) -> None:
        self._depart(name, graceful=True)

    def _depart(self, name: str, graceful: bool) -> None:
        node = self.overlay.names.get(name)
        if node is None:
            self.net.warn(f"churn: unknown peer {name!r}")
            return
        owned = {c.cell_index for c in self.cells if self.cell_owner(c.cell_index) == node}
        self.overlay.leave_or_fail(node, graceful=graceful)
        if graceful:
            for idx in sorted(owned):
                if self._cell_has_state(idx):
                    self.net.send(node, self.cell_owner(idx), "maintenance")
            self.log.events.append(f"{self.sim.clock:.6f}\tleave\t{name}")
            return
        lost_q, lost_vm = self.coordinator.drop_cells(owned)
        self.log.events.append(f"{self.sim.clock:.6f}\tfail\t{name}\tlost_queries={len(lost_q)}\tlost_residuals={len(lost_vm)}")
        for qid in lost_q:
            self._lost(self.query_owner.get(qid), qid)
        for vm in lost_vm:
            self._lost(self.vm_owner.get(vm), vm)

    def _lost(self, endpoint: str | None, token: str) -> None:
        self.log.events.append(f"{self.sim.clock:.6f}\tlost\t{token}")
        if token in self.log.queries:
            self.log.queries[token].lost = True
        ep = self.endpoints.get(endpoint) if endpoint else None
        if ep is not None and ep.on_lost is not None:
            self.sim.schedule_in(self.resubmit_timeout, ep.on_lost, token, label=f"timeout:{token}")

    # -- query submission ----------------------------------------------------------

    def _route_all(self, src: NodeId, cell_keys: list[CellIndex], t0: float) -> tuple[float, list[NodeId]]:
        arrival = t0
        owners = []
        for idx in cell_keys:
            r = self.overlay.route(src, self.cells.cell_at(idx).overlay_key, now=t0)
            arrival = max(arrival, r.arrival)
            owners.append(r.owner)
        return arrival, owners

    def submit_discovery(self, q: DiscoveryQuery, entry_peer: str) -> None:
        """Route ``q`` to its cells; replies go to the endpoint named by ``q.reply_to``."""
        self.query_owner[q.query_id] = q.reply_to
        self.log.queries[q.query_id] = QueryTiming(q.query_id, self.sim.clock)
        src = self.entry_node(entry_peer)
        cells = [c.cell_index for c in imap_discovery(q.region, self.cells)]
        arrival, owners = self._route_all(src, cells, self.sim.clock)
        self.sim.schedule(arrival, self._place_discovery, q, owners, label=f"place:{q.query_id}")

    def _place_discovery(self, q: DiscoveryQuery, owners: list[NodeId]) -> None:
        if any(not self.overlay.is_live(o) for o in owners):
            self._lost(self.query_owner.get(q.query_id), q.query_id)
            return
        self.log.queries[q.query_id].placed_time = self.sim.clock
        self.coordinator.store_discovery(q, now=self.sim.clock)

    def publish_update(self, u: UpdateQuery, entry_peer: str, endpoint: str,
                       forward_from: str | None = None) -> None:
        self.vm_owner[u.vm_id] = endpoint
        self.log.updates.append(u)
        src = self.entry_node(entry_peer)
        t0 = self.sim.clock
        if forward_from is not None:
            origin = self.entry_node(forward_from)
            if origin != src:
                t0 = self.net.send(origin, src, "query_routing").recv_time
        _, region = imap_update(u.point, self.cells)
        arrival, owners = self._route_all(src, [c.cell_index for c in region], t0)
        self.sim.schedule(arrival, self._place_update, u, owners, label=f"update:{u.vm_id}")

    def _place_update(self, u: UpdateQuery, owners: list[NodeId]) -> None:
        if any(not self.overlay.is_live(o) for o in owners):
            self._lost(self.vm_owner.get(u.vm_id), u.vm_id)
            return
        self.coordinator.handle_update(u, now=self.sim.clock)

    def cancel(self, query_id: str) -> None:
        self.coordinator.cancel_discovery(query_id)

    # -- Transport protocol (called by the coordinator) -----------------------------------

    def cell_message(self, src: CellIndex, dst: CellIndex, category: str) -> float:
        r = self.overlay.route(self.cell_owner(src), self.cells.cell_at(dst).overlay_key,
                               category=category, now=self.sim.clock)
        return r.arrival - self.sim.clock

    def notify(self, q: DiscoveryQuery, alloc: Allocation, home: CellIndex, delay: float) -> None:
        self.log.allocations.append(alloc)
        timing = self.log.queries.get(q.query_id)
        if timing is not None:
            timing.grant_time = self.sim.clock
        ep = self.endpoints.get(q.reply_to)
        dst = ep.node_id if ep is not None else derive_id(f"endpoint:{q.reply_to or 'anon'}", self.overlay.cfg)
        self.net.send(self.cell_owner(home), dst, "notification", self.sim.clock + delay,
                      on_deliver=lambda r, a=alloc: self._delivered(a, r))

    def _delivered(self, alloc: Allocation, rec) -> None:
        timing = self.log.queries.get(alloc.query_id)
        if timing is not None:
            timing.notify_time = rec.recv_time
        ep = self.endpoints.get(self.query_owner.get(alloc.query_id, ""))
        if ep is not None and ep.on_notify is not None:
            ep.on_notify(alloc, rec.recv_time)

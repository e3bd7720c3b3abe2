"""Application provisioners, management services and the scenario metrics.

A provisioner splits an application into ``horizontal x vertical`` independent work units
and submits one discovery query per unit.  A grant notification dispatches the unit to the
granted VM's management service, which runs it for its simulated duration and then
publishes a fresh update query advertising the slot it just freed.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field
from typing import Any, Mapping

from .coordination import Allocation, DiscoveryQuery, UpdateQuery
from .errors import ConfigError, ProtocolViolation
from .fabric import CloudPeerFabric, QueryTiming
from .index import AttributeSchema
from .simnet import CATEGORIES, LatencyModel, MessageRecord

UNIT_STATES = ("pending", "discovered", "executing", "done")

DEFAULT_DEMAND = {"service_type": "Web Hosting", "speed": ">= 2.0", "cores": ">= 1", "location": "*"}


@dataclass(frozen=True)
class DurationModel:
    kind: str = "constant"
    value: float = 1.0
    low: float = 0.5
    high: float = 1.5

    def __post_init__(self):
        if self.kind not in ("constant", "uniform"):
            raise ConfigError(f"unit duration kind {self.kind!r} is not constant/uniform")
        if self.kind == "constant" and self.value <= 0:
            raise ConfigError("unit duration must be positive")
        if self.kind == "uniform" and not 0 < self.low <= self.high:
            raise ConfigError("uniform duration needs 0 < low <= high")

    def sample(self, rng: random.Random) -> float:
        if self.kind == "constant":
            return self.value
        return rng.uniform(self.low, self.high)


@dataclass(frozen=True)
class Workload:
    name: str
    horizontal: int
    vertical: int
    submit_time: float = 0.0
    duration: DurationModel = DurationModel()
    demand: Mapping[str, Any] = field(default_factory=lambda: dict(DEFAULT_DEMAND))

    def __post_init__(self):
        if self.horizontal < 1 or self.vertical < 1:
            raise ConfigError(f"workload {self.name!r}: partitions must be >= 1")

    @property
    def units(self) -> int:
        return self.horizontal * self.vertical


@dataclass
class WorkUnit:
    unit_id: str
    workload: str
    demand: Mapping[str, Any]
    duration: float
    state: str = "pending"
    attempts: int = 0
    query_id: str | None = None
    vm_id: str | None = None
    dispatched_at: float | None = None
    started_at: float | None = None
    finished_at: float | None = None
    output_at: float | None = None
    starved: bool = False

    def advance(self, new_state: str) -> None:
        if UNIT_STATES.index(new_state) != UNIT_STATES.index(self.state) + 1:
            raise ProtocolViolation(f"{self.unit_id}: illegal transition {self.state} -> {new_state}")
        self.state = new_state


def generate_workload(h: int, v: int, model: DurationModel = DurationModel(), seed: int = 0,
                      demand: Mapping[str, Any] | None = None, name: str = "app") -> list[WorkUnit]:
    if h < 1 or v < 1:
        raise ConfigError("partitions must be >= 1")
    rng = random.Random(f"{seed}:{name}")
    demand = dict(DEFAULT_DEMAND if demand is None else demand)
    return [WorkUnit(f"{name}-{i:04d}", name, demand, model.sample(rng)) for i in range(h * v)]


class ManagementService:
    def __init__(self, vm_id: str, attributes: Mapping[str, Any], fabric: CloudPeerFabric,
                 schema: AttributeSchema, peer: str, coordinator_peer: str | None = None,
                 slots: int = 1, app_latency: LatencyModel | None = None):
        if slots < 1:
            raise ConfigError(f"{vm_id}: slots must be >= 1")
        self.vm_id = vm_id
        self.attributes = dict(attributes)
        self.point = schema.normalize(attributes)
        self.fabric = fabric
        self.peer = peer
        self.coordinator_peer = coordinator_peer or peer
        self.slots = slots
        self.app_latency = app_latency or LatencyModel()
        self.executing = 0
        self.received = 0
        self.completed = 0
        self.published = 0
        self.occupancy_log: list[tuple[float, int]] = []
        self.provisioners: dict[str, ApplicationProvisioner] = {}
        fabric.add_endpoint(vm_id, on_lost=lambda token: self.publish())

    def start(self) -> None:
        self.publish()

    def publish(self) -> None:
        u = UpdateQuery(self.vm_id, self.point, self.slots - self.executing, self.fabric.sim.clock,
                        acked_grants=self.received)
        self.published += 1
        self.fabric.publish_update(u, entry_peer=self.coordinator_peer, endpoint=self.vm_id,
                                   forward_from=self.peer)

    def receive(self, unit: WorkUnit, provisioner: ApplicationProvisioner) -> None:
        if self.executing >= self.slots:
            raise ProtocolViolation(f"{self.vm_id}: dispatch of {unit.unit_id} with all {self.slots} slots busy")
        sim = self.fabric.sim
        self.executing += 1
        self.received += 1
        self.occupancy_log.append((sim.clock, self.executing))
        unit.advance("executing")
        unit.started_at = sim.clock
        sim.schedule_in(unit.duration, self._complete, unit, provisioner, label=f"done:{unit.unit_id}")

    def release(self, alloc: Allocation) -> None:
        """A grant the provisioner will not use: acknowledge it and advertise the slot again."""
        self.received += alloc.units
        self.publish()

    def _complete(self, unit: WorkUnit, provisioner: ApplicationProvisioner) -> None:
        sim = self.fabric.sim
        self.executing -= 1
        self.completed += 1
        self.occupancy_log.append((sim.clock, self.executing))
        unit.finished_at = sim.clock
        sim.schedule_in(self.app_latency.sample(), provisioner.on_output, unit, label=f"output:{unit.unit_id}")
        self.publish()


class ApplicationProvisioner:
    def __init__(self, name: str, fabric: CloudPeerFabric, schema: AttributeSchema, entry_peer: str,
                 services: Mapping[str, ManagementService], app_latency: LatencyModel | None = None):
        self.name = name
        self.fabric = fabric
        self.schema = schema
        self.entry_peer = entry_peer
        self.services = services
        self.app_latency = app_latency or LatencyModel()
        self.units: dict[str, WorkUnit] = {}
        self.by_query: dict[str, WorkUnit] = {}
        self.workloads: dict[str, Workload] = {}
        self.foreign_grants: list[Allocation] = []
        fabric.add_endpoint(name, on_notify=self.on_notify, on_lost=self.on_lost)

    def submit(self, workload: Workload, units: list[WorkUnit]) -> None:
        self.workloads[workload.name] = workload
        for u in units:
            self.units[u.unit_id] = u
        self.fabric.sim.schedule(workload.submit_time, self._submit_all, units, label=f"submit:{workload.name}")

    def _submit_all(self, units: list[WorkUnit]) -> None:
        for u in units:
            self._query(u)

    def _query(self, unit: WorkUnit) -> None:
        unit.attempts += 1
        qid = f"{self.name}/{unit.unit_id}" + (f"#r{unit.attempts - 1}" if unit.attempts > 1 else "")
        unit.query_id = qid
        self.by_query[qid] = unit
        region = self.schema.normalize_region(unit.demand)
        q = DiscoveryQuery(qid, region, self.fabric.sim.clock, reply_to=self.name)
        self.fabric.submit_discovery(q, self.entry_peer)

    def on_notify(self, alloc: Allocation, t: float) -> None:
        unit = self.by_query.get(alloc.query_id)
        svc = self.services.get(alloc.vm_id)
        if unit is None or svc is None:
            # nothing to run there: a scripted query without a work unit, or a VM without a
            # management service.  Hand the slot back and, for a real unit, ask again.
            self.foreign_grants.append(alloc)
            if svc is not None:
                self.fabric.sim.schedule(t + self.app_latency.sample(), svc.release, alloc,
                                         label=f"release:{alloc.query_id}")
            if unit is not None:
                self._query(unit)
            return
        unit.advance("discovered")
        unit.vm_id = alloc.vm_id
        unit.dispatched_at = t
        self.fabric.sim.schedule(t + self.app_latency.sample(), svc.receive, unit, self,
                                 label=f"dispatch:{unit.unit_id}")

    def on_lost(self, query_id: str) -> None:
        unit = self.by_query.get(query_id)
        if unit is not None and unit.state == "pending" and unit.query_id == query_id:
            self._query(unit)

    def on_output(self, unit: WorkUnit) -> None:
        unit.advance("done")
        unit.output_at = self.fabric.sim.clock


@dataclass
class ScenarioTrace:
    records: list[MessageRecord]
    queries: dict[str, QueryTiming]
    units: list[WorkUnit]
    workloads: dict[str, Workload]
    drops: int = 0


@dataclass
class ScenarioMetrics:
    response_times: dict[str, float]
    coordination: dict[str, tuple[float, float, float, float]]
    message_counts: dict[str, int]
    allocations: list[Allocation]
    drops: int = 0
    starved: list[str] = field(default_factory=list)
    units: int = 0

    @property
    def partial(self) -> bool:
        return bool(self.starved)

    @property
    def mean_response_time(self) -> float:
        return statistics.fmean(self.response_times.values()) if self.response_times else 0.0

    def _mean(self, i: int) -> float:
        vals = [c[i] for c in self.coordination.values()]
        return statistics.fmean(vals) if vals else 0.0

    @property
    def mean_coordination_delay(self) -> float:
        return self._mean(0)

    @property
    def mean_mapping_latency(self) -> float:
        return self._mean(1)

    @property
    def mean_waiting_time(self) -> float:
        return self._mean(2)

    @property
    def mean_notification_delay(self) -> float:
        return self._mean(3)

    @property
    def total_messages(self) -> int:
        return sum(self.message_counts.values())


def compute_metrics(trace: ScenarioTrace, allocations: list[Allocation]) -> ScenarioMetrics:
    """Response time per workload, coordination delay per granted query, message counts."""
    coordination = {}
    for qid, t in sorted(trace.queries.items()):
        if not t.complete:
            continue
        mapping, waiting, notify = t.components()
        coordination[qid] = (mapping + waiting + notify, mapping, waiting, notify)

    response = {}
    for name, wl in sorted(trace.workloads.items()):
        outs = [u.output_at for u in trace.units if u.workload == name and u.output_at is not None]
        if outs:
            response[name] = max(outs) - wl.submit_time

    counts = dict.fromkeys(CATEGORIES, 0)
    for r in trace.records:
        counts[r.category] += 1
    starved = sorted(u.unit_id for u in trace.units if u.state != "done")
    return ScenarioMetrics(response, coordination, counts, list(allocations), trace.drops,
                           starved, len(trace.units))

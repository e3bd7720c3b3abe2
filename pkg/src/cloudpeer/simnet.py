"""Deterministic discrete-event substrate: clock, latency model, message trace."""

from __future__ import annotations

import hashlib
import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .errors import ConfigError, InvalidArgument

log = logging.getLogger(__name__)

CATEGORIES = ("index_init", "query_routing", "maintenance", "notification")

DELIVERED = "delivered"
FAILED = "failed"
OVERFLOW = "overflow"


@dataclass(order=True)
class SimEvent:
    fire_time: float
    seq: int
    action: Callable[..., Any] = field(compare=False)
    args: tuple = field(default=(), compare=False)
    label: str = field(default="", compare=False)
    cancelled: bool = field(default=False, compare=False)


class Simulator:
    """Min-heap event loop ordered by (fire_time, seq)."""

    def __init__(self, start: float = 0.0):
        self.clock = float(start)
        self._queue: list[SimEvent] = []
        self._seq = itertools.count()
        self.dispatched: list[tuple[float, int, str]] = []

    def schedule(self, fire_time: float, action: Callable[..., Any], *args, label: str = "") -> SimEvent:
        if fire_time < self.clock:
            raise InvalidArgument(f"cannot schedule at {fire_time} before clock {self.clock}")
        ev = SimEvent(float(fire_time), next(self._seq), action, args, label)
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_in(self, delay: float, action: Callable[..., Any], *args, label: str = "") -> SimEvent:
        return self.schedule(self.clock + delay, action, *args, label=label)

    @staticmethod
    def cancel(ev: SimEvent) -> None:
        ev.cancelled = True

    def pending(self) -> int:
        return sum(1 for ev in self._queue if not ev.cancelled)

    def peek_time(self) -> float | None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].fire_time if self._queue else None

    def step(self) -> bool:
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.clock = ev.fire_time
            self.dispatched.append((ev.fire_time, ev.seq, ev.label))
            ev.action(*ev.args)
            return True
        return False

    def run_until(self, t_end: float) -> float:
        """Dispatch every event with fire_time <= t_end, then park the clock at t_end."""
        while True:
            t = self.peek_time()
            if t is None or t > t_end:
                break
            self.step()
        self.clock = max(self.clock, t_end)
        return self.clock

    def run(self, horizon: float = float("inf")) -> float:
        """Drain the queue (bounded by horizon); the clock stays at the last fire time."""
        while True:
            t = self.peek_time()
            if t is None or t > horizon:
                break
            self.step()
        return self.clock


@dataclass
class LatencyModel:
    kind: str = "constant"
    base_latency: float = 0.05
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform-jitter"):
            raise ConfigError(f"unknown latency kind {self.kind!r}")
        if self.base_latency < 0:
            raise ConfigError("base_latency must be >= 0")
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must be in [0, 1)")
        self._rng = random.Random(self.seed)

    def sample(self) -> float:
        if self.kind == "constant":
            return self.base_latency
        lo = self.base_latency * (1 - self.jitter)
        hi = self.base_latency * (1 + self.jitter)
        return self._rng.uniform(lo, hi)

    def fork(self, salt: int) -> LatencyModel:
        return LatencyModel(self.kind, self.base_latency, self.jitter, self.seed * 1_000_003 + salt)


@dataclass
class MessageRecord:
    send_time: float
    recv_time: float
    src: int
    dst: int
    category: str
    size_class: str = "small"
    status: str = DELIVERED

    def tsv(self) -> str:
        return f"{self.send_time:.9f}\t{self.recv_time:.9f}\t{self.src:x}\t{self.dst:x}\t{self.category}"


class Network:
    """Message layer: samples latency, appends MessageRecords and enforces the per-node buffer cap."""

    def __init__(self, sim: Simulator | None = None, latency: LatencyModel | None = None,
                 buffer_cap: int = 1000):
        self.sim = sim if sim is not None else Simulator()
        self.latency = latency if latency is not None else LatencyModel()
        self.buffer_cap = buffer_cap
        self.records: list[MessageRecord] = []
        self.dead: set[int] = set()
        self.occupancy: dict[int, int] = {}
        self.drops = 0
        self.delivered = 0
        self.warnings: list[str] = []

    def is_alive(self, node: int) -> bool:
        return node not in self.dead

    def mark_dead(self, node: int) -> None:
        self.dead.add(node)

    def mark_alive(self, node: int) -> None:
        self.dead.discard(node)

    def warn(self, msg: str) -> None:
        log.warning(msg)
        self.warnings.append(msg)

    def send(self, src: int, dst: int, category: str, send_time: float | None = None,
             on_deliver: Callable[..., Any] | None = None, size_class: str = "small") -> MessageRecord:
        if category not in CATEGORIES:
            raise InvalidArgument(f"unknown message category {category!r}")
        t0 = self.sim.clock if send_time is None else send_time
        lat = self.latency.sample()
        rec = MessageRecord(t0, t0 + lat, src, dst, category, size_class)
        self.records.append(rec)
        if not self.is_alive(dst):
            rec.status = FAILED
            return rec
        if self.occupancy.get(dst, 0) >= self.buffer_cap:
            rec.status = OVERFLOW
            self.drops += 1
            self.warn(f"buffer overflow at node {dst:x}: message dropped at t={t0:.6f}")
            return rec
        self.occupancy[dst] = self.occupancy.get(dst, 0) + 1
        self.sim.schedule(max(rec.recv_time, self.sim.clock), self._deliver, rec, on_deliver,
                          label=f"deliver:{category}")
        return rec

    def _deliver(self, rec: MessageRecord, on_deliver) -> None:
        self.occupancy[rec.dst] -= 1
        self.delivered += 1
        if on_deliver is not None:
            on_deliver(rec)

    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(CATEGORIES, 0)
        for r in self.records:
            out[r.category] += 1
        return out

    def status_counts(self) -> dict[str, int]:
        out = {DELIVERED: 0, FAILED: 0, OVERFLOW: 0}
        for r in self.records:
            out[r.status] += 1
        return out

    def in_flight(self) -> int:
        return sum(self.occupancy.values())


def trace_lines(records: Iterable[MessageRecord], full: bool = False) -> list[str]:
    """One TSV line per record; ``full`` appends size class and delivery status."""
    if full:
        return [f"{r.tsv()}\t{r.size_class}\t{r.status}" for r in records]
    return [r.tsv() for r in records]


def trace_hash(records: Iterable[MessageRecord], extra: Iterable[str] = ()) -> str:
    h = hashlib.sha256()
    for line in trace_lines(records):
        h.update(line.encode())
        h.update(b"\n")
    for line in extra:
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class ChurnAction:
    time: float
    action: str
    node: str


def parse_churn(script: Iterable[dict]) -> list[ChurnAction]:
    """Validate a churn script before the run starts; malformed entries raise ConfigError."""
    out = []
    for i, entry in enumerate(script):
        if not isinstance(entry, dict):
            raise ConfigError(f"churn[{i}]: expected an object")
        try:
            t = float(entry["time"])
            action = str(entry["action"])
            node = str(entry["node"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"churn[{i}]: needs numeric 'time', 'action' and 'node' ({exc})") from None
        if action not in ("join", "leave", "fail"):
            raise ConfigError(f"churn[{i}].action: {action!r} is not join/leave/fail")
        if t < 0:
            raise ConfigError(f"churn[{i}].time: negative")
        out.append(ChurnAction(t, action, node))
    return out


def inject_churn(sim: Simulator, script: Iterable[dict] | Iterable[ChurnAction],
                 handlers: dict[str, Callable[[str], Any]]) -> list[SimEvent]:
    """Schedule churn actions; handlers maps join/leave/fail to callables taking a node name."""
    script = list(script)
    if all(isinstance(a, ChurnAction) for a in script):
        actions = script
    else:
        actions = parse_churn(script)
    return [sim.schedule(a.time, handlers[a.action], a.node, label=f"churn:{a.action}:{a.node}")
            for a in actions]

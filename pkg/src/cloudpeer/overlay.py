"""Pastry-style structured overlay.

Node ids and keys are plain ints in ``[0, 2**id_bits)``; ``OverlayConfig`` carries the
digit arithmetic.  Each ``PastryNode`` keeps a prefix routing table, a leaf set split into
counter-clockwise (``left``) and clockwise (``right``) halves, and a neighborhood set chosen
by a simulated proximity metric.  Routing is performed hop by hop from each node's *own*
state, so the brute-force ``owner_oracle`` is a genuine check on it.

Failures are repaired lazily: a dead leaf or table entry is only noticed when a route
decision touches it, at which point a failed send is recorded and the state is patched.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DuplicateId, InvalidArgument, JoinFailure, RoutingError, RoutingFailure
from .simnet import MessageRecord, Network

NodeId = int
OverlayKey = int


@dataclass(frozen=True)
class OverlayConfig:
    id_bits: int = 160
    bits_per_digit: int = 4
    leaf_set_size: int = 8
    message_buffer_cap: int = 1000

    def __post_init__(self):
        for name in ("id_bits", "bits_per_digit", "leaf_set_size", "message_buffer_cap"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.id_bits % self.bits_per_digit:
            raise InvalidArgument("id_bits must be divisible by bits_per_digit")
        if self.leaf_set_size % 2:
            raise InvalidArgument("leaf_set_size must be even")

    @property
    def base(self) -> int:
        return 1 << self.bits_per_digit

    @property
    def n_digits(self) -> int:
        return self.id_bits // self.bits_per_digit

    @property
    def space(self) -> int:
        return 1 << self.id_bits

    def check(self, value: int) -> int:
        if not 0 <= value < self.space:
            raise InvalidArgument(f"id {value} outside [0, 2^{self.id_bits})")
        return value

    def digit(self, value: int, i: int) -> int:
        shift = self.id_bits - (i + 1) * self.bits_per_digit
        return (value >> shift) & (self.base - 1)

    def digits(self, value: int) -> tuple[int, ...]:
        return tuple(self.digit(value, i) for i in range(self.n_digits))

    def from_digits(self, digits: Sequence[int]) -> int:
        v = 0
        for d in digits:
            v = (v << self.bits_per_digit) | d
        return v

    def shl(self, a: int, b: int) -> int:
        """Length of the shared digit prefix."""
        x = a ^ b
        if x == 0:
            return self.n_digits
        return (self.id_bits - x.bit_length()) // self.bits_per_digit

    def distance(self, a: int, b: int) -> int:
        d = abs(a - b)
        return min(d, self.space - d)

    def cw(self, a: int, b: int) -> int:
        """Clockwise distance from a to b."""
        return (b - a) % self.space


def derive_id(name: bytes | str, cfg: OverlayConfig = OverlayConfig()) -> NodeId:
    """SHA-1 of ``name`` truncated to ``cfg.id_bits`` (SHAKE-128 when more than 160 bits are asked for)."""
    if isinstance(name, str):
        name = name.encode()
    if not name:
        raise InvalidArgument("cannot derive an id from an empty name")
    if cfg.id_bits <= 160:
        v = int.from_bytes(hashlib.sha1(name).digest(), "big")
        return v >> (160 - cfg.id_bits)
    nbytes = math.ceil(cfg.id_bits / 8)
    v = int.from_bytes(hashlib.shake_128(name).digest(nbytes), "big")
    return v >> (nbytes * 8 - cfg.id_bits)


def owner_oracle(ids: Iterable[int], key: int, cfg: OverlayConfig = OverlayConfig()) -> NodeId:
    """Brute-force owner: minimum circular distance, ties to the numerically smaller id."""
    ids = list(ids)
    if not ids:
        raise InvalidArgument("owner_oracle needs at least one id")
    return min(ids, key=lambda i: (cfg.distance(i, key), i))


def leaf_oracle(ids: Iterable[int], node: int, cfg: OverlayConfig) -> tuple[list[int], list[int]]:
    """True (left, right) leaf halves of ``node`` among ``ids``, nearest first."""
    others = [i for i in set(ids) if i != node]
    half = cfg.leaf_set_size // 2
    left = sorted(others, key=lambda i: cfg.cw(i, node))[:half]
    right = sorted(others, key=lambda i: cfg.cw(node, i))[:half]
    return left, right


@dataclass
class PastryNode:
    node_id: NodeId
    name: str
    coord: tuple[float, float]
    table: list[list[NodeId | None]]
    left: list[NodeId] = field(default_factory=list)
    right: list[NodeId] = field(default_factory=list)
    neighborhood: list[NodeId] = field(default_factory=list)

    def leaves(self) -> list[NodeId]:
        seen = []
        for x in self.left + self.right:
            if x not in seen:
                seen.append(x)
        return seen

    def table_entries(self) -> list[NodeId]:
        return [e for row in self.table for e in row if e is not None]

    def known(self) -> list[NodeId]:
        out: list[NodeId] = []
        for x in self.leaves() + self.table_entries() + self.neighborhood:
            if x not in out:
                out.append(x)
        return out


@dataclass
class Route:
    owner: NodeId
    hops: list[NodeId]
    records: list[MessageRecord]
    arrival: float


class Overlay:
    def __init__(self, cfg: OverlayConfig = OverlayConfig(), net: Network | None = None, seed: int = 0):
        self.cfg = cfg
        self.net = net if net is not None else Network(buffer_cap=cfg.message_buffer_cap)
        self.seed = seed
        self.nodes: dict[NodeId, PastryNode] = {}
        self.names: dict[str, NodeId] = {}

    # -- membership -------------------------------------------------------

    def live_ids(self) -> list[NodeId]:
        return sorted(self.nodes)

    def is_live(self, node: NodeId) -> bool:
        return node in self.nodes and self.net.is_alive(node)

    def id_for(self, name: str) -> NodeId:
        return derive_id(name, self.cfg)

    def _coord(self, node_id: NodeId) -> tuple[float, float]:
        rng = random.Random(f"{self.seed}:{node_id:x}")
        return (rng.random(), rng.random())

    def proximity(self, a: NodeId, b: NodeId) -> float:
        (ax, ay), (bx, by) = self._coord(a), self._coord(b)
        return math.hypot(ax - bx, ay - by)

    def _new_node(self, node_id: NodeId, name: str) -> PastryNode:
        table = [[None] * self.cfg.base for _ in range(self.cfg.n_digits)]
        return PastryNode(node_id, name, self._coord(node_id), table)

    def nearest_live(self, node_id: NodeId) -> NodeId | None:
        if not self.nodes:
            return None
        return min(self.nodes, key=lambda n: (self.proximity(node_id, n), n))

    def add(self, name: str, now: float | None = None) -> NodeId:
        """Join a named peer through its proximally nearest live node."""
        node_id = self.id_for(name)
        self.join(self.nearest_live(node_id), node_id, name=name, now=now)
        return node_id

    def build(self, names: Iterable[str], now: float | None = None) -> list[NodeId]:
        return [self.add(n, now=now) for n in names]

    def join(self, bootstrap: NodeId | None, joiner: NodeId, *, name: str = "",
             now: float | None = None) -> list[MessageRecord]:
        cfg = self.cfg
        cfg.check(joiner)
        if joiner in self.nodes:
            raise DuplicateId(f"node {joiner:x} already present")
        t = self.net.sim.clock if now is None else now
        node = self._new_node(joiner, name or f"{joiner:x}")
        records: list[MessageRecord] = []
        if not self.nodes:
            self._admit(node)
            return records
        if bootstrap is None or not self.is_live(bootstrap):
            raise JoinFailure(f"bootstrap {bootstrap!r} is not a live node")

        route = self.route(bootstrap, joiner, category="maintenance", now=t)
        records += route.records
        path = [bootstrap] + route.hops
        t = route.arrival
        candidates: list[NodeId] = []
        for p in path:
            rec = self.net.send(p, joiner, "maintenance", t)
            records.append(rec)
            pn = self.nodes[p]
            for x in [p] + pn.leaves() + pn.table_entries():
                if x not in candidates and x != joiner:
                    candidates.append(x)
        for x in self.nodes[bootstrap].neighborhood:
            if x not in candidates:
                candidates.append(x)
        t = max(r.recv_time for r in records)

        self._set_leaves(node, candidates)
        for c in candidates:
            self._consider(node, c)
        self._set_neighborhood(node, candidates)
        self._admit(node)

        # announce to everything the joiner now knows; dead targets are pruned on the way
        for x in node.known():
            rec = self.net.send(joiner, x, "maintenance", t)
            records.append(rec)
            if not self.is_live(x):
                self._forget(node, x)
                continue
            other = self.nodes[x]
            self._set_leaves(other, other.leaves() + [joiner])
            self._consider(other, joiner)
            self._set_neighborhood(other, other.neighborhood + [joiner])
        if any(not self.is_live(x) for x in node.leaves()) or self._leaves_short(node):
            self._repair_leaves(node, t, records)
        return records

    def _admit(self, node: PastryNode) -> None:
        self.nodes[node.node_id] = node
        self.names[node.name] = node.node_id
        self.net.mark_alive(node.node_id)

    def leave_or_fail(self, node_id: NodeId, graceful: bool, now: float | None = None) -> list[MessageRecord]:
        if node_id not in self.nodes:
            self.net.warn(f"leave_or_fail: unknown node {node_id:x}, ignored")
            return []
        t = self.net.sim.clock if now is None else now
        node = self.nodes.pop(node_id)
        self.names.pop(node.name, None)
        self.net.mark_dead(node_id)
        records: list[MessageRecord] = []
        if graceful:
            handoff = node.leaves()
            for x in handoff:
                rec = self.net.send(node_id, x, "maintenance", t)
                records.append(rec)
                if not self.is_live(x):
                    continue
                other = self.nodes[x]
                self._forget(other, node_id)
                self._set_leaves(other, other.leaves() + [h for h in handoff if h != x])
        return records

    # -- state maintenance --------------------------------------------------

    def _leaves_short(self, node: PastryNode) -> bool:
        half = self.cfg.leaf_set_size // 2
        return (len(node.left) < half or len(node.right) < half) and len(self.nodes) - 1 > len(node.leaves())

    def _set_leaves(self, node: PastryNode, candidates: Iterable[NodeId]) -> None:
        cands = sorted({c for c in candidates if c != node.node_id})
        half = self.cfg.leaf_set_size // 2
        node.left = sorted(cands, key=lambda c: (self.cfg.cw(c, node.node_id), c))[:half]
        node.right = sorted(cands, key=lambda c: (self.cfg.cw(node.node_id, c), c))[:half]

    def _set_neighborhood(self, node: PastryNode, candidates: Iterable[NodeId]) -> None:
        cands = sorted({c for c in candidates if c != node.node_id})
        cands.sort(key=lambda c: (self.proximity(node.node_id, c), c))
        node.neighborhood = cands[: self.cfg.leaf_set_size]

    def _consider(self, node: PastryNode, c: NodeId) -> None:
        if c == node.node_id:
            return
        row = self.cfg.shl(node.node_id, c)
        col = self.cfg.digit(c, row)
        cur = node.table[row][col]
        if cur is None or (cur != c and self.proximity(node.node_id, c) < self.proximity(node.node_id, cur)):
            node.table[row][col] = c

    def _forget(self, node: PastryNode, dead: NodeId) -> None:
        node.left = [x for x in node.left if x != dead]
        node.right = [x for x in node.right if x != dead]
        node.neighborhood = [x for x in node.neighborhood if x != dead]
        row = self.cfg.shl(node.node_id, dead)
        if row < self.cfg.n_digits:
            col = self.cfg.digit(dead, row)
            if node.table[row][col] == dead:
                node.table[row][col] = None

    def _repair_leaves(self, node: PastryNode, t: float, records: list[MessageRecord]) -> None:
        """Rebuild the leaf set by pulling leaf sets from the live extremes of each side."""
        known = {x for x in node.known() if self.is_live(x)}
        self._set_leaves(node, known)
        asked: set[NodeId] = set()
        for _ in range(self.cfg.n_digits + len(self.nodes)):
            extremes = [side[-1] for side in (node.left, node.right) if side]
            todo = [x for x in extremes if x not in asked]
            if not todo:
                break
            for x in todo:
                asked.add(x)
                records.append(self.net.send(node.node_id, x, "maintenance", t))
                records.append(self.net.send(x, node.node_id, "maintenance", t))
                known |= {y for y in self.nodes[x].leaves() if self.is_live(y)}
                known.add(x)
            self._set_leaves(node, known)

    def _repair_entry(self, node: PastryNode, row: int, col: int, t: float,
                      records: list[MessageRecord]) -> None:
        """Ask live peers of the same row for a replacement entry."""
        for x in node.table[row]:
            if x is None or not self.is_live(x):
                continue
            records.append(self.net.send(node.node_id, x, "maintenance", t))
            records.append(self.net.send(x, node.node_id, "maintenance", t))
            cand = self.nodes[x].table[row][col]
            if cand is not None and cand != node.node_id and self.is_live(cand):
                if self.cfg.shl(node.node_id, cand) == row and self.cfg.digit(cand, row) == col:
                    node.table[row][col] = cand
                    return

    # -- routing ---------------------------------------------------------------

    def in_leaf_range(self, node: PastryNode, key: OverlayKey) -> bool:
        half = self.cfg.leaf_set_size // 2
        if len(node.left) < half or len(node.right) < half or set(node.left) & set(node.right):
            return True
        lo, hi = node.left[-1], node.right[-1]
        return self.cfg.cw(lo, key) <= self.cfg.cw(lo, hi)

    def _next_hop(self, cur: NodeId, key: OverlayKey, category: str, t: float,
                  records: list[MessageRecord]) -> NodeId | None:
        cfg = self.cfg
        node = self.nodes[cur]
        for _ in range(4 * (cfg.n_digits + cfg.leaf_set_size + len(self.nodes)) + 8):
            dead = [x for x in node.leaves() if not self.is_live(x)]
            if dead:
                for x in dead:
                    records.append(self.net.send(cur, x, category, t))
                    self._forget(node, x)
                self._repair_leaves(node, t, records)
                continue
            if self.in_leaf_range(node, key):
                best = min([cur] + node.leaves(), key=lambda x: (cfg.distance(x, key), x))
                return None if best == cur else best
            row = cfg.shl(cur, key)
            col = cfg.digit(key, row)
            entry = node.table[row][col]
            if entry is not None:
                if self.is_live(entry):
                    return entry
                records.append(self.net.send(cur, entry, category, t))
                self._forget(node, entry)
                self._repair_entry(node, row, col, t, records)
                continue
            d_cur = cfg.distance(cur, key)
            rare = [x for x in node.known()
                    if cfg.shl(x, key) >= row and cfg.distance(x, key) < d_cur]
            if not rare:
                rare = [x for x in node.known() if cfg.distance(x, key) < d_cur]
            if not rare:
                return None
            pick = min(rare, key=lambda x: (-cfg.shl(x, key), cfg.distance(x, key), x))
            if self.is_live(pick):
                return pick
            records.append(self.net.send(cur, pick, category, t))
            self._forget(node, pick)
        raise RoutingFailure(f"no usable routing state at node {cur:x}")

    def route(self, src: NodeId, key: OverlayKey, category: str = "query_routing",
              now: float | None = None) -> Route:
        self.cfg.check(key)
        if not self.is_live(src):
            raise RoutingError(f"source {src:x} is not live")
        t = self.net.sim.clock if now is None else now
        records: list[MessageRecord] = []
        hops: list[NodeId] = []
        cur = src
        limit = 2 * (self.cfg.n_digits + self.cfg.leaf_set_size)
        while True:
            nxt = self._next_hop(cur, key, category, t, records)
            if nxt is None:
                return Route(cur, hops, records, t)
            rec = self.net.send(cur, nxt, category, t)
            records.append(rec)
            t = rec.recv_time
            hops.append(nxt)
            cur = nxt
            if len(hops) > limit:
                raise RoutingFailure(f"route to {key:x} exceeded {limit} hops")

    # -- audits -----------------------------------------------------------------

    def audit_tables(self) -> list[str]:
        """Row/column prefix property of every routing-table entry."""
        problems = []
        for nid, node in self.nodes.items():
            for r, row in enumerate(node.table):
                for c, e in enumerate(row):
                    if e is None:
                        continue
                    if self.cfg.shl(nid, e) != r or self.cfg.digit(e, r) != c:
                        problems.append(f"{nid:x}: entry {e:x} at ({r},{c}) breaks the prefix rule")
        return problems

    def audit_leaves(self) -> list[str]:
        ids = self.live_ids()
        problems = []
        for nid, node in self.nodes.items():
            left, right = leaf_oracle(ids, nid, self.cfg)
            if node.left != left or node.right != right:
                problems.append(f"{nid:x}: leaf set differs from the true neighbours")
        return problems

    def state_digest(self) -> str:
        h = hashlib.sha256()
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            h.update(repr((nid, n.left, n.right, n.neighborhood, n.table)).encode())
        return h.hexdigest()

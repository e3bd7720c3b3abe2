"""Multi-dimensional attribute index laid over the overlay key space.

The attribute space is normalized to ``[0, 1)^dim`` and cut into ``f_min`` slices per
dimension.  Discovery regions and update points are both anchored on the main diagonal
``{(t, ..., t)}``: a region is stored at the diagonal cells covering
``[min(A, B), max(A, B)]`` with ``A = max(lower)`` and ``B = min(upper)``, and an update
point ``p`` is sent to the diagonal cells covering ``[min(p), max(p)]``.  Whenever
``p`` lies in the region the two segments overlap, so a matching pair always meets in at
least one cell.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import InvalidArgument, SchemaViolation
from .overlay import OverlayConfig, OverlayKey, derive_id

KINDS = ("categorical", "integer", "continuous")
_BELOW_ONE = math.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    values: tuple[str, ...] = ()
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaViolation(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.values:
                raise SchemaViolation(f"{self.name}: categorical domain is empty")
            if len(set(self.values)) != len(self.values):
                raise SchemaViolation(f"{self.name}: duplicate categorical values")
        elif not self.lo < self.hi:
            raise SchemaViolation(f"{self.name}: need lo < hi")
        if self.kind == "integer" and (self.lo != int(self.lo) or self.hi != int(self.hi)):
            raise SchemaViolation(f"{self.name}: integer bounds must be whole numbers")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Dimension:
        kind = d.get("kind", "continuous")
        if kind == "categorical":
            return cls(d["name"], kind, tuple(str(v) for v in d["values"]))
        return cls(d["name"], kind, lo=float(d["lo"]), hi=float(d["hi"]))

    def to_dict(self) -> dict:
        if self.kind == "categorical":
            return {"name": self.name, "kind": self.kind, "values": list(self.values)}
        return {"name": self.name, "kind": self.kind, "lo": self.lo, "hi": self.hi}

    # integer dims are binned like categoricals so every value gets a bin midpoint
    @property
    def _bins(self) -> int:
        return len(self.values) if self.kind == "categorical" else int(self.hi - self.lo) + 1

    def coord(self, value: Any) -> float:
        if self.kind == "categorical":
            if str(value) not in self.values:
                raise SchemaViolation(f"{self.name}: {value!r} not in {list(self.values)}")
            return (self.values.index(str(value)) + 0.5) / len(self.values)
        x = self._number(value)
        if self.kind == "integer":
            if x != int(x):
                raise SchemaViolation(f"{self.name}: {value!r} is not an integer")
            return (x - self.lo + 0.5) / self._bins
        return min((x - self.lo) / (self.hi - self.lo), _BELOW_ONE)

    def raw(self, c: float) -> Any:
        if self.kind == "categorical":
            return self.values[min(int(c * self._bins), self._bins - 1)]
        if self.kind == "integer":
            return int(self.lo) + min(int(c * self._bins), self._bins - 1)
        return self.lo + c * (self.hi - self.lo)

    def _number(self, value: Any) -> float:
        try:
            x = float(value)
        except (TypeError, ValueError):
            raise SchemaViolation(f"{self.name}: {value!r} is not numeric") from None
        if not self.lo <= x <= self.hi:
            raise SchemaViolation(f"{self.name}: {x} outside [{self.lo}, {self.hi}]")
        return x

    def interval(self, constraint: Any) -> tuple[float, float]:
        """Closed normalized interval for one raw constraint."""
        if constraint is None or constraint == "*":
            return (0.0, 1.0)
        if isinstance(constraint, Mapping):
            lo = self.interval(f">= {constraint['min']}")[0] if "min" in constraint else 0.0
            hi = self.interval(f"<= {constraint['max']}")[1] if "max" in constraint else 1.0
            return self._checked(lo, hi, constraint)
        if isinstance(constraint, (list, tuple)) and len(constraint) == 2 and self.kind != "categorical":
            return self.interval({"min": constraint[0], "max": constraint[1]})
        op, operand = _split_op(constraint)
        if op in ("=", "=="):
            c = self.coord(operand)
            return (c, c)
        if self.kind == "categorical":
            raise SchemaViolation(f"{self.name}: categorical dimensions only take equality")
        x = self._number(operand)
        if self.kind == "integer":
            if op == ">":
                x = math.floor(x) + 1
            elif op == "<":
                x = math.ceil(x) - 1
            elif op == ">=":
                x = math.ceil(x)
            else:
                x = math.floor(x)
            if not self.lo <= x <= self.hi:
                raise SchemaViolation(f"{self.name}: constraint {constraint!r} is unsatisfiable")
        c = self.coord(x)
        if op in (">", ">="):
            return (c, 1.0)
        return (0.0, c)

    def _checked(self, lo: float, hi: float, constraint: Any) -> tuple[float, float]:
        if lo > hi:
            raise SchemaViolation(f"{self.name}: constraint {constraint!r} is empty")
        return (lo, hi)


def _split_op(constraint: Any) -> tuple[str, Any]:
    if isinstance(constraint, str):
        s = constraint.strip()
        for op in (">=", "<=", "==", ">", "<", "="):
            if s.startswith(op):
                return op, s[len(op):].strip()
        return "=", s
    return "=", constraint


@dataclass(frozen=True)
class Point:
    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        if not self.coords:
            raise InvalidArgument("a point needs at least one coordinate")
        for c in self.coords:
            if not 0.0 <= c < 1.0:
                raise InvalidArgument(f"point coordinate {c} outside [0, 1)")

    def __len__(self):
        return len(self.coords)


@dataclass(frozen=True)
class Region:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(c) for c in self.lower))
        object.__setattr__(self, "upper", tuple(float(c) for c in self.upper))
        if len(self.lower) != len(self.upper) or not self.lower:
            raise InvalidArgument("region bounds must be non-empty and of equal length")
        for lo, hi in zip(self.lower, self.upper):
            if not 0.0 <= lo <= hi <= 1.0:
                raise InvalidArgument(f"bad region bounds [{lo}, {hi}]")

    @classmethod
    def at(cls, p: Point) -> Region:
        return cls(p.coords, p.coords)

    def __len__(self):
        return len(self.lower)


@dataclass(frozen=True)
class AttributeSchema:
    dims: tuple[Dimension, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise SchemaViolation("schema needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise SchemaViolation("duplicate dimension names")

    @classmethod
    def from_dicts(cls, dims: Sequence[Mapping[str, Any]]) -> AttributeSchema:
        return cls(tuple(Dimension.from_dict(d) for d in dims))

    def to_dicts(self) -> list[dict]:
        return [d.to_dict() for d in self.dims]

    @property
    def dim(self) -> int:
        return len(self.dims)

    def _lookup(self, raw: Mapping[str, Any]) -> list[Any]:
        missing = [d.name for d in self.dims if d.name not in raw]
        if missing:
            raise SchemaViolation(f"missing dimension(s): {', '.join(missing)}")
        extra = sorted(set(raw) - {d.name for d in self.dims})
        if extra:
            raise SchemaViolation(f"unknown dimension(s): {', '.join(extra)}")
        return [raw[d.name] for d in self.dims]

    def normalize(self, raw: Mapping[str, Any]) -> Point:
        return Point(tuple(d.coord(v) for d, v in zip(self.dims, self._lookup(raw))))

    def normalize_region(self, raw: Mapping[str, Any]) -> Region:
        bounds = [d.interval(c) for d, c in zip(self.dims, self._lookup(raw))]
        return Region(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    def denormalize(self, p: Point) -> dict[str, Any]:
        return {d.name: d.raw(c) for d, c in zip(self.dims, p.coords)}


@dataclass(frozen=True)
class IndexConfig:
    f_min: int = 3
    f_max: int | None = None
    dim: int = 4

    def __post_init__(self):
        if self.f_min < 1 or self.dim < 1:
            raise InvalidArgument("f_min and dim must be >= 1")
        if self.f_max is not None and self.f_max != self.f_min:
            raise InvalidArgument("subdivision beyond f_min is not supported (f_max must equal f_min)")

    @property
    def n_cells(self) -> int:
        return self.f_min ** self.dim


@dataclass(frozen=True)
class IndexCell:
    cell_index: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    control_point: tuple[float, ...]
    overlay_key: OverlayKey

    @property
    def is_diagonal(self) -> bool:
        return len(set(self.cell_index)) == 1

    def contains(self, coords: Sequence[float]) -> bool:
        return all(lo <= c < hi for lo, c, hi in zip(self.lower, coords, self.upper))


class CellGrid(Sequence):
    """The (f_min)^dim cells in row-major order, addressable by cell index."""

    def __init__(self, cells: list[IndexCell], f_min: int, dim: int):
        self._cells = cells
        self.f_min = f_min
        self.dim = dim
        self._by_index = {c.cell_index: c for c in cells}

    def __getitem__(self, i):
        return self._cells[i]

    def __len__(self):
        return len(self._cells)

    def cell_at(self, index: tuple[int, ...]) -> IndexCell:
        return self._by_index[tuple(index)]

    def diagonal(self, k: int) -> IndexCell:
        return self._by_index[(k,) * self.dim]

    def locate(self, coords: Sequence[float]) -> IndexCell:
        return self.cell_at(tuple(_slice_of(c, self.f_min) for c in coords))


def _slice_of(t: float, f_min: int) -> int:
    return min(int(math.floor(t * f_min)), f_min - 1)


def dhash(control_point: Sequence[float], overlay_cfg: OverlayConfig = OverlayConfig()) -> OverlayKey:
    text = ",".join(f"{c:.12f}" for c in control_point)
    return derive_id(text.encode(), overlay_cfg)


def build_cells(schema: AttributeSchema | int, cfg: IndexConfig,
                overlay_cfg: OverlayConfig = OverlayConfig()) -> CellGrid:
    dim = schema.dim if isinstance(schema, AttributeSchema) else int(schema)
    if dim != cfg.dim:
        raise InvalidArgument(f"schema has {dim} dimensions, index config says {cfg.dim}")
    f = cfg.f_min
    cells = []
    for idx in itertools.product(range(f), repeat=dim):
        lower = tuple(k / f for k in idx)
        upper = tuple((k + 1) / f for k in idx)
        centre = tuple((k + 0.5) / f for k in idx)
        cells.append(IndexCell(idx, lower, upper, centre, dhash(centre, overlay_cfg)))
    return CellGrid(cells, f, dim)


def diagonal_segment_of_region(r: Region) -> tuple[float, float]:
    a, b = max(r.lower), min(r.upper)
    return (min(a, b), max(a, b))


def _diagonal_span(t_lo: float, t_hi: float, cells: CellGrid) -> list[IndexCell]:
    k_lo, k_hi = _slice_of(t_lo, cells.f_min), _slice_of(t_hi, cells.f_min)
    return [cells.diagonal(k) for k in range(k_lo, k_hi + 1)]


def imap_discovery(r: Region, cells: CellGrid) -> list[IndexCell]:
    """Diagonal cells that store a discovery region, ascending."""
    _check_dim(len(r), cells)
    return _diagonal_span(*diagonal_segment_of_region(r), cells)


def imap_update(p: Point, cells: CellGrid) -> tuple[IndexCell, list[IndexCell]]:
    """(home cell, event-region cells) for an update point."""
    _check_dim(len(p), cells)
    region_cells = _diagonal_span(min(p.coords), max(p.coords), cells)
    return region_cells[0], region_cells


def matches(r: Region, p: Point) -> bool:
    if len(r) != len(p):
        raise SchemaViolation(f"region has {len(r)} dims, point has {len(p)}")
    return all(lo <= c <= hi for lo, c, hi in zip(r.lower, p.coords, r.upper))


def naive_cells_intersecting(r: Region, cells: CellGrid) -> list[IndexCell]:
    _check_dim(len(r), cells)
    return [c for c in cells
            if all(lo < cu and hi >= cl for lo, hi, cl, cu in zip(r.lower, r.upper, c.lower, c.upper))]


def _check_dim(n: int, cells: CellGrid) -> None:
    if n != cells.dim:
        raise SchemaViolation(f"expected {cells.dim} dimensions, got {n}")

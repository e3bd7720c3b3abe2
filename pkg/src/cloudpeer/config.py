"""Scenario configuration: a single JSON document, validated with field-path diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import CloudPeerError, ConfigError
from .index import AttributeSchema
from .overlay import OverlayConfig
from .provisioner import DEFAULT_DEMAND, DurationModel, Workload
from .simnet import LatencyModel, parse_churn

PRESETS = ("fig6", "fig6-small", "tables56")


@dataclass
class ServiceSpec:
    vm_id: str
    attributes: dict
    slots: int = 1
    coordinator: str | None = None


@dataclass
class ProvisionerSpec:
    name: str
    entry: str


@dataclass
class WorkloadSpec:
    provisioner: str
    workload: Workload


@dataclass
class ScriptedEvent:
    time: float
    kind: str
    token: str
    payload: dict
    source: str = ""
    units: int = 1
    capacity: int = 0


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    overlay: OverlayConfig
    f_min: int
    schema: AttributeSchema
    latency: dict
    peers: list[str] = field(default_factory=list)
    coordinators: list[str] = field(default_factory=list)
    services: list[ServiceSpec] = field(default_factory=list)
    provisioners: list[ProvisionerSpec] = field(default_factory=list)
    workloads: list[WorkloadSpec] = field(default_factory=list)
    scripted: list[ScriptedEvent] = field(default_factory=list)
    churn: list[dict] = field(default_factory=list)
    resubmit_timeout: float = 30.0
    horizon: float = 1e7
    raw: dict = field(default_factory=dict, repr=False)

    def latency_model(self) -> LatencyModel:
        return LatencyModel(self.latency.get("kind", "constant"),
                            float(self.latency.get("base_latency", 0.05)),
                            float(self.latency.get("jitter", 0.0)), self.seed)

    def peer_names(self) -> list[str]:
        names = list(self.peers) + list(self.coordinators) + [s.vm_id for s in self.services]
        return list(dict.fromkeys(names))

    def with_seed(self, seed: int) -> ScenarioConfig:
        raw = dict(self.raw)
        raw["seed"] = seed
        return parse_config(raw)

    def with_workload_size(self, horizontal: int, vertical: int) -> ScenarioConfig:
        raw = json.loads(json.dumps(self.raw))
        for w in raw.get("workloads", []):
            w["horizontal"], w["vertical"] = horizontal, vertical
        return parse_config(raw)


def _get(d: dict, key: str, path: str, typ=None, default: Any = ...):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}: required field missing")
        return default
    val = d[key]
    if typ is not None and not isinstance(val, typ):
        names = typ.__name__ if isinstance(typ, type) else "/".join(t.__name__ for t in typ)
        raise ConfigError(f"{path}.{key}: expected {names}, got {type(val).__name__}")
    return val


def parse_config(raw: dict) -> ScenarioConfig:
    try:
        return _parse(raw)
    except ConfigError:
        raise
    except CloudPeerError as exc:
        raise ConfigError(str(exc)) from None


def _parse(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("$: config must be a JSON object")
    name = _get(raw, "name", "$", str, "scenario")
    seed = _get(raw, "seed", "$", int)
    ov = _get(raw, "overlay", "$", dict, {})
    known = {f.name for f in fields(OverlayConfig)}
    unknown = sorted(set(ov) - known)
    if unknown:
        raise ConfigError(f"$.overlay: unknown field(s) {', '.join(unknown)}")
    try:
        overlay = OverlayConfig(**{k: _get(ov, k, "$.overlay", int) for k in ov})
    except CloudPeerError as exc:
        raise ConfigError(f"$.overlay: {exc}") from None
    idx = _get(raw, "index", "$", dict)
    f_min = _get(idx, "f_min", "$.index", int)
    if f_min < 1:
        raise ConfigError("$.index.f_min: must be >= 1")
    dims = _get(idx, "schema", "$.index", list)
    try:
        schema = AttributeSchema.from_dicts(dims)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"$.index.schema: {exc}") from None
    latency = _get(raw, "latency", "$", dict, {})

    topo = _get(raw, "topology", "$", dict, {})
    peers = [str(p) for p in _get(raw, "peers", "$", list, [])]
    coordinators, services = [], []
    for i, c in enumerate(_get(topo, "coordinators", "$.topology", list, [])):
        path = f"$.topology.coordinators[{i}]"
        cname = _get(c, "name", path, str)
        coordinators.append(cname)
        for j, s in enumerate(_get(c, "services", path, list, [])):
            spath = f"{path}.services[{j}]"
            attrs = _get(s, "attributes", spath, dict)
            try:
                schema.normalize(attrs)
            except CloudPeerError as exc:
                raise ConfigError(f"{spath}.attributes: {exc}") from None
            slots = _get(s, "slots", spath, int, 1)
            if slots < 1:
                raise ConfigError(f"{spath}.slots: must be >= 1")
            services.append(ServiceSpec(_get(s, "vm_id", spath, str), attrs, slots, cname))
    peer_set = set(peers) | set(coordinators) | {s.vm_id for s in services}
    provisioners = []
    for i, p in enumerate(_get(topo, "provisioners", "$.topology", list, [])):
        path = f"$.topology.provisioners[{i}]"
        entry = _get(p, "entry", path, str)
        if entry not in peer_set:
            raise ConfigError(f"{path}.entry: unknown peer {entry!r}")
        provisioners.append(ProvisionerSpec(_get(p, "name", path, str), entry))
    prov_names = {p.name for p in provisioners}

    workloads = []
    for i, w in enumerate(_get(raw, "workloads", "$", list, [])):
        path = f"$.workloads[{i}]"
        prov = _get(w, "provisioner", path, str)
        if prov not in prov_names:
            raise ConfigError(f"{path}.provisioner: unknown provisioner {prov!r}")
        dur = _get(w, "unit_duration", path, dict, {})
        demand = _get(w, "demand", path, dict, dict(DEFAULT_DEMAND))
        try:
            schema.normalize_region(demand)
            wl = Workload(_get(w, "name", path, str, f"{prov}-app"),
                          _get(w, "horizontal", path, int), _get(w, "vertical", path, int),
                          float(_get(w, "submit_time", path, (int, float), 0.0)),
                          DurationModel(**dur), demand)
        except (CloudPeerError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        workloads.append(WorkloadSpec(prov, wl))

    scripted = []
    for i, e in enumerate(_get(raw, "scripted", "$", list, [])):
        path = f"$.scripted[{i}]"
        kind = _get(e, "type", path, str)
        t = float(_get(e, "time", path, (int, float)))
        try:
            if kind == "discovery":
                prov = _get(e, "provisioner", path, str)
                if prov not in prov_names:
                    raise ConfigError(f"{path}.provisioner: unknown provisioner {prov!r}")
                cons = _get(e, "constraints", path, dict)
                schema.normalize_region(cons)
                scripted.append(ScriptedEvent(t, kind, _get(e, "id", path, str), cons, prov,
                                              units=_get(e, "units", path, int, 1)))
            elif kind == "update":
                attrs = _get(e, "attributes", path, dict)
                schema.normalize(attrs)
                src = _get(e, "peer", path, str, "")
                if src and src not in peer_set:
                    raise ConfigError(f"{path}.peer: unknown peer {src!r}")
                scripted.append(ScriptedEvent(t, kind, _get(e, "vm_id", path, str), attrs, src,
                                              capacity=_get(e, "capacity", path, int)))
            else:
                raise ConfigError(f"{path}.type: {kind!r} is not discovery/update")
        except ConfigError:
            raise
        except CloudPeerError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    churn = _get(raw, "churn", "$", list, [])
    parse_churn(churn)
    if not peer_set:
        raise ConfigError("$: scenario defines no Cloud peers")
    return ScenarioConfig(
        name=name, seed=seed, overlay=overlay, f_min=f_min, schema=schema, latency=latency,
        peers=peers, coordinators=coordinators, services=services, provisioners=provisioners,
        workloads=workloads, scripted=scripted, churn=churn,
        resubmit_timeout=float(_get(raw, "resubmit_timeout", "$", (int, float), 30.0)),
        horizon=float(_get(raw, "horizon", "$", (int, float), 1e7)),
        raw=raw,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(raw)


def preset_raw(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("cloudpeer.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_preset(name: str) -> ScenarioConfig:
    return parse_config(preset_raw(name))

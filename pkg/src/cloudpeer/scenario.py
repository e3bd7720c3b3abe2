"""Assemble a scenario from its config, run it, and write CSV / trace outputs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from .config import ScenarioConfig
from .coordination import Allocation, DiscoveryQuery, UpdateQuery
from .fabric import CloudPeerFabric
from .index import IndexConfig, build_cells
from .overlay import Overlay
from .provisioner import (ApplicationProvisioner, ManagementService, ScenarioMetrics, ScenarioTrace,
                          WorkUnit, compute_metrics, generate_workload)
from .simnet import Network, Simulator, inject_churn, trace_hash, trace_lines

CSV_HEADER = ("scenario,seed,units,response_time_s,mean_coord_delay_s,mean_map_latency_s,mean_wait_s,"
              "mean_notify_s,msgs_index_init,msgs_query_routing,msgs_maintenance,msgs_notification,drops").split(",")

EXIT_OK, EXIT_CONFIG, EXIT_STARVED = 0, 1, 2


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    metrics: ScenarioMetrics
    trace_hash: str
    fabric: CloudPeerFabric
    services: dict[str, ManagementService]
    provisioners: dict[str, ApplicationProvisioner]
    units: list[WorkUnit]

    @property
    def allocations(self) -> list[Allocation]:
        return self.fabric.log.allocations

    @property
    def records(self):
        return self.fabric.net.records

    @property
    def waiting(self) -> list[str]:
        return self.fabric.coordinator.waiting_ids()

    @property
    def exit_code(self) -> int:
        return EXIT_STARVED if self.metrics.starved else EXIT_OK

    @property
    def units_per_workload(self) -> int:
        sizes = {w.workload.units for w in self.config.workloads}
        return max(sizes) if sizes else 0

    def csv_row(self) -> list:
        m = self.metrics
        c = m.message_counts
        return [self.config.name, self.config.seed, self.units_per_workload,
                f"{m.mean_response_time:.6f}", f"{m.mean_coordination_delay:.6f}",
                f"{m.mean_mapping_latency:.6f}", f"{m.mean_waiting_time:.6f}",
                f"{m.mean_notification_delay:.6f}", c["index_init"], c["query_routing"],
                c["maintenance"], c["notification"], m.drops]

    def allocation_lines(self) -> list[str]:
        return [f"{a.grant_time:.9f}\t{a.query_id}\t{a.vm_id}\t{a.units}" for a in self.allocations]


def build_fabric(cfg: ScenarioConfig) -> CloudPeerFabric:
    sim = Simulator()
    net = Network(sim, cfg.latency_model(), buffer_cap=cfg.overlay.message_buffer_cap)
    overlay = Overlay(cfg.overlay, net, seed=cfg.seed)
    cells = build_cells(cfg.schema, IndexConfig(cfg.f_min, dim=cfg.schema.dim), cfg.overlay)
    fabric = CloudPeerFabric(overlay, cells, resubmit_timeout=cfg.resubmit_timeout)
    for name in cfg.peer_names():
        fabric.add_peer(name)
    fabric.initialize_index()
    return fabric


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    fabric = build_fabric(cfg)
    sim = fabric.sim
    app_latency = cfg.latency_model().fork(1)

    services = {}
    for s in cfg.services:
        svc = ManagementService(s.vm_id, s.attributes, fabric, cfg.schema, peer=s.vm_id,
                                coordinator_peer=s.coordinator, slots=s.slots, app_latency=app_latency)
        services[s.vm_id] = svc
        sim.schedule(0.0, svc.start, label=f"start:{s.vm_id}")

    provisioners = {p.name: ApplicationProvisioner(p.name, fabric, cfg.schema, p.entry, services, app_latency)
                    for p in cfg.provisioners}
    units: list[WorkUnit] = []
    for w in cfg.workloads:
        wl = w.workload
        batch = generate_workload(wl.horizontal, wl.vertical, wl.duration, cfg.seed, wl.demand, wl.name)
        provisioners[w.provisioner].submit(wl, batch)
        units += batch

    entries = {p.name: p.entry for p in cfg.provisioners}
    default_peer = cfg.peer_names()[0]
    for ev in cfg.scripted:
        if ev.kind == "discovery":
            q = DiscoveryQuery(ev.token, cfg.schema.normalize_region(ev.payload), ev.time,
                               reply_to=ev.source, units_requested=ev.units)
            sim.schedule(ev.time, fabric.submit_discovery, q, entries[ev.source], label=f"scripted:{ev.token}")
        else:
            u = UpdateQuery(ev.token, cfg.schema.normalize(ev.payload), ev.capacity, ev.time)
            sim.schedule(ev.time, fabric.publish_update, u, ev.source or default_peer, ev.token,
                         label=f"scripted:{ev.token}")

    inject_churn(sim, cfg.churn, {"join": fabric.add_peer, "leave": fabric.leave_peer,
                                  "fail": fabric.fail_peer})
    sim.run(cfg.horizon)

    for u in units:
        u.starved = u.state != "done"
    workloads = {w.workload.name: w.workload for w in cfg.workloads}
    trace = ScenarioTrace(fabric.net.records, fabric.log.queries, units, workloads, fabric.net.drops)
    metrics = compute_metrics(trace, fabric.log.allocations)
    result = ScenarioResult(cfg, metrics, "", fabric, services, provisioners, units)
    result.trace_hash = trace_hash(fabric.net.records, result.allocation_lines())
    return result


def csv_text(results: list[ScenarioResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_outputs(results: list[ScenarioResult], out_dir: str | Path, trace: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "metrics.csv"]
    written[0].write_text(csv_text(results))
    for r in results:
        stem = f"{r.config.name}_u{r.units_per_workload}"
        alloc = out / f"{stem}_allocations.tsv"
        alloc.write_text("".join(line + "\n" for line in r.allocation_lines()))
        h = out / f"{stem}_trace_hash.txt"
        h.write_text(r.trace_hash + "\n")
        written += [alloc, h]
        if trace:
            t = out / f"{stem}_trace.tsv"
            t.write_text("".join(line + "\n" for line in trace_lines(r.records, full=True)))
            written.append(t)
    return written


def sweep(cfg: ScenarioConfig, sizes: list[tuple[int, int]]) -> list[ScenarioResult]:
    if not sizes:
        raise ValueError("sweep needs at least one size")
    return [run_scenario(cfg.with_workload_size(h, v)) for h, v in sizes]

"""Decentralized VM discovery and coordination over a Pastry-style overlay."""

from .config import ScenarioConfig, load_config, load_preset, parse_config
from .coordination import Allocation, CentralMatcher, Coordinator, DiscoveryQuery, UpdateQuery
from .errors import CloudPeerError, ConfigError, SchemaViolation
from .index import AttributeSchema, IndexConfig, Point, Region, build_cells, imap_discovery, imap_update, matches
from .oracle import oracle_check
from .overlay import Overlay, OverlayConfig, derive_id, owner_oracle
from .scenario import ScenarioResult, run_scenario, sweep
from .simnet import LatencyModel, Network, Simulator

__all__ = [
    "Allocation", "AttributeSchema", "CentralMatcher", "CloudPeerError", "ConfigError", "Coordinator",
    "DiscoveryQuery", "IndexConfig", "LatencyModel", "Network", "Overlay", "OverlayConfig", "Point",
    "Region", "ScenarioConfig", "ScenarioResult", "SchemaViolation", "Simulator", "UpdateQuery",
    "build_cells", "derive_id", "imap_discovery", "imap_update", "load_config", "load_preset",
    "matches", "oracle_check", "owner_oracle", "parse_config", "run_scenario", "sweep",
]

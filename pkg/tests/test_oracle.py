import random

import pytest

from cloudpeer.config import load_preset, parse_config, preset_raw
from cloudpeer.errors import ConfigError
from cloudpeer.index import IndexConfig, build_cells
from cloudpeer.oracle import oracle_check, random_schedule, replay


def test_tables56_grants_equal():
    report = oracle_check(load_preset("tables56"))
    assert report.ok
    assert [k[:2] for k in report.distributed] == [("Query 3", "VM 2")]


def test_empty_schedule_trivially_equal():
    report = replay([], cells=build_cells(2, IndexConfig(2, dim=2)))
    assert report.ok and report.distributed == report.central == []


def test_oversized_config_refused():
    raw = preset_raw("tables56")
    raw["index"]["f_min"] = 5
    with pytest.raises(ConfigError):
        oracle_check(parse_config(raw))
    raw = preset_raw("tables56")
    q = raw["scripted"][0]
    raw["scripted"] = [dict(q, id=f"Q{i}", time=i) for i in range(9)]
    with pytest.raises(ConfigError):
        oracle_check(parse_config(raw))


@pytest.mark.parametrize("f,dim", [(2, 2), (3, 3), (4, 2)])
def test_random_micro_schedules(f, dim):
    cells = build_cells(dim, IndexConfig(f, dim=dim))
    rng = random.Random(f * 10 + dim)
    for _ in range(150):
        sched = random_schedule(rng, dim, rng.randint(0, 8), rng.randint(0, 8))
        report = replay(sched, cells=cells)
        assert report.ok, report

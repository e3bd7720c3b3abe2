import math
import random

from hypothesis import given, settings, strategies as st

from cloudpeer.coordination import Coordinator, DiscoveryQuery
from cloudpeer.index import IndexConfig, Point, Region, build_cells, imap_discovery, imap_update, matches
from cloudpeer.oracle import random_schedule, replay

BELOW_ONE = math.nextafter(1.0, 0.0)
GRIDS = {(f, d): build_cells(d, IndexConfig(f, dim=d)) for f in range(1, 5) for d in range(1, 5)}


@st.composite
def region_and_point(draw):
    f = draw(st.integers(1, 4))
    dim = draw(st.integers(1, 4))
    lo = [draw(st.floats(0, BELOW_ONE)) for _ in range(dim)]
    hi = [draw(st.floats(a, 1)) for a in lo]
    p = [draw(st.floats(a, min(b, BELOW_ONE))) for a, b in zip(lo, hi)]
    return GRIDS[(f, dim)], Region(tuple(lo), tuple(hi)), Point(tuple(p))


@settings(max_examples=500)
@given(region_and_point())
def test_matching_pairs_share_a_cell(case):
    cells, r, p = case
    assert matches(r, p)
    disc = {c.cell_index for c in imap_discovery(r, cells)}
    home, region = imap_update(p, cells)
    assert disc & {c.cell_index for c in region}
    assert home is region[0]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 4), st.integers(1, 4))
def test_distributed_equals_central(seed, f, dim):
    rng = random.Random(seed)
    sched = random_schedule(rng, dim, rng.randint(0, 8), rng.randint(0, 8))
    assert replay(sched, cells=GRIDS[(f, dim)]).ok


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_coordinator_state_stays_consistent(seed):
    rng = random.Random(seed)
    c = Coordinator(GRIDS[(3, 2)])
    sched = random_schedule(rng, 2, 8, 8)
    asked = {e.query_id: e.units_requested for e in sched if isinstance(e, DiscoveryQuery)}
    for ev in sorted(sched,
                     key=lambda e: e.submit_time if isinstance(e, DiscoveryQuery) else e.publish_time):
        if isinstance(ev, DiscoveryQuery):
            c.store_discovery(ev)
        else:
            c.handle_update(ev)
        assert c.audit() == []
        for st_ in c.states.values():
            assert len(st_.stored_updates) == len(set(st_.stored_updates))
    granted = {}
    for a in c.allocations:
        granted[a.query_id] = granted.get(a.query_id, 0) + a.units
    for qid, n in granted.items():
        assert n <= asked[qid]

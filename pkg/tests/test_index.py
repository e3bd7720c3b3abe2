import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cloudpeer.config import load_preset
from cloudpeer.errors import InvalidArgument, SchemaViolation
from cloudpeer.index import (AttributeSchema, Dimension, IndexConfig, Point, Region, build_cells, dhash,
                             diagonal_segment_of_region, imap_discovery, imap_update, matches,
                             naive_cells_intersecting)
from cloudpeer.overlay import OverlayConfig

SCHEMA = load_preset("tables56").schema


def grid(f, dim):
    return build_cells(dim, IndexConfig(f, dim=dim))


def diagonal_oracle(t_lo, t_hi, f):
    """Diagonal indices k whose slice [k/f, (k+1)/f) meets [t_lo, t_hi]; t = 1 belongs to the last slice."""
    lo, hi = Fraction(t_lo), Fraction(t_hi)
    out = []
    for k in range(f):
        a, b = Fraction(k, f), Fraction(k + 1, f)
        if lo < b and hi >= a:
            out.append(k)
    if hi == 1 and f - 1 not in out:
        out.append(f - 1)
    return out


def test_81_cells_with_distinct_keys():
    cells = grid(3, 4)
    assert len(cells) == 81
    assert len({c.overlay_key for c in cells}) == 81
    assert all(c.overlay_key < 2**160 for c in cells)


def test_single_cell_grid():
    cells = grid(1, 3)
    assert len(cells) == 1
    assert cells[0].control_point == (0.5, 0.5, 0.5)


def test_2x2_control_points():
    cells = grid(2, 2)
    assert {c.control_point for c in cells} == set(itertools.product((0.25, 0.75), repeat=2))


def test_cells_tile_the_space():
    cells = grid(3, 2)
    rng = random.Random(0)
    for _ in range(500):
        p = (rng.random(), rng.random())
        assert sum(c.contains(p) for c in cells) == 1
    for c in cells:
        assert all(abs((u - l) - 1 / 3) < 1e-12 for l, u in zip(c.lower, c.upper))


def test_index_config_rejects_subdivision():
    with pytest.raises(InvalidArgument):
        IndexConfig(3, f_max=4)
    with pytest.raises(InvalidArgument):
        build_cells(3, IndexConfig(3, dim=4))


def test_dhash_deterministic():
    assert dhash((0.5, 0.5)) == dhash((0.5, 0.5))
    small = OverlayConfig(id_bits=16, bits_per_digit=4)
    assert dhash((0.5,), small) < 2**16


def test_categorical_rank_midpoint():
    d = Dimension("os", "categorical", ("WinSrv2003", "Linux"))
    assert d.coord("WinSrv2003") == 0.25
    assert d.coord("Linux") == 0.75
    with pytest.raises(SchemaViolation):
        d.coord("BeOS")


def test_speed_constraint_interval():
    speed = SCHEMA.dims[1]
    assert speed.interval("> 2.4") == pytest.approx((0.6, 1.0))
    assert speed.interval("<= 1") == (0.0, 0.25)
    assert speed.interval("*") == (0.0, 1.0)
    assert speed.interval({"min": 1, "max": 2}) == (0.25, 0.5)
    with pytest.raises(SchemaViolation):
        speed.interval("> 9")


def test_integer_binning_and_strict_bounds():
    cores = SCHEMA.dims[2]
    assert cores.coord(1) == pytest.approx(0.5 / 8)
    lo, hi = cores.interval("> 1")
    assert lo == pytest.approx(cores.coord(2)) and hi == 1.0
    with pytest.raises(SchemaViolation):
        cores.coord(2.5)


def test_normalize_rejects_bad_input():
    with pytest.raises(SchemaViolation):
        SCHEMA.normalize({"service_type": "Web Hosting"})
    with pytest.raises(SchemaViolation):
        SCHEMA.normalize({"service_type": "Web Hosting", "speed": 1, "cores": 1, "location": "USA", "ram": 4})


def test_round_trip_random_points():
    rng = random.Random(3)
    for _ in range(1000):
        raw = {"service_type": rng.choice(SCHEMA.dims[0].values), "speed": rng.uniform(0, 4),
               "cores": rng.randint(1, 8), "location": rng.choice(SCHEMA.dims[3].values)}
        back = SCHEMA.denormalize(SCHEMA.normalize(raw))
        assert back["service_type"] == raw["service_type"]
        assert back["location"] == raw["location"]
        assert back["cores"] == raw["cores"]
        assert abs(back["speed"] - raw["speed"]) < 1e-9


def test_diagonal_segment_examples():
    assert diagonal_segment_of_region(Region((0.1, 0.1), (0.9, 0.9))) == (0.1, 0.9)
    assert diagonal_segment_of_region(Region((0.6, 0.0), (1.0, 0.4))) == (0.4, 0.6)
    p = (0.2, 0.7, 0.5)
    assert diagonal_segment_of_region(Region(p, p)) == (0.2, 0.7)


def test_imap_discovery_examples():
    cells = grid(2, 2)
    assert [c.cell_index for c in imap_discovery(Region((0.1, 0.1), (0.9, 0.9)), cells)] == [(0, 0), (1, 1)]
    assert [c.cell_index for c in imap_discovery(Region.at(Point((0.3, 0.3))), cells)] == [(0, 0)]


def test_imap_update_examples():
    cells = grid(2, 2)
    home, region = imap_update(Point((0.8, 0.2)), cells)
    assert home.cell_index == (0, 0)
    assert [c.cell_index for c in region] == [(0, 0), (1, 1)]
    _, region = imap_update(Point((0.6, 0.6)), cells)
    assert len(region) == 1


@settings(max_examples=300)
@given(st.integers(1, 4), st.integers(1, 3), st.data())
def test_imap_matches_fraction_oracle(f, dim, data):
    cells = grid(f, dim)
    lat = st.integers(0, 16).map(lambda i: i / 16)
    lo = data.draw(st.lists(lat, min_size=dim, max_size=dim))
    hi = [max(a, data.draw(lat)) for a in lo]
    r = Region(tuple(lo), tuple(hi))
    got = [c.cell_index[0] for c in imap_discovery(r, cells)]
    assert got == diagonal_oracle(*diagonal_segment_of_region(r), f)
    assert all(c.is_diagonal for c in imap_discovery(r, cells))
    p = Point(tuple(min(x, 15 / 16) for x in lo))
    _, region = imap_update(p, cells)
    ks = [c.cell_index[0] for c in region]
    assert ks == diagonal_oracle(min(p.coords), max(p.coords), f)
    assert ks == list(range(ks[0], ks[-1] + 1))


def test_matches_examples():
    q1, q2, q3 = (SCHEMA.normalize_region(c) for c in (
        {"service_type": "Web Hosting", "speed": "> 2", "cores": ">= 1", "location": "USA"},
        {"service_type": "Scientific Simulation", "speed": "> 2", "cores": ">= 1", "location": "Singapore"},
        {"service_type": "Credit Card Authenticator", "speed": "> 2.4", "cores": ">= 1", "location": "Europe"}))
    vm2 = SCHEMA.normalize({"service_type": "Credit Card Authenticator", "speed": 2.7, "cores": 1,
                            "location": "Europe"})
    assert matches(q3, vm2)
    assert not matches(q1, vm2) and not matches(q2, vm2)
    r = Region((0.2, 0.3), (0.5, 0.6))
    assert matches(r, Point((0.2, 0.6)))
    with pytest.raises(SchemaViolation):
        matches(r, Point((0.2,)))


@settings(max_examples=200)
@given(st.data())
def test_point_outside_one_dimension_never_matches(data):
    dim = data.draw(st.integers(1, 4))
    unit = st.floats(0, 0.999, allow_nan=False)
    lo = [data.draw(unit) for _ in range(dim)]
    hi = [data.draw(st.floats(a, 0.999)) for a in lo]
    inside = [data.draw(st.floats(a, b)) for a, b in zip(lo, hi)]
    j = data.draw(st.integers(0, dim - 1))
    if hi[j] >= 0.999 and lo[j] == 0:
        return
    inside[j] = hi[j] + (0.999 - hi[j]) / 2 if hi[j] < 0.999 else lo[j] / 2
    if lo[j] <= inside[j] <= hi[j]:
        return
    assert not matches(Region(tuple(lo), tuple(hi)), Point(tuple(inside)))


def test_naive_cells_examples():
    cells = grid(3, 2)
    assert len(naive_cells_intersecting(Region((0, 0), (1, 1)), cells)) == 9
    assert len(naive_cells_intersecting(Region.at(Point((0.5, 0.1))), cells)) == 1


def test_imap_subset_of_naive_when_region_crosses_cell():
    cells = grid(3, 3)
    rng = random.Random(5)
    for _ in range(500):
        lo = [rng.random() for _ in range(3)]
        hi = [rng.uniform(a, 1) for a in lo]
        r = Region(tuple(lo), tuple(hi))
        naive = {c.cell_index for c in naive_cells_intersecting(r, cells)}
        for c in imap_discovery(r, cells):
            if c.cell_index in naive or not all(l < cu and h >= cl for l, h, cl, cu in
                                                zip(r.lower, r.upper, c.lower, c.upper)):
                continue
            pytest.fail(f"{c.cell_index} crosses the region but the oracle missed it")

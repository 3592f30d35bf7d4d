import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import points_in_cap, random_unit, unit
from skycat import htm
from skycat.errors import ConfigurationError, DomainError, GeometryError
from skycat.region import (
    FULL,
    Cap,
    ConvexRegion,
    HtmRangeSet,
    classify,
    classify_many,
    cover,
    cover_trixels,
    polygon_region,
)
from skycat.sphere import eq_to_vec


def test_cap_radius_domain():
    with pytest.raises(DomainError):
        Cap((0, 0, 1), 0)
    with pytest.raises(DomainError):
        Cap((0, 0, 1), 10800.1)
    with pytest.raises(DomainError):
        Cap((0, 0, 0), 10)
    assert Cap((0, 0, 2), 10).axis == (0.0, 0.0, 1.0)


def test_octant_polygon():
    region = polygon_region([(0, 0), (90, 0), (0, 90)])
    normals = sorted(tuple(np.round(n, 12)) for n, _ in region.halfspaces())
    assert normals == sorted([(0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)])
    assert all(d == 0 for _, d in region.halfspaces())


def test_clockwise_polygon_rejected():
    with pytest.raises(GeometryError, match="edge 0"):
        polygon_region([(0, 90), (90, 0), (0, 0)])


def test_degenerate_polygons():
    with pytest.raises(GeometryError, match="edge"):
        polygon_region([(10, 10), (10, 10), (20, 20)])
    with pytest.raises(GeometryError, match="collinear"):
        polygon_region([(0, 0), (10, 0), (20, 0), (10, 10)])
    with pytest.raises(GeometryError):
        polygon_region([(0, 0), (10, 0)])


def test_nonconvex_polygon_rejected():
    with pytest.raises(GeometryError, match="non-convex"):
        polygon_region([(0, 0), (10, 0), (5, 2), (10, 10), (0, 10)])


def test_random_quadrilaterals_contain_their_vertices():
    rng = np.random.default_rng(1)
    made = 0
    while made < 200:
        ra0, dec0 = rng.uniform(0, 360), rng.uniform(-60, 60)
        angles = np.sort(rng.uniform(0, 2 * math.pi, 4))
        size = rng.uniform(0.1, 10)
        pts = [((ra0 + size * math.cos(a) / math.cos(math.radians(dec0))) % 360, dec0 + size * math.sin(a)) for a in angles]
        try:
            region = polygon_region(pts)
        except GeometryError:
            continue
        made += 1
        verts = np.array([eq_to_vec(*p) for p in pts])
        for n, d in region.halfspaces():
            assert np.all(verts @ n >= d - 1e-12)


def test_classify_examples():
    whole = Cap((0.3, 0.2, 0.1), 10800)
    rng = np.random.default_rng(2)
    lo, hi = htm.id_range_at_depth(6)
    for t in rng.integers(lo, hi + 1, 20):
        assert classify(whole, int(t)) == "Full"

    # 1' cap at the centre of N1, far from any edge
    c = htm.BASE_VERTICES[13 - 8].sum(axis=0)
    small = Cap(tuple(c), 1.0)
    assert [classify(small, t) for t in range(8, 16)] == ["Disjoint"] * 5 + ["Partial"] + ["Disjoint"] * 2

    north = Cap((0, 0, 1), 5400)
    assert classify(north, htm.name_to_id("N0")) == "Full"
    assert classify(north, htm.name_to_id("S0")) == "Partial"
    assert classify(north, htm.trixel_array(8)) == "Partial"


def test_classify_edge_crossing():
    # A cap centred just outside S0's edge, crossing into it but containing
    # no corner of it and not containing its axis point inside S0.
    tri = htm.trixel_array(htm.name_to_id("S0"))
    mid = unit(tri[0] + tri[2])  # on edge v2 -> v0
    outward = -htm.edge_normals(tri)[2]
    axis = unit(mid + 0.01 * outward)
    cap = Cap(tuple(axis), math.degrees(0.02) * 60)
    assert classify(cap, tri) == "Partial"
    assert classify(Cap(tuple(axis), math.degrees(0.005) * 60), tri) == "Disjoint"


def test_cover_examples():
    whole = Cap((1, 0, 0), 10800)
    for d in (0, 5, 20):
        assert cover(whole, d).ranges == (htm.id_range_at_depth(d),)
    north = cover(Cap((0, 0, 1), 5400), 0)
    assert north.ranges == ((8, 15),)
    v = eq_to_vec(185, -0.5)
    rs = cover(Cap(tuple(v), 1.0), 20)
    assert htm.lookup_id(v, 20) in rs
    assert rs.is_normal()


def test_cover_north_hemisphere_classes():
    res = cover_trixels(Cap((0, 0, 1), 5400), 0)
    assert sorted(res.full[0].tolist()) == [12, 13, 14, 15]
    assert sorted(res.partial[0].tolist()) == [8, 9, 10, 11]


def test_cover_budget():
    with pytest.raises(ConfigurationError):
        cover(Cap((0, 0, 1), 60), 10, budget=7)
    res = cover_trixels(Cap((0, 0, 1), 600), 20, budget=50)
    assert res.budget_exhausted
    assert res.trixel_count() <= 50
    # Exhausted covers are still sound.
    rng = np.random.default_rng(3)
    pts = points_in_cap(rng, (0, 0, 1), 600, 2000)
    assert res.range_set().contains_many(htm.lookup_ids(pts, 20)).all()


def test_cover_bad_depth():
    with pytest.raises(ConfigurationError):
        cover(Cap((0, 0, 1), 60), 21)


@pytest.mark.parametrize("radius", [0.5, 30, 600, 5399, 5400, 5401, 9000, 10799])
def test_cover_soundness_by_radius(radius):
    rng = np.random.default_rng(int(radius * 10))
    for _ in range(5):
        axis = random_unit(rng, 1)[0]
        cap = Cap(tuple(axis), radius)
        pts = points_in_cap(rng, axis, radius, 400)
        pts = pts[cap.contains(pts)]
        depth = int(rng.integers(4, 13))
        rs = cover(cap, depth)
        assert rs.contains_many(htm.lookup_ids(pts, depth)).all()


def test_full_trixels_pass_sampling():
    rng = np.random.default_rng(4)
    for radius in (20, 300, 5400, 7000):
        axis = random_unit(rng, 1)[0]
        cap = Cap(tuple(axis), radius)
        res = cover_trixels(cap, 10)
        for depth, ids in res.full.items():
            ids = ids[rng.permutation(ids.size)[:60]]
            tri = htm.vertices_of(ids)
            w = rng.dirichlet([1, 1, 1], (ids.size, 100))
            pts = unit(np.einsum("tsk,tkj->tsj", w, tri))
            assert cap.contains(pts.reshape(-1, 3)).all()


def test_monotone_tightness():
    rng = np.random.default_rng(5)
    for radius in (3, 45, 400):
        cap = Cap(tuple(random_unit(rng, 1)[0]), radius)
        areas = [cover_trixels(cap, d).solid_angle() for d in range(2, 13)]
        for d in range(len(areas) - 2):
            assert areas[d + 2] <= areas[d] * (1 + 1e-12)
        assert areas[-1] >= 2 * math.pi * (1 - math.cos(math.radians(radius / 60)))


def test_polygon_cover_soundness():
    region = polygon_region([(180, -2), (184, -2), (184, 2), (180, 1)])
    rng = np.random.default_rng(6)
    pts = random_unit(rng, 400_000)
    inside = pts[region.contains(pts)]
    assert inside.shape[0] > 50
    for depth in (6, 10, 14):
        rs = cover(region, depth)
        assert rs.contains_many(htm.lookup_ids(inside, depth)).all()


def test_convex_region_with_large_halfspace():
    # n.p >= -0.5 is a cap of 120 degrees; intersected with a hemisphere.
    region = ConvexRegion((((0, 0, 1), -0.5), ((1, 0, 0), 0.0)))
    rng = np.random.default_rng(7)
    pts = random_unit(rng, 20_000)
    inside = pts[region.contains(pts)]
    rs = cover(region, 8)
    assert rs.contains_many(htm.lookup_ids(inside, 8)).all()


def test_empty_region_detected():
    region = ConvexRegion((((0, 0, 1), 0.5), ((0, 0, -1), 0.5)))
    assert region.is_empty()
    assert not ConvexRegion((((0, 0, 1), 0.5),)).is_empty()
    with pytest.raises(GeometryError):
        ConvexRegion(())
    with pytest.raises(DomainError):
        ConvexRegion((((0, 0, 1), 1.5),))


def test_classify_many_matches_single():
    rng = np.random.default_rng(8)
    cap = Cap(tuple(random_unit(rng, 1)[0]), 2000)
    ids, tri = htm.all_trixels(4)
    many = classify_many(cap, tri)
    names = {0: "Disjoint", 1: "Partial", 2: "Full"}
    for t, c in zip(ids[:200], many[:200]):
        assert classify(cap, int(t)) == names[int(c)]
    assert (many == FULL).any()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 300), st.integers(0, 20)), max_size=25))
def test_range_set_normal_form(pairs):
    ranges = [(lo, lo + w) for lo, w in pairs]
    rs = HtmRangeSet.from_ranges(10, ranges)
    assert rs.is_normal()
    assert rs.normalized() == rs
    ids = set()
    for lo, hi in ranges:
        ids.update(range(lo, hi + 1))
    assert rs.id_count() == len(ids)
    probe = np.arange(0, 340)
    assert rs.contains_many(probe).tolist() == [i in ids for i in probe]
    assert all((int(i) in rs) == (int(i) in ids) for i in probe[::7])
    # Unique normal form: built from the id set itself gives the same ranges.
    assert HtmRangeSet.from_ranges(10, [(i, i) for i in ids]) == rs


def test_range_set_rejects_inverted():
    with pytest.raises(ConfigurationError):
        HtmRangeSet.from_ranges(5, [(10, 3)])


@given(st.lists(st.tuples(st.integers(0, 200), st.integers(0, 30)), max_size=40))
def test_range_set_array_input_matches_list_input(spans):
    ranges = [(lo, lo + w) for lo, w in spans]
    arr = np.array(ranges, dtype=np.int64).reshape(-1, 2)
    assert HtmRangeSet.from_ranges(10, arr) == HtmRangeSet.from_ranges(10, ranges)

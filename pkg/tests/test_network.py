import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netspline import (
    NetworkError,
    NetworkPoint,
    SnapError,
    arc_length,
    build_network,
    embed,
    network_distance,
    snap,
)
from netspline.network import embed_many, merge_degree_two, snap_many, straight_network

from netgen import random_network, random_points


def simple_path_lengths(net, source, target):
    """Lengths of every simple vertex path from ``source`` to ``target``."""
    out = []

    def walk(v, seen, length):
        if v == target:
            out.append(length)
            return
        for e in net.edges:
            for a, b in ((e.start, e.end), (e.end, e.start)):
                if a == v and b not in seen:
                    walk(b, seen | {b}, length + e.length)

    walk(source, {source}, 0.0)
    return out


UNIT_SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]
CYCLE = [(0, 1), (1, 2), (2, 3), (3, 0)]


def test_arc_length_of_polyline():
    assert arc_length([(0, 0), (3, 0), (3, 4)]) == 7.0
    assert arc_length([(0, 0, 0), (1, 2, 2)]) == 3.0
    with pytest.raises(NetworkError):
        arc_length([(0, 0)])


@given(st.integers(0, 10_000), st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_arc_length_unchanged_by_collinear_refinement(seed, splits):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-5, 5, size=(int(rng.integers(2, 6)), 2))
    fine = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        for t in np.linspace(0, 1, splits + 2)[1:]:
            fine.append(a + t * (b - a))
    base = arc_length(pts)
    assert abs(arc_length(np.array(fine)) - base) < 1e-12 * base


class TestBuild:
    def test_minimal_edge(self):
        net = build_network([(0, 0), (2, 0)], [(0, 1)])
        assert (net.n_vertices, net.n_edges, net.total_length) == (2, 1, 2.0)
        assert net.degrees.tolist() == [1, 1]
        assert net.n_components == 1

    def test_isolated_vertices_dropped_and_renumbered(self):
        net = build_network([(0, 0), (9, 9), (1, 0)], [(0, 2)])
        assert net.n_vertices == 2
        assert (net.edges[0].start, net.edges[0].end) == (0, 1)

    def test_components_counted(self):
        net = straight_network([(0, 0), (1, 0), (5, 5), (6, 5)], [(0, 1), (2, 3)])
        assert net.n_components == 2

    @pytest.mark.parametrize("vertices, edges, message", [
        ([(0, 0), (1, 0)], [(0, 2)], "missing vertex"),
        ([(0, 0), (0, 0)], [(0, 1)], "zero length"),
        ([(0, 0), (1, 0)], [(0, 1, [(0, 0), (0.5, 1), (1.5, 0)])], "does not end"),
        ([(0, 0), (1, 0)], [], "at least one edge"),
        ([(0, 0, 0, 0)], [], "shape"),
    ])
    def test_invalid_input(self, vertices, edges, message):
        with pytest.raises(NetworkError, match=message):
            build_network(vertices, edges)

    def test_polyline_snapped_to_vertices(self):
        net = build_network([(0, 0), (1, 0)], [(0, 1, [(1e-12, 0), (0.5, 0.5), (1, 0)])])
        assert net.edges[0].polyline[0].tolist() == [0.0, 0.0]

    def test_mapping_edges(self):
        net = build_network(UNIT_SQUARE, [{"from": 0, "to": 1}, {"from": 1, "to": 2, "polyline": [(1, 0), (1, 1)]}])
        assert net.total_length == 2.0

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_rebuild_is_idempotent(self, seed):
        net = random_network(seed)
        again = build_network(net.vertices, net.edges)
        assert np.array_equal(again.degrees, net.degrees)
        assert np.array_equal(again.lengths, net.lengths)
        assert np.array_equal(again.components, net.components)
        assert again.fingerprint == net.fingerprint

    def test_fields_are_read_only(self):
        net = straight_network(UNIT_SQUARE, CYCLE)
        with pytest.raises(ValueError):
            net.vertices[0, 0] = 5.0


class TestDistance:
    def test_same_point(self):
        net = straight_network(UNIT_SQUARE, CYCLE)
        z = NetworkPoint(2, 0.3)
        assert network_distance(z, z, net) == 0.0

    def test_same_edge_without_detour(self):
        net = straight_network([(0, 0), (1, 0), (3, 0)], [(0, 1), (1, 2)])
        assert network_distance(NetworkPoint(0, 0.2), NetworkPoint(0, 0.7), net) == pytest.approx(0.5, abs=1e-15)

    def test_opposite_corners_of_cycle(self):
        net = straight_network(UNIT_SQUARE, CYCLE)
        # corners (0,0) and (1,1), given as offset 0 on edges 0 and 2
        a, b = NetworkPoint(0, 0.0), NetworkPoint(2, 0.0)
        assert sorted(simple_path_lengths(net, 0, 2)) == [2.0, 2.0]
        assert network_distance(a, b, net) == 2.0
        # midpoints of opposite sides: both ways round are 2 as well
        assert network_distance(NetworkPoint(0, 0.5), NetworkPoint(2, 0.5), net) == pytest.approx(2.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_vertex_distances_match_path_enumeration(self, seed):
        net = random_network(seed, 8, loops=False)
        rng = np.random.default_rng(seed)
        m1, m2 = rng.integers(net.n_edges, size=2)
        u, v = net.edges[m1].start, net.edges[m2].end
        expected = min(simple_path_lengths(net, u, v))
        got = network_distance(NetworkPoint(int(m1), 0.0), NetworkPoint(int(m2), net.lengths[m2]), net)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_shortcut_around_cycle_beats_direct_arc(self):
        # a long edge closes a short triangle; walking round is shorter
        net = build_network([(0, 0), (1, 0), (0.5, 0.1)],
                            [(0, 1, [(0, 0), (0.5, 3), (1, 0)]), (0, 2), (2, 1)])
        d_direct = abs(0.1 - (net.lengths[0] - 0.1))
        d = network_distance(NetworkPoint(0, 0.1), NetworkPoint(0, net.lengths[0] - 0.1), net)
        assert d == pytest.approx(0.2 + net.lengths[1] + net.lengths[2])
        assert d < d_direct

    def test_different_components(self):
        net = straight_network([(0, 0), (1, 0), (5, 5), (6, 5)], [(0, 1), (2, 3)])
        assert math.isinf(network_distance(NetworkPoint(0, 0.5), NetworkPoint(1, 0.5), net))

    def test_loop_edge(self):
        v = np.array([0.0, 0.0])
        loop = np.vstack([v, v + [1, 0], v + [1, 1], v + [0, 1], v])
        net = build_network([(0, 0), (-1, 0)], [(0, 0, loop), (0, 1)])
        # point 0.5 along a loop of length 4 from its vertex, then one along the stem
        d = network_distance(NetworkPoint(0, 3.5), NetworkPoint(1, 1.0), net)
        assert d == pytest.approx(1.5)

    def test_invalid_offset(self):
        net = straight_network(UNIT_SQUARE, CYCLE)
        with pytest.raises(NetworkError):
            network_distance(NetworkPoint(0, 1.5), NetworkPoint(0, 0.0), net)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_metric_axioms(self, seed):
        net = random_network(seed, 12)
        rng = np.random.default_rng(seed)
        e, t = random_points(net, 3, rng)
        z = [NetworkPoint(int(a), float(b)) for a, b in zip(e, t)]
        d = {(i, j): network_distance(z[i], z[j], net) for i in range(3) for j in range(3)}
        for i, j in itertools.product(range(3), repeat=2):
            assert d[i, j] >= 0
            assert d[i, j] == pytest.approx(d[j, i], rel=1e-12, abs=1e-12)
        for i in range(3):
            assert d[i, i] == 0
        for i, j, k in itertools.permutations(range(3)):
            assert d[i, k] <= d[i, j] + d[j, k] + 1e-12
        if z[0] != z[1]:
            assert d[0, 1] > 0

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_never_longer_than_arc_on_shared_edge(self, seed):
        net = random_network(seed, 12)
        rng = np.random.default_rng(seed)
        m = int(rng.integers(net.n_edges))
        a, b = rng.uniform(0, net.lengths[m], size=2)
        assert network_distance(NetworkPoint(m, a), NetworkPoint(m, b), net) <= abs(a - b) + 1e-15


class TestEmbedSnap:
    def test_embed_follows_polyline(self):
        net = build_network([(0, 0), (2, 2)], [(0, 1, [(0, 0), (2, 0), (2, 2)])])
        assert embed(NetworkPoint(0, 3.0), net) == (2.0, 1.0)

    def test_snap_small_perturbation(self):
        net = straight_network(UNIT_SQUARE, CYCLE)
        z = snap((0.4, 1e-6), net, 1e-3)
        assert z.edge == 0 and z.offset == pytest.approx(0.4)

    def test_snap_too_far(self):
        net = straight_network(UNIT_SQUARE, CYCLE)
        with pytest.raises(SnapError) as info:
            snap_many([(0.5, 0.0), (0.5, 0.5)], net, 1e-3)
        assert info.value.index == 1
        assert info.value.distance == pytest.approx(0.5)

    def test_snap_tie_goes_to_lowest_edge(self):
        net = straight_network(UNIT_SQUARE, CYCLE)
        assert snap((0.0, 0.0), net, 1e-9) == NetworkPoint(0, 0.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_embed_then_snap_returns_same_place(self, seed):
        net = random_network(seed, 10)
        rng = np.random.default_rng(seed)
        e, t = random_points(net, 20, rng)
        xy = embed_many(net, e, t)
        e2, t2, dist = snap_many(xy, net, 1e-9)
        back = embed_many(net, e2, t2)
        assert np.max(dist) < 1e-9
        assert np.allclose(back, xy, atol=1e-9)


def test_merge_degree_two_keeps_geometry():
    net = straight_network([(0, 0), (1, 0), (2, 0), (2, 1)], [(0, 1), (1, 2), (2, 3)])
    merged = merge_degree_two(net)
    assert merged.n_edges == 1
    assert merged.total_length == pytest.approx(net.total_length)
    assert merged.n_vertices == 2

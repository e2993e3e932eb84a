import heapq
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from arlane.track import (
    FitError, GraphError, GraphSpec, NoRouteError, OutOfCorridorError, Route, RouteGraph, fit_centerline,
    generate_graph, label_coeffs, lane_frame, make_edge, plan_route, reachable_pairs, sample_route,
    straight_edge, wrap_angle,
)
from arlane.vehicle import VehicleState


def _state(x, y, yaw):
    return VehicleState(x=x, y=y, yaw=yaw, v=0.0)


def _graph(points, pairs):
    nodes = np.array(points, dtype=float)
    edges = [straight_edge(a, b, nodes[a], nodes[b]) for a, b in pairs]
    return RouteGraph(nodes, np.zeros(len(nodes)), edges)


def _dijkstra(graph, s, t):
    dist = {s: 0.0}
    pq = [(0.0, s)]
    while pq:
        d, u = heapq.heappop(pq)
        if d > dist.get(u, math.inf):
            continue
        for e in graph.out_edges(u):
            nd = d + e.length
            if nd < dist.get(e.end, math.inf):
                dist[e.end] = nd
                heapq.heappush(pq, (nd, e.end))
    return dist.get(t, math.inf)


def _exhaustive(graph, s, t):
    best = math.inf

    def walk(u, seen, length):
        nonlocal best
        if u == t:
            best = min(best, length)
            return
        for e in graph.out_edges(u):
            if e.end not in seen:
                walk(e.end, seen | {e.end}, length + e.length)

    walk(s, {s}, 0.0)
    return best


# -- generation ------------------------------------------------------------


def test_generate_graph_size_connected_and_g1():
    g = generate_graph(7, GraphSpec(n_nodes=12))
    assert g.n_nodes == 12
    assert g.is_connected()
    assert g.g1_violations() == []


def test_generate_graph_is_deterministic():
    a = generate_graph(7, GraphSpec(n_nodes=12)).to_json()
    b = generate_graph(7, GraphSpec(n_nodes=12)).to_json()
    assert a == b


def test_different_seed_changes_an_edge():
    a = generate_graph(7, GraphSpec(n_nodes=12)).to_dict()["edges"]
    b = generate_graph(8, GraphSpec(n_nodes=12)).to_dict()["edges"]
    assert a != b


def test_infeasible_spec_rejected():
    with pytest.raises(GraphError):
        generate_graph(0, GraphSpec(n_nodes=0))
    with pytest.raises(GraphError):
        generate_graph(0, GraphSpec(p_straight=0, p_left=0, p_right=0))


@given(st.integers(0, 10_000))
def test_generated_graphs_are_tangent_continuous(seed):
    g = generate_graph(seed, GraphSpec(n_nodes=10))
    assert g.is_connected()
    assert g.g1_violations() == []


def test_graph_json_round_trip():
    g = generate_graph(3, GraphSpec(n_nodes=15))
    text = g.to_json()
    assert RouteGraph.from_json(text).to_json() == text


def test_graph_rejects_unknown_version():
    d = generate_graph(3, GraphSpec(n_nodes=6)).to_dict()
    d["version"] = 99
    with pytest.raises(GraphError):
        RouteGraph.from_dict(d)


def test_make_edge_validation():
    with pytest.raises(GraphError):
        make_edge(0, 1, (0, 0, 0), "zigzag", 1.0)
    with pytest.raises(GraphError):
        make_edge(0, 1, (0, 0, 0), "straight", 0.0)
    with pytest.raises(GraphError):
        make_edge(0, 1, (0, 0, 0), "arc-left", 1.0)


def test_arc_geometry_closed_form():
    e = make_edge(0, 1, (0.0, 0.0, 0.0), "arc-left", 50.0 * math.pi / 2, 50.0)
    x, y, th = e.end_pose()
    assert x == pytest.approx(50.0, abs=1e-12)
    assert y == pytest.approx(50.0, abs=1e-12)
    assert th == pytest.approx(math.pi / 2, abs=1e-15)


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


# -- routing ---------------------------------------------------------------


def test_two_node_route_is_the_edge():
    g = _graph([(0, 0), (10, 0)], [(0, 1)])
    r = plan_route(g, 0, 1)
    assert r.edges == g.edges
    assert r.s_total == pytest.approx(10.0)


def test_triangle_picks_shorter_two_hop_side():
    # direct 0->2 detour is long; 0->1->2 is short
    pts = [(0, 0), (5, 1), (10, 0), (5, 40)]
    g = _graph(pts, [(0, 1), (1, 2), (0, 3), (3, 2)])
    r = plan_route(g, 0, 2)
    assert [e.end for e in r.edges] == [1, 2]
    assert r.s_total == pytest.approx(_dijkstra(g, 0, 2), abs=1e-12)


def test_disconnected_pair_raises():
    g = _graph([(0, 0), (10, 0), (50, 50)], [(0, 1)])
    with pytest.raises(NoRouteError):
        plan_route(g, 0, 2)


def test_invalid_endpoints():
    g = _graph([(0, 0), (10, 0)], [(0, 1)])
    with pytest.raises(GraphError):
        plan_route(g, 0, 0)
    with pytest.raises(GraphError):
        plan_route(g, 0, 5)


@given(st.integers(0, 2000), st.integers(4, 10))
def test_astar_matches_exhaustive_search(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100, (n, 2))
    pairs = [(a, b) for a, b in itertools.permutations(range(n), 2) if rng.random() < 0.3]
    g = _graph(pts, pairs)
    s, t = 0, n - 1
    best = _exhaustive(g, s, t)
    if math.isinf(best):
        with pytest.raises(NoRouteError):
            plan_route(g, s, t)
    else:
        assert plan_route(g, s, t).s_total <= best + 1e-9


def test_route_total_is_sum_of_edges():
    g = generate_graph(11, GraphSpec(n_nodes=20))
    r = sample_route(g, np.random.default_rng(0))
    assert r.s_total == pytest.approx(sum(e.length for e in r.edges), rel=1e-15)
    assert len(r.edges) >= 3
    for a, b in zip(r.edges, r.edges[1:]):
        assert a.end == b.start


def test_route_rejects_disjoint_edges():
    a = make_edge(0, 1, (0, 0, 0), "straight", 5.0)
    b = make_edge(2, 3, (5, 0, 0), "straight", 5.0)
    with pytest.raises(GraphError):
        Route([a, b], 0, 3)


def test_reachable_pairs_respects_min_edges():
    g = _graph([(0, 0), (10, 0), (20, 0), (30, 0)], [(0, 1), (1, 2), (2, 3)])
    assert reachable_pairs(g, 3) == [(0, 3)]


def test_route_json_round_trip():
    g = generate_graph(5, GraphSpec(n_nodes=12))
    r = sample_route(g, np.random.default_rng(1))
    assert Route.from_dict(r.to_dict()).to_dict() == r.to_dict()


# -- lane frame -----------------------------------------------------------


def _straight_route(length=100.0):
    return Route([make_edge(0, 1, (0.0, 0.0, 0.0), "straight", length)], 0, 1)


def test_on_centerline_is_zero():
    err = lane_frame(_state(30.0, 0.0, 0.0), _straight_route())
    assert err.d == 0.0 and err.phi == 0.0
    assert err.s == pytest.approx(30.0)


def test_left_offset_is_positive():
    err = lane_frame(_state(30.0, 0.5, 0.0), _straight_route())
    assert err.d == pytest.approx(0.5, abs=1e-12)
    assert err.phi == 0.0


def test_arc_heading_error():
    r = Route([make_edge(0, 1, (0.0, 0.0, 0.3), "arc-right", 60.0, 40.0)], 0, 1)
    x, y, th = r.pose_at(25.0)
    err = lane_frame(_state(x, y, th + 0.1), r, s_hint=24.0)
    assert err.phi == pytest.approx(0.1, abs=1e-9)
    assert err.d == pytest.approx(0.0, abs=1e-9)
    assert err.s == pytest.approx(25.0, abs=1e-9)


@given(st.floats(1.0, 99.0), st.floats(0.01, 3.0))
def test_mirror_flips_sign_of_d(s, off):
    r = _straight_route()
    left = lane_frame(_state(s, off, 0.0), r)
    right = lane_frame(_state(s, -off, 0.0), r)
    assert left.d > 0 > right.d
    assert left.d == pytest.approx(-right.d, abs=1e-12)


def test_far_from_route_is_out_of_corridor():
    with pytest.raises(OutOfCorridorError):
        lane_frame(_state(30.0, 20.0, 0.0), _straight_route())


@given(st.floats(0.0, 2 * math.pi))
def test_phi_is_wrapped(yaw):
    err = lane_frame(_state(10.0, 0.0, yaw), _straight_route())
    assert -math.pi < err.phi <= math.pi


def test_mirrored_route_mirrors_lane_frame():
    g = generate_graph(2, GraphSpec(n_nodes=12))
    r = sample_route(g, np.random.default_rng(3))
    m = r.mirrored()
    x, y, th = r.pose_at(40.0)
    nx, ny = -math.sin(th), math.cos(th)
    a = lane_frame(_state(x + 0.4 * nx, y + 0.4 * ny, th + 0.05), r, s_hint=40.0)
    b = lane_frame(_state(x + 0.4 * nx, -(y + 0.4 * ny), -(th + 0.05)), m, s_hint=40.0)
    assert b.d == pytest.approx(-a.d, abs=1e-9)
    assert b.phi == pytest.approx(-a.phi, abs=1e-9)


# -- centerline fit -------------------------------------------------------


def test_fit_zero_line():
    x = np.linspace(0, 20, 30)
    c, res = fit_centerline(np.c_[x, np.zeros_like(x)])
    assert np.allclose(c.as_array(), 0.0, atol=1e-10)
    assert res < 1e-10


def test_fit_linear_exact():
    x = np.linspace(0, 20, 30)
    c, _ = fit_centerline(np.c_[x, 0.2 + 0.05 * x])
    assert np.allclose(c.as_array(), [0.2, 0.05, 0.0, 0.0], atol=1e-8)


@given(st.floats(-1, 1), st.floats(-0.2, 0.2), st.floats(-0.01, 0.01), st.floats(-0.001, 0.001))
def test_fit_exact_on_cubics(c0, c1, c2, c3):
    x = np.linspace(0, 20, 41)
    y = c0 + c1 * x + c2 * x**2 + c3 * x**3
    _, res = fit_centerline(np.c_[x, y])
    assert res < 1e-10


def test_fit_noisy_cubic_within_normal_equation_ci():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 20, 200)
    true = np.array([0.3, -0.05, 0.004, -0.0002])
    sigma = 0.01
    y = np.vander(x, 4, increasing=True) @ true + rng.normal(0, sigma, x.size)
    c, _ = fit_centerline(np.c_[x, y])
    # independent oracle: explicit normal equations and the coefficient covariance
    X = np.column_stack([x**k for k in range(4)])
    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    se = sigma * np.sqrt(np.diag(np.linalg.inv(xtx)))
    assert np.allclose(c.as_array(), beta, atol=1e-9)
    assert np.all(np.abs(c.as_array() - true) <= 3 * se)


def test_rank_deficient_fit_raises():
    pts = np.c_[np.full(10, 5.0), np.linspace(0, 1, 10)]
    with pytest.raises(FitError):
        fit_centerline(pts)


def test_fit_rejects_large_offset():
    x = np.linspace(0, 20, 30)
    with pytest.raises(FitError):
        fit_centerline(np.c_[x, np.full_like(x, 5.0)])


def test_label_on_straight_centered_pose_is_zero():
    r = _straight_route(200.0)
    c = label_coeffs(r, 20.0, 0.0, 0.0, 20.0)
    assert np.allclose(c.as_array(), 0.0, atol=1e-10)


def test_label_sign_follows_offset():
    r = _straight_route(200.0)
    c = label_coeffs(r, 20.0, 0.5, 0.0, 20.0)
    # vehicle left of the centerline sees the centerline to its right
    assert c.c0 == pytest.approx(-0.5, abs=1e-9)

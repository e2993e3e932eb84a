"""Procedural road graphs, A* routes, lane-frame projection and cubic centerline fits.

Edges are single geometric primitives (straight segment or circular arc)
anchored at a start pose. Generated graphs grow edge by edge from node poses,
so every edge leaves its start node along that node's heading and arrives at
its end node along the end node's heading (tangent continuity at shared
nodes).
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

GRAPH_FORMAT_VERSION = 1
KINDS = ("straight", "arc-left", "arc-right")


class GraphError(ValueError):
    """Infeasible graph request or malformed graph document."""


class NoRouteError(RuntimeError):
    pass


class OutOfCorridorError(RuntimeError):
    pass


class FitError(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]; in-range angles are returned unchanged."""
    if -math.pi < a <= math.pi:
        return a
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


# --------------------------------------------------------------------------
# Geometry primitives
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    start: int
    end: int
    kind: str
    length: float
    radius: float  # inf for straight edges
    x0: float
    y0: float
    heading0: float

    @property
    def curvature(self) -> float:
        if self.kind == "straight":
            return 0.0
        return 1.0 / self.radius if self.kind == "arc-left" else -1.0 / self.radius

    def pose(self, u: float) -> tuple[float, float, float]:
        """Position and tangent heading at local arc length ``u``."""
        k = self.curvature
        th0 = self.heading0
        if k == 0.0:
            return self.x0 + u * math.cos(th0), self.y0 + u * math.sin(th0), th0
        th = th0 + k * u
        return (
            self.x0 + (math.sin(th) - math.sin(th0)) / k,
            self.y0 + (math.cos(th0) - math.cos(th)) / k,
            th,
        )

    def end_pose(self) -> tuple[float, float, float]:
        return self.pose(self.length)

    def project(self, qx: float, qy: float, lo: float, hi: float) -> float:
        """Local arc length in [lo, hi] of the point closest to (qx, qy)."""
        k = self.curvature
        c, s = math.cos(self.heading0), math.sin(self.heading0)
        if k == 0.0:
            u = (qx - self.x0) * c + (qy - self.y0) * s
        else:
            cx = self.x0 - s / k
            cy = self.y0 + c / k
            if qx == cx and qy == cy:
                return lo
            psi = math.atan2(qy - cy, qx - cx)
            th = psi + (math.pi / 2 if k > 0 else -math.pi / 2)
            dth = th - self.heading0
            # measure sweep from the arc midpoint so the wrap seam sits opposite the arc
            mid = 0.5 * self.length * abs(k)
            sweep = wrap_angle((dth if k > 0 else -dth) - mid) + mid
            u = sweep / abs(k)
        return min(max(u, lo), hi)

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "kind": self.kind,
            "length": self.length,
            "radius": None if math.isinf(self.radius) else self.radius,
            "x0": self.x0,
            "y0": self.y0,
            "heading0": self.heading0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Edge":
        if d["kind"] not in KINDS:
            raise GraphError(f"unknown edge kind {d['kind']!r}")
        return cls(
            start=int(d["start"]),
            end=int(d["end"]),
            kind=d["kind"],
            length=float(d["length"]),
            radius=math.inf if d["radius"] is None else float(d["radius"]),
            x0=float(d["x0"]),
            y0=float(d["y0"]),
            heading0=float(d["heading0"]),
        )


def make_edge(start: int, end: int, pose0: tuple[float, float, float], kind: str, length: float,
              radius: float = math.inf) -> Edge:
    if kind not in KINDS:
        raise GraphError(f"unknown edge kind {kind!r}")
    if length <= 0:
        raise GraphError("edge length must be positive")
    if kind != "straight" and not (radius > 0 and math.isfinite(radius)):
        raise GraphError("arc edges need a finite positive radius")
    return Edge(start, end, kind, float(length), math.inf if kind == "straight" else float(radius),
                float(pose0[0]), float(pose0[1]), float(pose0[2]))


def straight_edge(start: int, end: int, p0, p1) -> Edge:
    """Straight edge between two points, heading taken from the chord."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    return make_edge(start, end, (p0[0], p0[1], math.atan2(dy, dx)), "straight", math.hypot(dx, dy))


# --------------------------------------------------------------------------
# Graph
# --------------------------------------------------------------------------


@dataclass
class RouteGraph:
    nodes: np.ndarray  # (n, 2) planar positions
    headings: np.ndarray  # (n,) node tangent directions
    edges: list[Edge]
    lane_width: float = 3.5

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.headings = np.asarray(self.headings, dtype=float).reshape(-1)
        if self.lane_width <= 0:
            raise GraphError("lane_width must be positive")
        n = len(self.nodes)
        for e in self.edges:
            if not (0 <= e.start < n and 0 <= e.end < n):
                raise GraphError(f"edge {e.start}->{e.end} references a missing node")
        self._out: dict[int, list[Edge]] = {i: [] for i in range(n)}
        for e in self.edges:
            self._out[e.start].append(e)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def out_edges(self, node: int) -> list[Edge]:
        return self._out[node]

    def is_connected(self) -> bool:
        """Weak connectivity."""
        if self.n_nodes == 0:
            return False
        adj: dict[int, set[int]] = {i: set() for i in range(self.n_nodes)}
        for e in self.edges:
            adj[e.start].add(e.end)
            adj[e.end].add(e.start)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u] - seen:
                seen.add(v)
                stack.append(v)
        return len(seen) == self.n_nodes

    def g1_violations(self, tol: float = 1e-6) -> list[Edge]:
        """Edges whose end points or end tangents disagree with their nodes."""
        bad = []
        for e in self.edges:
            x1, y1, th1 = e.end_pose()
            sx, sy = self.nodes[e.start]
            ex, ey = self.nodes[e.end]
            if (
                math.hypot(e.x0 - sx, e.y0 - sy) > tol
                or math.hypot(x1 - ex, y1 - ey) > tol
                or abs(wrap_angle(e.heading0 - self.headings[e.start])) > tol
                or abs(wrap_angle(th1 - self.headings[e.end])) > tol
            ):
                bad.append(e)
        return bad

    def to_dict(self) -> dict:
        return {
            "version": GRAPH_FORMAT_VERSION,
            "lane_width": self.lane_width,
            "nodes": [
                {"id": i, "x": float(p[0]), "y": float(p[1]), "heading": float(h)}
                for i, (p, h) in enumerate(zip(self.nodes, self.headings))
            ],
            "edges": [e.to_dict() for e in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "RouteGraph":
        if d.get("version") != GRAPH_FORMAT_VERSION:
            raise GraphError(f"unsupported graph document version {d.get('version')!r}")
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        return cls(
            nodes=np.array([[n["x"], n["y"]] for n in nodes], dtype=float),
            headings=np.array([n["heading"] for n in nodes], dtype=float),
            edges=[Edge.from_dict(e) for e in d["edges"]],
            lane_width=float(d["lane_width"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "RouteGraph":
        return cls.from_dict(json.loads(text))


@dataclass
class GraphSpec:
    n_nodes: int = 40
    straight_length: tuple[float, float] = (40.0, 120.0)
    arc_radius: tuple[float, float] = (35.0, 120.0)
    arc_angle: tuple[float, float] = (0.3, 1.2)
    p_straight: float = 0.4
    p_left: float = 0.3
    p_right: float = 0.3
    branch_prob: float = 0.2
    lane_width: float = 3.5


def _random_edge(rng, spec: GraphSpec, start: int, end: int, pose0, kind: str) -> Edge:
    if kind == "straight":
        return make_edge(start, end, pose0, kind, rng.uniform(*spec.straight_length))
    radius = rng.uniform(*spec.arc_radius)
    angle = rng.uniform(*spec.arc_angle)
    return make_edge(start, end, pose0, kind, radius * angle, radius)


def generate_graph(seed: int, spec: GraphSpec | None = None) -> RouteGraph:
    """Grow a connected tangent-continuous road graph with exactly ``spec.n_nodes`` nodes.

    The first three edges form a straight, a left arc and a right arc in
    sequence; later edges extend the newest node or, with ``branch_prob``,
    fork from an earlier node with spare out-degree.
    """
    spec = spec or GraphSpec()
    if spec.n_nodes < 4:
        raise GraphError(f"graph needs at least 4 nodes, got {spec.n_nodes}")
    probs = np.array([spec.p_straight, spec.p_left, spec.p_right], dtype=float)
    if np.any(probs < 0) or probs.sum() <= 0:
        raise GraphError("edge-kind probabilities must be non-negative and not all zero")
    probs = probs / probs.sum()
    rng = np.random.default_rng([seed, 104729])

    poses = [(0.0, 0.0, 0.0)]
    edges: list[Edge] = []
    out_deg = [0]
    forced = ["straight", "arc-left", "arc-right"]
    while len(poses) < spec.n_nodes:
        new = len(poses)
        if forced:
            parent, kind = new - 1, forced.pop(0)
        else:
            forkable = [i for i in range(new - 1) if out_deg[i] < 2]
            if forkable and rng.random() < spec.branch_prob:
                parent = int(forkable[rng.integers(len(forkable))])
            else:
                parent = new - 1
            kind = KINDS[int(rng.choice(3, p=probs))]
        e = _random_edge(rng, spec, parent, new, poses[parent], kind)
        x1, y1, th1 = e.end_pose()
        poses.append((x1, y1, wrap_angle(th1)))
        out_deg[parent] += 1
        out_deg.append(0)
        edges.append(e)

    arr = np.array(poses)
    return RouteGraph(arr[:, :2], arr[:, 2], edges, spec.lane_width)


# --------------------------------------------------------------------------
# Routes
# --------------------------------------------------------------------------


@dataclass
class Route:
    edges: list[Edge]
    start: int
    goal: int
    lane_width: float = 3.5
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.edges:
            raise GraphError("route needs at least one edge")
        for a, b in zip(self.edges, self.edges[1:]):
            if a.end != b.start:
                raise GraphError(f"route edges {a.start}->{a.end} and {b.start}->{b.end} do not share a node")
        self.offsets = np.concatenate([[0.0], np.cumsum([e.length for e in self.edges])])

    @property
    def s_total(self) -> float:
        return float(self.offsets[-1])

    def _edge_index(self, s: float) -> int:
        i = int(np.searchsorted(self.offsets, s, side="right")) - 1
        return min(max(i, 0), len(self.edges) - 1)

    def pose_at(self, s: float) -> tuple[float, float, float]:
        s = min(max(s, 0.0), self.s_total)
        i = self._edge_index(s)
        return self.edges[i].pose(s - self.offsets[i])

    def poses(self, ss) -> np.ndarray:
        """Vectorised :meth:`pose_at`; returns (n, 3) rows of (x, y, heading)."""
        ss = np.clip(np.asarray(ss, dtype=float), 0.0, self.s_total)
        idx = np.clip(np.searchsorted(self.offsets, ss, side="right") - 1, 0, len(self.edges) - 1)
        out = np.empty((len(ss), 3))
        for i in np.unique(idx):
            e = self.edges[i]
            sel = idx == i
            u = ss[sel] - self.offsets[i]
            k = e.curvature
            if k == 0.0:
                out[sel, 0] = e.x0 + u * math.cos(e.heading0)
                out[sel, 1] = e.y0 + u * math.sin(e.heading0)
                out[sel, 2] = e.heading0
            else:
                th = e.heading0 + k * u
                out[sel, 0] = e.x0 + (np.sin(th) - math.sin(e.heading0)) / k
                out[sel, 1] = e.y0 + (math.cos(e.heading0) - np.cos(th)) / k
                out[sel, 2] = th
        return out

    def curvature_at(self, s: float) -> float:
        return self.edges[self._edge_index(min(max(s, 0.0), self.s_total))].curvature

    def project(self, qx: float, qy: float, s_hint: float | None = None, window: float = 10.0
                ) -> tuple[float, float]:
        """Closest centerline point to (qx, qy) within ``s_hint +- window``.

        Returns (s, distance). Ties go to the larger s. ``s_hint=None``
        searches the whole route.
        """
        if s_hint is None:
            lo, hi = 0.0, self.s_total
        else:
            lo, hi = max(0.0, s_hint - window), min(self.s_total, s_hint + window)
            if lo > hi:
                lo = hi = min(max(s_hint, 0.0), self.s_total)
        best_s, best_d = lo, math.inf
        i0, i1 = self._edge_index(lo), self._edge_index(hi)
        for i in range(i0, i1 + 1):
            e, off = self.edges[i], self.offsets[i]
            u = e.project(qx, qy, max(lo - off, 0.0), min(hi - off, e.length))
            x, y, _ = e.pose(u)
            dist = math.hypot(qx - x, qy - y)
            if dist < best_d - 1e-12 or (abs(dist - best_d) <= 1e-12 and off + u > best_s):
                best_s, best_d = off + u, dist
        return float(best_s), float(best_d)

    def mirrored(self) -> "Route":
        """Reflect across the x axis (y -> -y, left arcs <-> right arcs)."""
        flip = {"straight": "straight", "arc-left": "arc-right", "arc-right": "arc-left"}
        edges = [
            Edge(e.start, e.end, flip[e.kind], e.length, e.radius, e.x0, -e.y0, wrap_angle(-e.heading0))
            for e in self.edges
        ]
        return Route(edges, self.start, self.goal, self.lane_width)

    def to_dict(self) -> dict:
        return {
            "version": GRAPH_FORMAT_VERSION,
            "start": self.start,
            "goal": self.goal,
            "lane_width": self.lane_width,
            "s_total": self.s_total,
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Route":
        return cls([Edge.from_dict(e) for e in d["edges"]], int(d["start"]), int(d["goal"]),
                   float(d["lane_width"]))


def plan_route(graph: RouteGraph, start: int, goal: int) -> Route:
    """Minimum-arc-length route by A* with the straight-line distance heuristic."""
    n = graph.n_nodes
    if not (0 <= start < n and 0 <= goal < n):
        raise GraphError(f"start/goal must be node ids in [0, {n})")
    if start == goal:
        raise GraphError("start and goal must differ")

    goal_xy = graph.nodes[goal]

    def h(u: int) -> float:
        return float(np.hypot(*(graph.nodes[u] - goal_xy)))

    g = {start: 0.0}
    parent: dict[int, Edge] = {}
    tie = itertools.count()
    frontier = [(h(start), next(tie), start)]
    closed: set[int] = set()
    while frontier:
        _, _, u = heapq.heappop(frontier)
        if u in closed:
            continue
        if u == goal:
            path = []
            while u != start:
                e = parent[u]
                path.append(e)
                u = e.start
            return Route(path[::-1], start, goal, graph.lane_width)
        closed.add(u)
        for e in graph.out_edges(u):
            cand = g[u] + e.length
            if cand < g.get(e.end, math.inf):
                g[e.end] = cand
                parent[e.end] = e
                heapq.heappush(frontier, (cand + h(e.end), next(tie), e.end))
    raise NoRouteError(f"no route from node {start} to node {goal}")


def reachable_pairs(graph: RouteGraph, min_edges: int = 3) -> list[tuple[int, int]]:
    """(start, goal) pairs whose fewest-edge path has at least ``min_edges`` edges."""
    pairs = []
    for s in range(graph.n_nodes):
        depth = {s: 0}
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for e in graph.out_edges(u):
                    if e.end not in depth:
                        depth[e.end] = depth[u] + 1
                        nxt.append(e.end)
            frontier = nxt
        pairs.extend((s, t) for t, d in sorted(depth.items()) if d >= min_edges)
    return pairs


def route_pool(graph: RouteGraph, min_edges: int = 3, min_length: float = 0.0) -> list[Route]:
    """Routes between all start/goal pairs ``min_edges`` or more edges apart that reach
    ``min_length``; falls back to the single longest route if none does."""
    pairs = reachable_pairs(graph, min_edges)
    if not pairs:
        raise NoRouteError(f"graph has no start/goal pair {min_edges} or more edges apart")
    routes = [plan_route(graph, s, t) for s, t in pairs]
    ok = [r for r in routes if r.s_total >= min_length]
    return ok if ok else [max(routes, key=lambda r: r.s_total)]


def sample_route(graph: RouteGraph, rng: np.random.Generator, min_edges: int = 3,
                 min_length: float = 0.0, pool: list[Route] | None = None) -> Route:
    """Uniform over qualifying (start, goal) pairs; falls back to the longest route if none
    reaches ``min_length``. Pass a precomputed ``pool`` to skip route planning."""
    if pool is None:
        pool = route_pool(graph, min_edges, min_length)
    return pool[int(rng.integers(len(pool)))]


# --------------------------------------------------------------------------
# Lane frame
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LaneFrameError:
    d: float  # signed lateral deviation, + = left of centerline
    phi: float  # heading error, wrapped to (-pi, pi]
    s: float  # arc-length progress


def lane_frame(state, route: Route, s_hint: float | None = None, window: float = 10.0) -> LaneFrameError:
    """Lateral deviation and heading error of ``state`` (anything with x, y, yaw) w.r.t. ``route``."""
    s, dist = route.project(state.x, state.y, s_hint, window)
    if dist > 3.0 * route.lane_width:
        raise OutOfCorridorError(f"vehicle {dist:.2f} m from centerline (limit {3 * route.lane_width:.2f} m)")
    cx, cy, th = route.pose_at(s)
    d = -(state.x - cx) * math.sin(th) + (state.y - cy) * math.cos(th)
    return LaneFrameError(d=d, phi=wrap_angle(state.yaw - th), s=s)


# --------------------------------------------------------------------------
# Cubic centerline fit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CenterlineCoeffs:
    c0: float
    c1: float
    c2: float
    c3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3])

    def __call__(self, x):
        return self.c0 + self.c1 * x + self.c2 * x**2 + self.c3 * x**3


def fit_centerline(points, lane_width: float = 3.5, min_samples: int = 8, min_span: float = 5.0
                   ) -> tuple[CenterlineCoeffs, float]:
    """Least-squares cubic ``y(x)`` through vehicle-frame samples; returns (coeffs, residual RMS)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError(f"expected (N, 2) points, got shape {pts.shape}")
    x, y = pts[:, 0], pts[:, 1]
    X = np.vander(x, 4, increasing=True)
    if len(x) < 4 or np.linalg.matrix_rank(X) < 4:
        raise FitError("design matrix is rank deficient")
    if len(x) < min_samples:
        raise FitError(f"need at least {min_samples} samples, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise FitError("x must be strictly increasing")
    if x[-1] - x[0] < min_span:
        raise FitError(f"samples span {x[-1] - x[0]:.2f} m, need {min_span} m")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise FitError("non-finite coefficients")
    if abs(coef[0]) > lane_width:
        raise FitError(f"|c0| = {abs(coef[0]):.2f} exceeds lane width {lane_width}")
    resid = y - X @ coef
    return CenterlineCoeffs(*map(float, coef)), float(np.sqrt(np.mean(resid**2)))


def centerline_samples(route: Route, x: float, y: float, yaw: float, s0: float,
                       depth: float = 20.0, n: int = 41) -> np.ndarray:
    """Centerline points in the vehicle frame with forward coordinate in [0, depth]."""
    ss = np.linspace(s0 - 2.0, min(s0 + depth * 1.5 + 2.0, route.s_total), 4 * n)
    c, s = math.cos(yaw), math.sin(yaw)
    pts = []
    for si in ss:
        px, py, _ = route.pose_at(si)
        dx, dy = px - x, py - y
        pts.append((c * dx + s * dy, -s * dx + c * dy))
    pts = np.array(pts)
    keep = (pts[:, 0] >= 0.0) & (pts[:, 0] <= depth)
    pts = pts[keep]
    order = np.argsort(pts[:, 0], kind="stable")
    pts = pts[order]
    _, uniq = np.unique(pts[:, 0], return_index=True)
    return pts[np.sort(uniq)]


def label_coeffs(route: Route, x: float, y: float, yaw: float, s0: float, depth: float = 20.0
                 ) -> CenterlineCoeffs:
    """Ground-truth cubic label for the view from pose (x, y, yaw)."""
    pts = centerline_samples(route, x, y, yaw, s0, depth)
    coeffs, _ = fit_centerline(pts, route.lane_width)
    return coeffs

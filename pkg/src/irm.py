"""Hierarchical Information Roadmaps.

The Local IRM is a dense 8-connected grid graph over the rolling RiskMap
window; the Global IRM is a sparse graph of breadcrumbs (sampled from the
Pose Graph) and frontiers (covered/uncovered boundary clusters).  Both are
``networkx.Graph`` instances so planners and tests share the graph toolbox.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from belief import CoverageBelief, PoseGraph, RiskMap, prior_p_covered
from log_config import get_logger
from world import DIRECTIONS, LETHAL_RISK, Cell, RobotPose, bresenham, disc_offsets

log = get_logger("irm")

SQRT2 = math.sqrt(2.0)


class IrmParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    breadcrumb_spacing: float = Field(2.0, gt=0.0)      # d̄_b, meters
    edge_max_distance: float = Field(8.0, gt=0.0)       # d̄_e, meters
    edge_max_risk: float = Field(0.7, gt=0.0, le=1.0)   # ρ̄_e
    neighborhood_radius: float | None = Field(None, gt=0.0)

    @property
    def radius(self) -> float:
        return self.neighborhood_radius or self.edge_max_distance


# ---------------------------------------------------------------------------
# Local IRM
# ---------------------------------------------------------------------------

@dataclass
class LocalIRM:
    graph: nx.Graph
    center: Cell
    resolution: float
    bounds: tuple[int, int, int, int]
    p_covered: dict[Cell, float]
    p_risk: dict[Cell, float]
    _footprints: dict = field(default_factory=dict, repr=False)

    def has(self, cell: Cell) -> bool:
        return cell in self.p_covered

    def in_window(self, cell: Cell) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= cell[0] <= x1 and y0 <= cell[1] <= y1

    def step_length(self, a: Cell, b: Cell) -> float:
        return self.resolution * (SQRT2 if a[0] != b[0] and a[1] != b[1] else 1.0)

    def edge_risk(self, a: Cell, b: Cell) -> float:
        return max(self.p_risk[a], self.p_risk[b])

    def footprint(self, cell: Cell, radius: float, line_of_sight: bool = True) -> frozenset[Cell]:
        """Nodes the coverage sensor is predicted to sweep from *cell*.

        Prediction runs on the belief: non-node cells (unknown or lethal)
        occlude the ray and contribute nothing themselves.
        """
        key = (cell, radius, line_of_sight)
        cached = self._footprints.get(key)
        if cached is not None:
            return cached
        out = []
        for dx, dy in disc_offsets(radius / self.resolution):
            c = (cell[0] + dx, cell[1] + dy)
            if c not in self.p_covered:
                continue
            if line_of_sight and any(m not in self.p_covered for m in bresenham(cell, c)[1:-1]):
                continue
            out.append(c)
        fp = frozenset(out)
        self._footprints[key] = fp
        return fp

    def dump(self) -> list[str]:
        ids = {c: i for i, c in enumerate(sorted(self.graph.nodes, key=lambda c: (c[1], c[0])))}
        res = self.resolution
        lines = [
            f"node {ids[c]} local {(c[0] + 0.5) * res:.3f} {(c[1] + 0.5) * res:.3f} "
            f"{self.p_risk[c]:.6f} {self.p_covered[c]:.6f} 0"
            for c in ids
        ]
        for a, b, data in sorted(self.graph.edges(data=True), key=lambda e: (ids[e[0]], ids[e[1]])):
            ia, ib = sorted((ids[a], ids[b]))
            lines.append(f"edge {ia} {ib} {data['d']:.6f} {data['rho']:.6f}")
        return lines


def build_local_irm(
    riskmap: RiskMap,
    coverage_belief: CoverageBelief,
    pose: RobotPose,
    resolution: float = 1.0,
) -> LocalIRM:
    """One node per known sub-lethal window cell, 8-connected edges."""
    center = pose.cell(resolution)
    p_risk: dict[Cell, float] = {}
    p_cov: dict[Cell, float] = {}
    for c in riskmap.window_cells():
        r = riskmap.risk(c)
        if r is None or r >= LETHAL_RISK:
            continue
        p_risk[c] = r
        p_cov[c] = prior_p_covered(coverage_belief, c)
    if not p_risk:
        p_risk[center] = 0.0
        p_cov[center] = prior_p_covered(coverage_belief, center)

    graph = nx.Graph()
    for c in p_risk:
        graph.add_node(c, p_risk=p_risk[c], p_covered=p_cov[c])
    # E, SE, S, SW cover every undirected 8-neighbour pair once
    half_dirs = (DIRECTIONS[0], DIRECTIONS[7], DIRECTIONS[6], DIRECTIONS[5])
    for c in p_risk:
        for dx, dy in half_dirs:
            n = (c[0] + dx, c[1] + dy)
            if n in p_risk:
                d = resolution * (SQRT2 if dx and dy else 1.0)
                graph.add_edge(c, n, d=d, rho=max(p_risk[c], p_risk[n]))

    return LocalIRM(
        graph=graph,
        center=center,
        resolution=resolution,
        bounds=riskmap.bounds(),
        p_covered=p_cov,
        p_risk=p_risk,
    )


# ---------------------------------------------------------------------------
# Frontier detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrontierCandidate:
    cell: Cell                   # centroid snapped to the nearest member
    members: frozenset[Cell]
    area: int                    # uncovered, non-lethal cells bordered by the cluster

    @property
    def p_covered(self) -> float:
        return len(self.members) / (len(self.members) + self.area)


def _open_cell(c: Cell, coverage_belief: CoverageBelief, riskmap: RiskMap) -> bool:
    return (
        coverage_belief.in_bounds(c)
        and not coverage_belief.is_covered(c)
        and c not in coverage_belief.lethal
        and not riskmap.is_lethal(c)
    )


def detect_frontiers(coverage_belief: CoverageBelief, riskmap: RiskMap) -> list[FrontierCandidate]:
    """Clusters of covered traversable cells that touch open uncovered space."""
    boundary: dict[Cell, set[Cell]] = {}
    for c in coverage_belief.covered_cells():
        if c in coverage_belief.lethal or riskmap.is_lethal(c):
            continue
        opened = set()
        for dx, dy in DIRECTIONS:
            n = (c[0] + dx, c[1] + dy)
            if _open_cell(n, coverage_belief, riskmap):
                opened.add(n)
        if opened:
            boundary[c] = opened
    if not boundary:
        return []

    xs = [c[0] for c in boundary]
    ys = [c[1] for c in boundary]
    x0, y0 = min(xs), min(ys)
    mask = np.zeros((max(ys) - y0 + 1, max(xs) - x0 + 1), dtype=bool)
    for x, y in boundary:
        mask[y - y0, x - x0] = True
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))

    clusters: list[list[Cell]] = [[] for _ in range(count)]
    for yy, xx in zip(*np.nonzero(labels)):
        clusters[labels[yy, xx] - 1].append((int(xx) + x0, int(yy) + y0))

    out = []
    for members in clusters:
        mx = sum(c[0] for c in members) / len(members)
        my = sum(c[1] for c in members) / len(members)
        rep = min(members, key=lambda c: ((c[0] - mx) ** 2 + (c[1] - my) ** 2, c[1], c[0]))
        opened = set().union(*(boundary[c] for c in members))
        out.append(FrontierCandidate(cell=rep, members=frozenset(members), area=len(opened)))
    return out


# ---------------------------------------------------------------------------
# Edge metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeMetrics:
    d: float
    rho: float
    path: tuple[Cell, ...]


def edge_metrics(
    a: Cell,
    b: Cell,
    riskmap: RiskMap,
    resolution: float = 1.0,
    max_distance: float = math.inf,
) -> EdgeMetrics | None:
    """A* over known sub-lethal RiskMap cells; ``None`` rejects the edge."""
    if not (riskmap.is_free(a) and riskmap.is_free(b)):
        return None

    def h(c: Cell) -> float:
        dx, dy = abs(c[0] - b[0]), abs(c[1] - b[1])
        return resolution * (max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy))

    counter = itertools.count()
    g = {a: 0.0}
    parent: dict[Cell, Cell] = {}
    heap = [(h(a), next(counter), a)]
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == b:
            break
        closed.add(cur)
        for dx, dy in DIRECTIONS:
            n = (cur[0] + dx, cur[1] + dy)
            if n in closed or not riskmap.is_free(n):
                continue
            ng = g[cur] + resolution * (SQRT2 if dx and dy else 1.0)
            if ng > max_distance + 1e-9:
                continue
            if ng < g.get(n, math.inf) - 1e-12:
                g[n] = ng
                parent[n] = cur
                heapq.heappush(heap, (ng + h(n), next(counter), n))
    if b not in g:
        return None

    path = [b]
    while path[-1] != a:
        path.append(parent[path[-1]])
    path.reverse()
    rho = max(riskmap.values[c] for c in path)
    return EdgeMetrics(d=g[b], rho=rho, path=tuple(path))


# ---------------------------------------------------------------------------
# Global IRM
# ---------------------------------------------------------------------------

BREADCRUMB = "breadcrumb"
FRONTIER = "frontier"


@dataclass
class GlobalIRM:
    params: IrmParams = field(default_factory=IrmParams)
    resolution: float = 1.0
    graph: nx.Graph = field(default_factory=nx.Graph)
    next_node_id: int = 0
    next_edge_id: int = 0
    pose_cursor: int = 0
    frontier_events: int = 0

    # ---- construction -----------------------------------------------------

    def _add_node(self, cell: Cell, kind: str, p_covered: float, area: int) -> int:
        nid = self.next_node_id
        self.next_node_id += 1
        self.graph.add_node(nid, kind=kind, cell=cell, p_covered=p_covered, area=area)
        return nid

    def add_breadcrumb(self, cell: Cell) -> int:
        return self._add_node(cell, BREADCRUMB, 1.0, 0)

    def add_frontier(self, cell: Cell, p_covered: float, area: int) -> int:
        self.frontier_events += 1
        return self._add_node(cell, FRONTIER, p_covered, area)

    def add_edge(
        self, a: int, b: int, d: float, rho: float, path: Sequence[Cell] | None = None,
    ) -> int:
        """Insert or refresh an edge; an existing edge keeps its id.

        *path* is the cell geometry from ``a`` to ``b``; a refresh without
        one keeps the stored geometry.
        """
        if self.graph.has_edge(a, b):
            data = self.graph.edges[a, b]
            data.update(d=d, rho=rho)
            if path is not None:
                data["path"] = tuple(path)
            return data["eid"]
        eid = self.next_edge_id
        self.next_edge_id += 1
        self.graph.add_edge(a, b, d=d, rho=rho, eid=eid, path=tuple(path) if path is not None else None)
        return eid

    def edge_path(self, a: int, b: int) -> list[Cell] | None:
        """Stored cells of edge ``a``-``b`` ordered from ``a``, ``None`` if unknown."""
        path = self.graph.edges[a, b].get("path")
        if not path:
            return None
        if path[0] == self.cell(a):
            return list(path)
        return list(reversed(path))

    def remove_node(self, nid: int) -> None:
        self.graph.remove_node(nid)

    # ---- queries ----------------------------------------------------------

    def kind(self, nid: int) -> str:
        return self.graph.nodes[nid]["kind"]

    def cell(self, nid: int) -> Cell:
        return self.graph.nodes[nid]["cell"]

    def area(self, nid: int) -> int:
        return self.graph.nodes[nid]["area"]

    def breadcrumbs(self) -> list[int]:
        return sorted(n for n, k in self.graph.nodes(data="kind") if k == BREADCRUMB)

    def frontiers(self) -> list[int]:
        return sorted(n for n, k in self.graph.nodes(data="kind") if k == FRONTIER)

    def distance(self, a: Cell, b: Cell) -> float:
        return self.resolution * math.dist(a, b)

    def nearest_breadcrumb(self, cell: Cell) -> int | None:
        crumbs = self.breadcrumbs()
        if not crumbs:
            return None
        return min(crumbs, key=lambda n: (self.distance(self.cell(n), cell), n))

    def validate(self) -> list[str]:
        """Violated invariants, empty when the graph is consistent."""
        problems = []
        p = self.params
        crumbs = self.breadcrumbs()
        for i, a in enumerate(crumbs):
            for b in crumbs[i + 1:]:
                if self.distance(self.cell(a), self.cell(b)) < p.breadcrumb_spacing - 1e-9:
                    problems.append(f"breadcrumbs {a} and {b} closer than {p.breadcrumb_spacing}")
        for a, b, data in self.graph.edges(data=True):
            if not data["d"] < p.edge_max_distance:
                problems.append(f"edge {a}-{b} distance {data['d']:.3f} >= {p.edge_max_distance}")
            if not data["rho"] < p.edge_max_risk:
                problems.append(f"edge {a}-{b} risk {data['rho']:.3f} >= {p.edge_max_risk}")
        for f in self.frontiers():
            if self.graph.degree(f) == 0:
                problems.append(f"frontier {f} is isolated")
        kinds = set(k for _, k in self.graph.nodes(data="kind"))
        if not kinds <= {BREADCRUMB, FRONTIER}:
            problems.append(f"unexpected node kinds {kinds}")
        return problems

    def dump(self) -> list[str]:
        res = self.resolution
        lines = []
        for n in sorted(self.graph.nodes):
            a = self.graph.nodes[n]
            x, y = a["cell"]
            lines.append(
                f"node {n} {a['kind']} {(x + 0.5) * res:.3f} {(y + 0.5) * res:.3f} "
                f"0.000000 {a['p_covered']:.6f} {a['area']}"
            )
        for a, b, data in sorted(self.graph.edges(data=True), key=lambda e: e[2]["eid"]):
            lo, hi = sorted((a, b))
            lines.append(f"edge {lo} {hi} {data['d']:.6f} {data['rho']:.6f}")
        return lines


def _try_connect(
    irm: GlobalIRM, cell: Cell, riskmap: RiskMap, exclude: int | None = None,
) -> list[tuple[int, EdgeMetrics]]:
    p = irm.params
    found = []
    for n in sorted(irm.graph.nodes):
        if n == exclude:
            continue
        other = irm.cell(n)
        if irm.distance(cell, other) > p.radius or not riskmap.in_window(other):
            continue
        m = edge_metrics(cell, other, riskmap, irm.resolution, p.edge_max_distance)
        if m is not None and m.d < p.edge_max_distance and m.rho < p.edge_max_risk:
            found.append((n, m))
    return found


def _edge_invalidated(
    m: EdgeMetrics | None, a: Cell, b: Cell, riskmap: RiskMap,
) -> bool:
    # only in-window evidence removes a stored edge
    if m is not None:
        return True
    return riskmap.is_lethal(a) or riskmap.is_lethal(b)


def update_global_irm(
    global_irm: GlobalIRM,
    pose_graph: PoseGraph,
    frontiers: Sequence[FrontierCandidate],
    riskmap: RiskMap,
) -> GlobalIRM:
    """One FrontierManager/breadcrumb/edge pass over the Global IRM."""
    irm = global_irm
    p = irm.params
    res = irm.resolution

    # Breadcrumbs from every pose appended since the previous call
    for pose in pose_graph.poses[irm.pose_cursor:]:
        cell = pose.cell(res)
        if all(irm.distance(cell, irm.cell(b)) >= p.breadcrumb_spacing for b in irm.breadcrumbs()):
            for f in irm.frontiers():
                if irm.cell(f) == cell:
                    irm.remove_node(f)
            irm.add_breadcrumb(cell)
    irm.pose_cursor = len(pose_graph.poses)

    # Prune frontiers whose boundary vanished, refresh the survivors
    owner = {}
    for idx, cand in enumerate(frontiers):
        for c in cand.members:
            owner[c] = idx
    claimed: set[int] = set()
    for f in irm.frontiers():
        idx = owner.get(irm.cell(f))
        if idx is None or idx in claimed:
            irm.remove_node(f)
            continue
        claimed.add(idx)
        irm.graph.nodes[f].update(area=frontiers[idx].area, p_covered=frontiers[idx].p_covered)

    # Insert new frontiers that can reach at least one nearby node
    robot = pose_graph.last.cell(res) if pose_graph.poses else None
    crumb_cells = {irm.cell(b) for b in irm.breadcrumbs()}
    for idx, cand in enumerate(frontiers):
        if idx in claimed:
            continue
        reps = [cand.cell]
        if robot is not None:
            near = min(cand.members, key=lambda c: (math.dist(c, robot), c[1], c[0]))
            if near != cand.cell:
                reps.append(near)
        for rep in reps:
            if rep in crumb_cells or not riskmap.in_window(rep):
                continue
            links = _try_connect(irm, rep, riskmap)
            if links:
                fid = irm.add_frontier(rep, cand.p_covered, cand.area)
                for n, m in links:
                    irm.add_edge(fid, n, m.d, m.rho, m.path)
                log.debug("frontier %d added at %s (area %d)", fid, rep, cand.area)
                break

    # Recompute edges among nodes around the robot
    if robot is not None:
        near_nodes = [
            n for n in sorted(irm.graph.nodes)
            if irm.distance(irm.cell(n), robot) <= p.radius and riskmap.in_window(irm.cell(n))
        ]
        seen = set()
        for a in near_nodes:
            for b in sorted(irm.graph.nodes):
                if a == b or (min(a, b), max(a, b)) in seen:
                    continue
                ca, cb = irm.cell(a), irm.cell(b)
                if irm.distance(ca, cb) > p.radius or not riskmap.in_window(cb):
                    continue
                seen.add((min(a, b), max(a, b)))
                m = edge_metrics(ca, cb, riskmap, res, p.edge_max_distance)
                if m is not None and m.d < p.edge_max_distance and m.rho < p.edge_max_risk:
                    irm.add_edge(a, b, m.d, m.rho, m.path)
                elif irm.graph.has_edge(a, b) and _edge_invalidated(m, ca, cb, riskmap):
                    irm.graph.remove_edge(a, b)

    for f in irm.frontiers():
        if irm.graph.degree(f) == 0:
            irm.remove_node(f)
    return irm


# ---------------------------------------------------------------------------
# Routing helpers shared by the planners
# ---------------------------------------------------------------------------

Weight = str | Callable[[Cell, Cell, dict], float]


def local_route(
    local_irm: LocalIRM,
    start: Cell,
    waypoints: Sequence[Cell],
    weight: Weight = "d",
) -> list[Cell]:
    """Path inside the Local IRM toward the furthest reachable waypoint.

    When that waypoint is *start* itself (or none is reachable), heads for
    the reachable node closest to the following waypoint.  Returns the cell
    sequence including *start*.
    """
    if start not in local_irm.graph or not waypoints:
        return [start]
    dist, paths = nx.single_source_dijkstra(local_irm.graph, start, weight=weight)
    last = max((i for i, w in enumerate(waypoints) if w in paths), default=-1)
    if last == len(waypoints) - 1 or (last >= 0 and waypoints[last] != start):
        return paths[waypoints[last]]
    goal = waypoints[last + 1]
    best = min(paths, key=lambda c: (math.dist(c, goal), dist[c], c[1], c[0]))
    return paths[best]


def global_route(
    global_irm: GlobalIRM,
    local_irm: LocalIRM,
    start: Cell,
    chain: Sequence[int],
    weight: Weight = "d",
) -> list[Cell]:
    """Cell path from *start* along a chain of Global IRM nodes.

    Joins the chain at its furthest node reachable inside the Local IRM,
    then follows the stored edge geometry.  The stored cells were free when
    the edge was measured, so the route survives the window forgetting them.
    Falls back to :func:`local_route` when no chain node is reachable.
    """
    cells = [global_irm.cell(n) for n in chain]
    if start not in local_irm.graph or not cells:
        return [start]
    paths = nx.single_source_dijkstra_path(local_irm.graph, start, weight=weight)
    entry = max((i for i, c in enumerate(cells) if c in paths), default=-1)
    if entry < 0:
        return local_route(local_irm, start, cells, weight=weight)
    route = list(paths[cells[entry]])
    for a, b in zip(chain[entry:], chain[entry + 1:]):
        leg = global_irm.edge_path(a, b) if global_irm.graph.has_edge(a, b) else None
        if leg is None:
            break
        route.extend(leg[1:])
    if len(route) == 1:
        return local_route(local_irm, start, cells, weight=weight)
    return route


def anchor_breadcrumb(global_irm: GlobalIRM, local_irm: LocalIRM, start: Cell) -> tuple[int, float] | None:
    """Breadcrumb closest by Local IRM path length, Euclidean nearest as fallback.

    Returns ``(node id, local path length)``; the length is ``inf`` for the
    fallback.
    """
    crumbs = global_irm.breadcrumbs()
    if not crumbs:
        return None
    if start in local_irm.graph:
        dist = nx.single_source_dijkstra_path_length(local_irm.graph, start, weight="d")
        reachable = [(dist[global_irm.cell(b)], b) for b in crumbs if global_irm.cell(b) in dist]
        if reachable:
            d, b = min(reachable)
            return b, d
    return global_irm.nearest_breadcrumb(start), math.inf

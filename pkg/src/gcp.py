"""Global Coverage Planner.

QMDP over the Global IRM: frontiers are absorbing states paying
``k_I * area`` (one bit per bordered uncovered cell), breadcrumbs pay the
weighted edge cost to move.  Value iteration gives V and Q_MDP; the pose
belief then picks the action out of the most likely node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field

from irm import FRONTIER, GlobalIRM
from log_config import get_logger
from reward import RewardWeights, action_cost

log = get_logger("gcp")

NEG_INF = -math.inf


class GcpParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epsilon: float = Field(1e-6, gt=0.0)
    gamma: float = Field(1.0, gt=0.0, le=1.0)
    max_sweeps: int = Field(10_000, ge=1)


class BeliefError(ValueError):
    pass


class EmptyBeliefError(BeliefError):
    pass


class UnknownNodeError(BeliefError):
    pass


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseBelief:
    weights: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        if any(w < 0.0 for _, w in self.weights):
            raise BeliefError("pose belief weights must be non-negative")
        if self.weights and not math.isclose(sum(w for _, w in self.weights), 1.0, abs_tol=1e-9):
            raise BeliefError("pose belief weights must sum to 1")

    @classmethod
    def point_mass(cls, node: int) -> "PoseBelief":
        return cls(((node, 1.0),))

    @classmethod
    def from_mapping(cls, weights: Mapping[int, float]) -> "PoseBelief":
        total = sum(weights.values())
        if total <= 0.0:
            raise EmptyBeliefError("pose belief has no mass")
        return cls(tuple(sorted((n, w / total) for n, w in weights.items())))

    def mode(self) -> int:
        return min(self.weights, key=lambda nw: (-nw[1], nw[0]))[0]


@dataclass
class GlobalValueTable:
    graph: nx.Graph
    values: dict[int, float]
    q: dict[tuple[int, int], float]
    costs: dict[tuple[int, int], float]
    iterations: int
    residual: float
    residuals: list[float] = field(default_factory=list)
    exploration_complete: bool = False
    weights: RewardWeights = field(default_factory=RewardWeights)
    gamma: float = 1.0

    def is_frontier(self, node: int) -> bool:
        return self.graph.nodes[node]["kind"] == FRONTIER

    def edge_id(self, a: int, b: int) -> int:
        return self.graph.edges[a, b]["eid"]

    def greedy_successor(self, node: int) -> int | None:
        best, best_q = None, NEG_INF
        for m in sorted(self.graph.neighbors(node)):
            qv = self.q[(node, m)]
            if qv > best_q:
                best, best_q = m, qv
        return best

    def chain(self, start: int) -> list[int]:
        """Greedy value chain from *start*; ends at a frontier when V is finite."""
        out = [start]
        cur = start
        for _ in range(self.graph.number_of_nodes()):
            if self.is_frontier(cur):
                break
            nxt = self.greedy_successor(cur)
            if nxt is None:
                break
            out.append(nxt)
            cur = nxt
        return out

    def dump(self) -> list[str]:
        return [f"node {n} {v:.6f}" for n, v in sorted(self.values.items())]


@dataclass(frozen=True)
class GlobalAction:
    source: int
    target: int
    edge_id: int | None
    value: float
    frontier: int | None
    chain: tuple[int, ...]


# ---------------------------------------------------------------------------
# Value iteration
# ---------------------------------------------------------------------------

def _reaches_frontier(graph: nx.Graph) -> set[int]:
    """Non-frontier nodes with a path to some frontier through non-frontier nodes."""
    inner = graph.subgraph(n for n in graph if graph.nodes[n]["kind"] != FRONTIER)
    out: set[int] = set()
    for comp in nx.connected_components(inner):
        if any(graph.nodes[m]["kind"] == FRONTIER for n in comp for m in graph.neighbors(n)):
            out |= comp
    return out


def value_iteration(
    global_irm: GlobalIRM,
    weights: RewardWeights,
    epsilon: float = 1e-6,
    gamma: float = 1.0,
    max_sweeps: int = 10_000,
) -> GlobalValueTable:
    """Jacobi value iteration from a finite lower bound.

    Breadcrumbs that can reach a frontier start below any reward-to-go
    (smallest frontier reward minus the cost of every edge), so every
    residual is finite.  Breadcrumbs cut off from all frontiers stay at
    ``-inf``.
    """
    graph = global_irm.graph.copy()
    order = list(graph.nodes)
    costs: dict[tuple[int, int], float] = {}
    for a, b, data in graph.edges(data=True):
        c = weights.k_C * action_cost(data["d"], data["rho"], 0, weights)
        costs[(a, b)] = costs[(b, a)] = c

    frontiers = [n for n in order if graph.nodes[n]["kind"] == FRONTIER]
    if not frontiers:
        values = {n: 0.0 for n in order}
        q = {k: 0.0 for k in costs}
        return GlobalValueTable(graph, values, q, costs, 0, 0.0, [], True, weights, gamma)

    rewards = {f: weights.k_I * graph.nodes[f]["area"] for f in frontiers}
    floor = min(0.0, min(rewards.values())) - sum(costs.values()) / 2.0 - 1.0
    live = _reaches_frontier(graph)
    values = {n: rewards.get(n, floor if n in live else NEG_INF) for n in order}
    residuals: list[float] = []
    residual = math.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        new = dict(values)
        residual = 0.0
        for n in live:
            best = max(-costs[(n, m)] + gamma * values[m] for m in graph.neighbors(n) if values[m] != NEG_INF)
            residual = max(residual, abs(best - values[n]))
            new[n] = best
        values = new
        residuals.append(residual)
        if residual < epsilon:
            break
    else:
        log.warning("value iteration stopped after %d sweeps, residual %.3g", sweeps, residual)

    q = {(a, b): -c + gamma * values[b] for (a, b), c in costs.items()}
    log.debug("value iteration: %d sweeps, %d frontiers, residual %.3g", sweeps, len(frontiers), residual)
    return GlobalValueTable(graph, values, q, costs, sweeps, residual, residuals, False, weights, gamma)


# ---------------------------------------------------------------------------
# QMDP action selection
# ---------------------------------------------------------------------------

def _q_mdp(table: GlobalValueTable, q: int, m: int) -> float:
    if (q, m) in table.q:
        return table.q[(q, m)]
    if q == m:
        return table.values[m]
    # frontiers absorb: a path to m may not pass through any other frontier
    open_nodes = [n for n in table.graph if n in (q, m) or not table.is_frontier(n)]
    try:
        cost = nx.shortest_path_length(
            table.graph.subgraph(open_nodes), q, m, weight=lambda a, b, _: table.costs[(a, b)]
        )
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return NEG_INF
    return -cost + table.gamma * table.values[m]


def qmdp_action(table: GlobalValueTable, pose_belief: PoseBelief) -> GlobalAction | None:
    """``argmax_a sum_q b(q) Q_MDP(q, a)`` over moves out of the likeliest node.

    Returns ``None`` when exploration is complete or no frontier is reachable.
    """
    if not pose_belief.weights:
        raise EmptyBeliefError("pose belief is empty")
    for n, _ in pose_belief.weights:
        if n not in table.values:
            raise UnknownNodeError(f"belief node {n} is not in the value table")
    if table.exploration_complete:
        return None

    origin = pose_belief.mode()
    if table.is_frontier(origin):
        return GlobalAction(origin, origin, None, table.values[origin], origin, (origin,))

    best: tuple[float, int, int] | None = None
    for m in table.graph.neighbors(origin):
        value = sum(w * _q_mdp(table, n, m) for n, w in pose_belief.weights if w > 0.0)
        if value == NEG_INF or math.isnan(value):
            continue
        key = (-value, m, table.edge_id(origin, m))
        if best is None or key < best:
            best = key
    if best is None:
        return None

    value, target, eid = -best[0], best[1], best[2]
    chain = tuple([origin] + table.chain(target))
    frontier = chain[-1] if table.is_frontier(chain[-1]) else None
    return GlobalAction(origin, target, eid, value, frontier, chain)

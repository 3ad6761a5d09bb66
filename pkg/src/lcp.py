"""Local Coverage Planner: POMCP with UCT over the Local IRM.

Observations are determinized (the predicted footprint of the believed map),
so each history has one child per macro action and the belief tree is a
plain search tree keyed by action history.  The rollout is greedy in
information gain and falls back to the global guidance once the local gain
is zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from irm import LocalIRM, local_route
from log_config import get_logger
from policy import Policy, PolicySource, moves_from_path
from reward import RewardWeights, action_cost, binary_entropy, step_reward
from world import DIRECTIONS, WAIT, Cell, SensorSpec, heading_steps

log = get_logger("lcp")

NEG_INF = -math.inf


class LcpParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    depth: int = Field(4, ge=1)                      # D, macros per policy
    macro_length: int = Field(6, ge=1)               # L, primitives per macro
    budget: int = Field(3000, ge=1)                  # simulations
    time_limit: float | None = Field(None, gt=0.0)   # seconds
    exploration_scale: float = Field(2.0, ge=0.0)
    info_epsilon: float = Field(1e-3, ge=0.0)        # bits

    @property
    def horizon(self) -> int:
        return self.depth * self.macro_length


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MacroAction:
    direction: int            # index into DIRECTIONS, or WAIT for hold
    cells: tuple[Cell, ...]   # cells entered, in order

    @property
    def length(self) -> int:
        return len(self.cells)

    @property
    def is_hold(self) -> bool:
        return self.direction == WAIT

    @property
    def moves(self) -> tuple[int, ...]:
        return (self.direction,) * self.length

    @property
    def displacement(self) -> Cell:
        dx, dy = DIRECTIONS[self.direction] if not self.is_hold else (0, 0)
        return dx * self.length, dy * self.length


HOLD = MacroAction(WAIT, ())


@dataclass(frozen=True)
class LocalSimState:
    cell: Cell
    heading: int
    overlay: frozenset[Cell] = frozenset()
    discount: float = 1.0


@dataclass
class Guidance:
    """Global guidance inside the window: a target cell and its distance field."""

    target: Cell
    distance: dict[Cell, float]
    waypoints: tuple[Cell, ...] = ()
    route: tuple[Cell, ...] = ()

    @classmethod
    def toward(cls, local_irm: LocalIRM, start: Cell, waypoints: Sequence[Cell]) -> "Guidance | None":
        if not waypoints or start not in local_irm.graph:
            return None
        path = local_route(local_irm, start, waypoints)
        target = path[-1]
        dist = nx.single_source_dijkstra_path_length(local_irm.graph, target, weight="d")
        return cls(target=target, distance=dist, waypoints=tuple(waypoints))

    @classmethod
    def along(cls, local_irm: LocalIRM, route: Sequence[Cell], waypoints: Sequence[Cell] = ()) -> "Guidance | None":
        """Guidance that follows a precomputed *route* starting at the robot.

        The target is the last cell of the route prefix still inside the
        Local IRM.
        """
        if not route or route[0] not in local_irm.graph:
            return None
        k = 1
        while k < len(route) and route[k] in local_irm.graph:
            k += 1
        target = route[k - 1]
        dist = nx.single_source_dijkstra_path_length(local_irm.graph, target, weight="d")
        return cls(target=target, distance=dist, waypoints=tuple(waypoints), route=tuple(route))

    def progress(self, a: Cell, b: Cell) -> float:
        return self.distance.get(a, math.inf) - self.distance.get(b, math.inf)


@dataclass
class TreeNode:
    state: LocalSimState
    actions: list[MacroAction]
    untried: list[int]
    n: int = 0
    n_a: np.ndarray = None
    q_a: np.ndarray = None
    i_a: np.ndarray = None
    outcomes: dict[int, tuple[LocalSimState, float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        k = len(self.actions)
        self.n_a = np.zeros(k, dtype=int)
        self.q_a = np.zeros(k, dtype=float)
        self.i_a = np.zeros(k, dtype=float)


@dataclass
class BeliefTree:
    nodes: dict[tuple[int, ...], TreeNode] = field(default_factory=dict)
    max_abs_return: float = 0.0

    def root(self) -> TreeNode:
        return self.nodes[()]


@dataclass(frozen=True)
class RootStat:
    action: int
    direction: int
    visits: int
    value: float
    info: float


@dataclass
class LocalPlan:
    policy: Policy
    root_stats: list[RootStat]
    exhausted: bool = False
    stuck: bool = False
    simulations: int = 0
    tree: BeliefTree | None = None

    def trace(self) -> list[str]:
        return [f"{s.action} {s.visits} {s.value:.6f}" for s in self.root_stats]


# ---------------------------------------------------------------------------
# Generative model
# ---------------------------------------------------------------------------

def enumerate_macro_actions(local_irm: LocalIRM, cell: Cell, macro_length: int = 6) -> list[MacroAction]:
    """Straight-line macros in the 8 directions, truncated at the first non-node cell."""
    out = []
    for i, (dx, dy) in enumerate(DIRECTIONS):
        cells = []
        cur = cell
        for _ in range(macro_length):
            nxt = (cur[0] + dx, cur[1] + dy)
            if not local_irm.has(nxt):
                break
            cells.append(nxt)
            cur = nxt
        if cells:
            out.append(MacroAction(i, tuple(cells)))
    return out or [HOLD]


def simulate_step(
    local_irm: LocalIRM,
    state: LocalSimState,
    macro: MacroAction,
    sensor: SensorSpec,
    weights: RewardWeights,
) -> tuple[LocalSimState, float, float]:
    """Apply *macro* on the believed map.

    Returns ``(next_state, reward, info)`` where ``reward`` is the
    per-step discounted sum of step rewards and ``info`` its discounted
    information part (bits).
    """
    if macro.is_hold:
        return state, 0.0, 0.0
    overlay = set(state.overlay)
    cur, heading = state.cell, state.heading
    reward = info_total = 0.0
    disc = 1.0
    for nxt in macro.cells:
        d = local_irm.step_length(cur, nxt)
        rho = local_irm.edge_risk(cur, nxt)
        cost = action_cost(d, rho, heading_steps(heading, macro.direction), weights)
        info = 0.0
        for c in local_irm.footprint(nxt, sensor.coverage_radius, sensor.line_of_sight):
            if c not in overlay:
                overlay.add(c)
                p = local_irm.p_covered[c]
                if 0.0 < p < 1.0:
                    info += binary_entropy(p)
        reward += disc * step_reward(info, cost, weights)
        info_total += disc * weights.k_I * info
        disc *= weights.gamma
        cur, heading = nxt, macro.direction
    nxt_state = LocalSimState(cur, heading, frozenset(overlay), state.discount * disc)
    return nxt_state, reward, info_total


def evaluate_primitive_sequence(
    local_irm: LocalIRM,
    state: LocalSimState,
    moves: Sequence[int],
    sensor: SensorSpec,
    weights: RewardWeights,
) -> tuple[list[float], LocalSimState]:
    """Undiscounted step rewards of *moves* from *state*.

    A step into a non-node cell (unknown or believed lethal) scores ``-inf``
    and ends the evaluation.
    """
    rewards: list[float] = []
    for move in moves:
        dx, dy = DIRECTIONS[move]
        nxt = (state.cell[0] + dx, state.cell[1] + dy)
        if not local_irm.has(nxt) or not local_irm.has(state.cell):
            rewards.append(NEG_INF)
            break
        state, r, _ = simulate_step(local_irm, state, MacroAction(move, (nxt,)), sensor, weights)
        rewards.append(r)
    return rewards, state


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

class _Search:
    def __init__(self, local_irm, root, guidance, params, sensor, weights, rng):
        self.irm = local_irm
        self.guidance = guidance
        self.p = params
        self.sensor = sensor
        self.weights = weights
        self.rng = rng
        self.tree = BeliefTree()
        self.tree.nodes[()] = self._new_node(root)

    def _new_node(self, state: LocalSimState) -> TreeNode:
        actions = enumerate_macro_actions(self.irm, state.cell, self.p.macro_length)
        return TreeNode(state, actions, [int(i) for i in self.rng.permutation(len(actions))])

    def _step(self, node: TreeNode, a: int) -> tuple[LocalSimState, float, float]:
        out = node.outcomes.get(a)
        if out is None:
            out = simulate_step(self.irm, node.state, node.actions[a], self.sensor, self.weights)
            node.outcomes[a] = out
        return out

    def _gamma_len(self, macro: MacroAction) -> float:
        return self.weights.gamma ** macro.length

    def _select(self, node: TreeNode) -> int:
        c = self.p.exploration_scale * self.tree.max_abs_return
        bonus = c * np.sqrt(math.log(node.n) / node.n_a)
        return int(np.argmax(node.q_a + bonus))

    def rollout(self, state: LocalSimState, depth: int) -> tuple[float, float]:
        total = info_total = 0.0
        disc = 1.0
        for _ in range(depth, self.p.depth):
            actions = enumerate_macro_actions(self.irm, state.cell, self.p.macro_length)
            if actions[0].is_hold:
                break
            gains = np.array([self._novelty(state, m) for m in actions])
            if gains.max() > 0.0:
                best = np.flatnonzero(gains == gains.max())
            elif self.guidance is not None:
                prog = np.array([self.guidance.progress(state.cell, m.cells[-1]) for m in actions])
                best = np.flatnonzero(prog == prog.max())
            else:
                best = np.arange(len(actions))
            macro = actions[int(best[self.rng.integers(len(best))])]
            state, r, i = simulate_step(self.irm, state, macro, self.sensor, self.weights)
            total += disc * r
            info_total += disc * i
            disc *= self._gamma_len(macro)
        return total, info_total

    def _novelty(self, state: LocalSimState, macro: MacroAction) -> float:
        fp = self.irm.footprint(macro.cells[-1], self.sensor.coverage_radius, self.sensor.line_of_sight)
        return float(sum(1 for c in fp - state.overlay if self.irm.p_covered[c] < 1.0))

    def simulate(self, history: tuple[int, ...], depth: int) -> tuple[float, float]:
        node = self.tree.nodes[history]
        if depth >= self.p.depth or node.actions[0].is_hold:
            return 0.0, 0.0
        if node.untried:
            a = node.untried.pop()
            child_state, r, i = self._step(node, a)
            self.tree.nodes[history + (a,)] = self._new_node(child_state)
            g_child, i_child = self.rollout(child_state, depth + 1)
        else:
            a = self._select(node)
            child_state, r, i = self._step(node, a)
            g_child, i_child = self.simulate(history + (a,), depth + 1)
        scale = self._gamma_len(node.actions[a])
        g = r + scale * g_child
        info = i + scale * i_child
        node.n += 1
        node.n_a[a] += 1
        node.q_a[a] += (g - node.q_a[a]) / node.n_a[a]
        node.i_a[a] += (info - node.i_a[a]) / node.n_a[a]
        self.tree.max_abs_return = max(self.tree.max_abs_return, abs(g))
        return g, info

    def greedy_sequence(self) -> list[MacroAction]:
        seq = []
        history: tuple[int, ...] = ()
        for _ in range(self.p.depth):
            node = self.tree.nodes.get(history)
            if node is None or node.n == 0:
                break
            tried = node.n_a > 0
            q = np.where(tried, node.q_a, NEG_INF)
            a = int(np.argmax(q))
            seq.append(node.actions[a])
            history = history + (a,)
        return seq


def pomcp_plan(
    local_irm: LocalIRM,
    root: LocalSimState,
    guidance: Guidance | None,
    params: LcpParams,
    sensor: SensorSpec,
    weights: RewardWeights,
    rng: np.random.Generator,
    anchor: int = 0,
) -> LocalPlan:
    """Plan a depth-D macro sequence from *root* and flatten it to primitives."""
    horizon = params.horizon
    search = _Search(local_irm, root, guidance, params, sensor, weights, rng)
    top = search.tree.root()
    if top.actions[0].is_hold:
        log.warning("no macro action available at %s", root.cell)
        return LocalPlan(Policy.hold(anchor, horizon, PolicySource.LCP), [], stuck=True, tree=search.tree)

    started = time.perf_counter()
    sims = 0
    while sims < params.budget:
        # the wall-clock limit never cuts the first simulation
        if sims and params.time_limit is not None and time.perf_counter() - started > params.time_limit:
            break
        search.simulate((), 0)
        sims += 1

    stats = [
        RootStat(i, m.direction, int(top.n_a[i]), float(top.q_a[i]), float(top.i_a[i]))
        for i, m in enumerate(top.actions)
    ]
    tried = [s for s in stats if s.visits > 0]
    best = max(tried, key=lambda s: (s.value, -s.action))
    exhausted = best.info < params.info_epsilon

    if exhausted and guidance is not None:
        if guidance.route and guidance.route[0] == root.cell:
            path = list(guidance.route)
        else:
            path = local_route(local_irm, root.cell, guidance.waypoints, weight=risk_weight(weights))
        moves = moves_from_path(path)[:horizon]
        source = PolicySource.GCP_GUIDED
    else:
        moves = tuple(a for m in search.greedy_sequence() for a in m.moves)[:horizon]
        source = PolicySource.LCP

    rewards, _ = evaluate_primitive_sequence(local_irm, root, moves, sensor, weights)
    if len(rewards) < len(moves) or NEG_INF in rewards:
        # a stored route leaves the believed map; nothing to predict there
        rewards = []
    policy = Policy(anchor, tuple(moves), horizon, source, tuple(rewards))
    log.debug(
        "pomcp: %d sims, best root %s Q=%.3f I=%.4f%s",
        sims, best.direction, best.value, best.info, " (exhausted)" if exhausted else "",
    )
    stuck = exhausted and not moves
    return LocalPlan(policy, stats, exhausted=exhausted, stuck=stuck, simulations=sims, tree=search.tree)


def risk_weight(weights: RewardWeights):
    def w(a, b, data):
        return weights.k_d * data["d"] + weights.k_rho * data["rho"]
    return w

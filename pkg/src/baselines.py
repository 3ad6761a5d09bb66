"""Comparison planners on the shared IRM substrate.

NBV  - sample viewpoints in the window, go to the best info-minus-distance one.
HFE  - pick the frontier with the best area/cost ratio, local scope first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from irm import GlobalIRM, LocalIRM, anchor_breadcrumb, global_route
from log_config import get_logger
from policy import Policy, PolicySource, moves_from_path
from reward import RewardWeights, info_gain
from world import Cell, SensorSpec

log = get_logger("baselines")


class NbvParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_samples: int = Field(30, ge=1)
    max_attempts_factor: int = Field(20, ge=1)


# ---------------------------------------------------------------------------
# Next-Best-View
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Viewpoint:
    cell: Cell
    path: tuple[Cell, ...]
    cost: float
    gain: float
    reward: float
    sample_index: int


@dataclass
class ViewpointPlan:
    policy: Policy
    viewpoint: Viewpoint | None
    candidates: list[Viewpoint]
    stuck: bool = False


def sample_viewpoints(
    local_irm: LocalIRM, start: Cell, n_samples: int, rng: np.random.Generator, max_attempts: int,
) -> list[Cell]:
    """Uniform window cells that are nodes other than *start*."""
    x0, y0, x1, y1 = local_irm.bounds
    out: list[Cell] = []
    for _ in range(max_attempts):
        if len(out) >= n_samples:
            break
        c = (int(rng.integers(x0, x1 + 1)), int(rng.integers(y0, y1 + 1)))
        if c != start and local_irm.has(c):
            out.append(c)
    return out


def nbv_plan(
    local_irm: LocalIRM,
    start: Cell,
    weights: RewardWeights,
    sensor: SensorSpec,
    params: NbvParams,
    rng: np.random.Generator,
    horizon: int,
    anchor: int = 0,
) -> ViewpointPlan:
    """Distance-only path to the sampled viewpoint maximizing ``k_I*I - k_C*k_d*len``."""
    samples = sample_viewpoints(
        local_irm, start, params.n_samples, rng, params.n_samples * params.max_attempts_factor,
    )
    dist, paths = nx.single_source_dijkstra(local_irm.graph, start, weight="d") \
        if start in local_irm.graph else ({}, {})

    candidates = []
    for i, c in enumerate(samples):
        if c not in dist:
            continue
        fp = local_irm.footprint(c, sensor.coverage_radius, sensor.line_of_sight)
        gain = info_gain(local_irm.p_covered, fp)
        reward = weights.k_I * gain - weights.k_C * weights.k_d * dist[c]
        candidates.append(Viewpoint(c, tuple(paths[c]), dist[c], gain, reward, i))

    if not candidates:
        log.warning("nbv: no reachable viewpoint among %d samples", len(samples))
        return ViewpointPlan(Policy.hold(anchor, horizon, PolicySource.NBV), None, [], stuck=True)

    best = max(candidates, key=lambda v: (v.reward, -v.sample_index))
    moves = moves_from_path(best.path)[:horizon]
    return ViewpointPlan(Policy(anchor, moves, horizon, PolicySource.NBV), best, candidates)


# ---------------------------------------------------------------------------
# Hierarchical frontier-based exploration
# ---------------------------------------------------------------------------

@dataclass
class FrontierPlan:
    policy: Policy
    frontier: int | None = None
    cost: float = math.inf
    score: float = 0.0
    scope: str = ""
    done: bool = False
    stuck: bool = False


def _score(area: int, cost: float, resolution: float) -> float:
    return area / max(cost, resolution)


def hfe_plan(
    global_irm: GlobalIRM,
    local_irm: LocalIRM,
    start: Cell,
    horizon: int,
    anchor: int = 0,
) -> FrontierPlan:
    frontiers = global_irm.frontiers()
    if not frontiers:
        return FrontierPlan(Policy.hold(anchor, horizon, PolicySource.HFE), done=True)
    res = local_irm.resolution

    dist, paths = nx.single_source_dijkstra(local_irm.graph, start, weight="d") \
        if start in local_irm.graph else ({}, {})
    local = [f for f in frontiers if global_irm.cell(f) in dist]
    if local:
        f = max(local, key=lambda n: (_score(global_irm.area(n), dist[global_irm.cell(n)], res), -n))
        cost = dist[global_irm.cell(f)]
        path = paths[global_irm.cell(f)]
        moves = moves_from_path(path)[:horizon]
        return FrontierPlan(
            Policy(anchor, moves, horizon, PolicySource.HFE), f, cost,
            _score(global_irm.area(f), cost, res), "local", stuck=not moves,
        )

    anchor_node = anchor_breadcrumb(global_irm, local_irm, start)
    if anchor_node is None:
        return FrontierPlan(Policy.hold(anchor, horizon, PolicySource.HFE), stuck=True)
    crumb, lead = anchor_node
    lead = 0.0 if math.isinf(lead) else lead
    gdist, gpaths = nx.single_source_dijkstra(global_irm.graph, crumb, weight="d")
    reachable = [f for f in frontiers if f in gdist]
    if not reachable:
        log.warning("hfe: no frontier reachable from breadcrumb %d", crumb)
        return FrontierPlan(Policy.hold(anchor, horizon, PolicySource.HFE), stuck=True)

    f = max(reachable, key=lambda n: (_score(global_irm.area(n), lead + gdist[n], res), -n))
    cost = lead + gdist[f]
    path = global_route(global_irm, local_irm, start, gpaths[f])
    moves = moves_from_path(path)[:horizon]
    return FrontierPlan(
        Policy(anchor, moves, horizon, PolicySource.HFE), f, cost,
        _score(global_irm.area(f), cost, res), "global", stuck=not moves,
    )

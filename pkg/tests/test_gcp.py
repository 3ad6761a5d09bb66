from __future__ import annotations

import math

import networkx as nx
import numpy as np
import pytest

from gcp import (
    BeliefError,
    EmptyBeliefError,
    PoseBelief,
    UnknownNodeError,
    qmdp_action,
    value_iteration,
)
from irm import GlobalIRM
from reward import RewardWeights

UNIT = RewardWeights(k_I=1.0, k_C=1.0, k_d=1.0, k_rho=0.0, k_mu=0.0)


def _path_abf() -> tuple[GlobalIRM, int, int, int]:
    irm = GlobalIRM()
    a = irm.add_breadcrumb((0, 0))
    b = irm.add_breadcrumb((1, 0))
    f = irm.add_frontier((2, 0), 0.5, 10)
    irm.add_edge(a, b, 1.0, 0.0)
    irm.add_edge(b, f, 1.0, 0.0)
    return irm, a, b, f


def _random_irm(seed: int, n: int = 50, n_frontiers: int = 8) -> GlobalIRM:
    rng = np.random.default_rng(seed)
    shape = nx.connected_watts_strogatz_graph(n, 4, 0.3, seed=seed)
    frontier_ids = set(int(i) for i in rng.choice(n, size=n_frontiers, replace=False))
    irm = GlobalIRM()
    for i in range(n):
        cell = (int(rng.integers(0, 100)), int(rng.integers(0, 100)))
        if i in frontier_ids:
            irm.add_frontier(cell, 0.5, int(rng.integers(1, 30)))
        else:
            irm.add_breadcrumb(cell)
    for u, v in shape.edges:
        irm.add_edge(u, v, float(rng.uniform(0.5, 7.9)), float(rng.uniform(0.0, 0.6)))
    return irm


def _dijkstra_values(irm: GlobalIRM, weights: RewardWeights) -> dict[int, float]:
    """Best reward-to-go per breadcrumb: max over frontiers of reward minus path cost.

    Frontiers absorb, so a path may only touch its own target frontier.
    """
    g = nx.Graph()
    for a, b, data in irm.graph.edges(data=True):
        g.add_edge(a, b, cost=weights.k_C * (weights.k_d * data["d"] + weights.k_rho * data["rho"]))
    crumbs = irm.breadcrumbs()
    best = {n: -math.inf for n in crumbs}
    for f in irm.frontiers():
        others = set(irm.frontiers()) - {f}
        dist = nx.single_source_dijkstra_path_length(g.subgraph(set(g.nodes) - others), f, weight="cost")
        for n in crumbs:
            if n in dist:
                best[n] = max(best[n], weights.k_I * irm.area(f) - dist[n])
    return best


# ---------------------------------------------------------------------------
# Value iteration
# ---------------------------------------------------------------------------

def test_path_graph_values() -> None:
    irm, a, b, f = _path_abf()
    table = value_iteration(irm, UNIT)
    assert table.values[f] == 10.0
    assert table.values[b] == pytest.approx(9.0)
    assert table.values[a] == pytest.approx(8.0)
    assert table.residual < 1e-6
    assert not table.exploration_complete
    assert table.dump() == ["node 0 8.000000", "node 1 9.000000", "node 2 10.000000"]


def test_no_frontier_signals_exploration_complete() -> None:
    irm = GlobalIRM()
    a, b = irm.add_breadcrumb((0, 0)), irm.add_breadcrumb((3, 0))
    irm.add_edge(a, b, 3.0, 0.0)
    table = value_iteration(irm, UNIT)
    assert table.exploration_complete
    assert set(table.values.values()) == {0.0}
    assert qmdp_action(table, PoseBelief.point_mass(a)) is None


@pytest.mark.parametrize("seed", range(25))
def test_random_roadmap_matches_dijkstra_oracle(seed: int) -> None:
    irm = _random_irm(seed)
    weights = RewardWeights(k_I=1.0, k_C=1.0, k_d=1.0, k_rho=2.0, k_mu=0.3)
    table = value_iteration(irm, weights)
    oracle = _dijkstra_values(irm, weights)
    for n, v in oracle.items():
        assert table.values[n] == pytest.approx(v, abs=1e-6)
    for f in irm.frontiers():
        assert table.values[f] == irm.area(f)

    # the chosen first edge realises the optimal reward-to-go
    for n in irm.breadcrumbs():
        act = qmdp_action(table, PoseBelief.point_mass(n))
        if math.isinf(oracle[n]):
            assert act is None
            continue
        edge_cost = table.costs[(n, act.target)]
        assert -edge_cost + table.values[act.target] == pytest.approx(oracle[n], abs=1e-6)


def test_residuals_shrink_with_discount() -> None:
    table = value_iteration(_random_irm(3), UNIT, gamma=0.9)
    assert table.residuals
    assert all(math.isfinite(r) for r in table.residuals)
    assert all(b <= a + 1e-12 for a, b in zip(table.residuals, table.residuals[1:]))
    assert table.residual < 1e-6


def test_residuals_are_finite_from_the_first_sweep() -> None:
    irm, a, b, f = _path_abf()
    cut_off = irm.add_breadcrumb((10, 10))
    lone = irm.add_breadcrumb((12, 10))
    irm.add_edge(cut_off, lone, 2.0, 0.0)
    table = value_iteration(irm, UNIT)
    assert all(math.isfinite(r) for r in table.residuals)
    assert table.values[a] == pytest.approx(8.0)
    assert table.values[cut_off] == -math.inf
    assert table.values[lone] == -math.inf
    assert qmdp_action(table, PoseBelief.point_mass(cut_off)) is None


# ---------------------------------------------------------------------------
# QMDP action
# ---------------------------------------------------------------------------

def test_point_mass_action_on_path_graph() -> None:
    irm, a, b, f = _path_abf()
    act = qmdp_action(value_iteration(irm, UNIT), PoseBelief.point_mass(a))
    assert (act.source, act.target) == (a, b)
    assert act.frontier == f
    assert act.chain == (a, b, f)
    assert act.edge_id == irm.graph.edges[a, b]["eid"]


def test_frontier_adjacent_breadcrumb_steps_into_frontier() -> None:
    irm, _, b, f = _path_abf()
    act = qmdp_action(value_iteration(irm, UNIT), PoseBelief.point_mass(b))
    assert act.target == f
    assert act.frontier == f


def test_belief_at_frontier_stays() -> None:
    irm, _, _, f = _path_abf()
    act = qmdp_action(value_iteration(irm, UNIT), PoseBelief.point_mass(f))
    assert act.target == f and act.edge_id is None


def _fork() -> tuple[GlobalIRM, dict[str, int]]:
    irm = GlobalIRM()
    ids = {
        "A": irm.add_breadcrumb((0, 0)),
        "B": irm.add_breadcrumb((1, 0)),
        "C": irm.add_breadcrumb((-1, 0)),
        "F1": irm.add_frontier((2, 0), 0.5, 10),
        "F2": irm.add_frontier((-2, 0), 0.5, 9.5),
    }
    ids["D"] = irm.add_breadcrumb((-1, 1))
    for u, v in (("A", "B"), ("A", "C"), ("B", "F1"), ("C", "F2"), ("C", "D")):
        irm.add_edge(ids[u], ids[v], 1.0, 0.0)
    return irm, ids


def test_split_belief_maximises_weighted_action_value() -> None:
    irm, ids = _fork()
    table = value_iteration(irm, UNIT)
    a, d = ids["A"], ids["D"]
    assert qmdp_action(table, PoseBelief.point_mass(a)).target == ids["B"]

    # enumerate every action out of A against both hypotheses
    dist = dict(nx.all_pairs_dijkstra_path_length(irm.graph, weight="d"))
    scores = {
        m: 0.5 * (-dist[a][m] + table.values[m]) + 0.5 * (-dist[d][m] + table.values[m])
        for m in irm.graph.neighbors(a)
    }
    expected = max(scores, key=lambda m: (scores[m], -m))
    act = qmdp_action(table, PoseBelief.from_mapping({a: 0.5, d: 0.5}))
    assert expected == ids["C"]
    assert act.target == expected
    assert act.value == pytest.approx(scores[expected])
    assert act.frontier == ids["F2"]


def test_argmax_is_invariant_to_common_scaling() -> None:
    irm = _random_irm(7)
    scaled = RewardWeights(k_I=4.0, k_C=4.0, k_d=1.0, k_rho=0.0, k_mu=0.0)
    base = value_iteration(irm, UNIT)
    other = value_iteration(irm, scaled)
    for n in irm.breadcrumbs():
        a = qmdp_action(base, PoseBelief.point_mass(n))
        b = qmdp_action(other, PoseBelief.point_mass(n))
        assert (a is None) == (b is None)
        if a is not None:
            assert a.target == b.target


def test_greedy_chain_ends_at_frontier() -> None:
    irm = _random_irm(11)
    table = value_iteration(irm, UNIT)
    for n in irm.breadcrumbs():
        if math.isinf(table.values[n]):
            continue
        chain = table.chain(n)
        assert table.is_frontier(chain[-1])
        assert len(chain) <= irm.graph.number_of_nodes()


def test_belief_errors() -> None:
    irm, a, _, _ = _path_abf()
    table = value_iteration(irm, UNIT)
    with pytest.raises(EmptyBeliefError):
        qmdp_action(table, PoseBelief(()))
    with pytest.raises(UnknownNodeError):
        qmdp_action(table, PoseBelief.point_mass(99))
    with pytest.raises(EmptyBeliefError):
        PoseBelief.from_mapping({a: 0.0})
    with pytest.raises(BeliefError):
        PoseBelief(((a, 0.7),))
    with pytest.raises(BeliefError):
        PoseBelief(((a, 1.5), (1, -0.5)))


def test_pose_belief_mode_breaks_ties_by_id() -> None:
    assert PoseBelief.from_mapping({5: 1.0, 2: 1.0}).mode() == 2
    assert PoseBelief.from_mapping({5: 3.0, 2: 1.0}).mode() == 5


def test_other_hypothesis_cannot_shortcut_through_a_frontier() -> None:
    irm = GlobalIRM()
    a = irm.add_breadcrumb((0, 0))
    b = irm.add_breadcrumb((1, 0))
    f_goal = irm.add_frontier((2, 0), 0.5, 10)
    d = irm.add_breadcrumb((0, 3))
    f_side = irm.add_frontier((1, 2), 0.5, 1)
    e = irm.add_breadcrumb((3, 3))
    for u, v, dist in ((a, b, 1.0), (b, f_goal, 1.0), (d, f_side, 1.0), (f_side, b, 1.0),
                       (d, e, 5.0), (e, b, 5.0)):
        irm.add_edge(u, v, dist, 0.0)
    table = value_iteration(irm, UNIT)

    # d reaches b only around the side frontier, which would absorb it
    around = irm.graph.subgraph(set(irm.graph) - {f_side})
    detour = nx.shortest_path_length(around, d, b, weight="d")
    assert detour == 10.0
    expected = 0.5 * (-1.0 + table.values[b]) + 0.5 * (-detour + table.values[b])
    act = qmdp_action(table, PoseBelief.from_mapping({a: 0.5, d: 0.5}))
    assert act.source == a and act.target == b
    assert act.value == pytest.approx(expected)
    assert act.value == pytest.approx(3.5)

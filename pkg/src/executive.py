"""Receding-horizon mission loop.

Every episode: rebuild the Local IRM, refresh the Global IRM, ask GCP for
guidance, reconcile the previous local policy with the new belief, plan the
rest with LCP (or a baseline) and execute Δt primitive steps, sensing after
each one.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from baselines import hfe_plan, nbv_plan
from belief import (
    CoverageBelief,
    PoseGraph,
    RiskMap,
    append_pose,
    update_coverage,
    update_risk,
)
from gcp import PoseBelief, qmdp_action, value_iteration
from irm import (
    GlobalIRM,
    LocalIRM,
    anchor_breadcrumb,
    build_local_irm,
    detect_frontiers,
    global_route,
    update_global_irm,
)
from lcp import Guidance, LocalSimState, evaluate_primitive_sequence, pomcp_plan, risk_weight
from log_config import get_logger
from policy import Policy, PolicySource
from reward import RewardWeights
from world import (
    DIRECTIONS,
    LETHAL_RISK,
    GroundTruthWorld,
    SensorSpec,
    sense_coverage,
    sense_risk,
    step_robot,
)

if TYPE_CHECKING:
    from harness import RunConfig

log = get_logger("executive")

MODE_LOCAL = "local-coverage"
MODE_RELOCATE = "relocate"
MODE_DONE = "done"

TAU_TIE = 1e-9


class ExecutiveParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    execute_steps: int | None = Field(None, ge=1)   # Δt, defaults to one macro
    stuck_episodes: int = Field(5, ge=1)            # N_stuck
    stall_episodes: int = Field(250, ge=1)
    reconcile: bool = True


class MissionAborted(RuntimeError):
    """The robot stopped making progress; carries what was recorded so far."""

    def __init__(self, diagnostic: str, result: "MissionResult"):
        super().__init__(diagnostic)
        self.diagnostic = diagnostic
        self.result = result

    @property
    def reports(self) -> list["EpisodeReport"]:
        return self.result.reports


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeReport:
    episode: int
    step: int
    wall_time: float
    mode: str
    tau: int
    policy: Policy | None
    coverage_fraction: float
    frontiers: int
    global_nodes: int
    executed: int = 0


@dataclass(frozen=True)
class StepRow:
    step: int
    sim_time: float
    covered_cells: int
    coverage_fraction: float
    x: float
    y: float
    mode: str
    episode: int
    distance: float

    FIELDS = ("step", "sim_time", "covered_cells", "coverage_fraction", "x", "y",
              "mode", "episode", "distance")

    def as_dict(self) -> dict[str, str]:
        return {
            "step": str(self.step),
            "sim_time": f"{self.sim_time:.1f}",
            "covered_cells": str(self.covered_cells),
            "coverage_fraction": f"{self.coverage_fraction:.6f}",
            "x": f"{self.x:.3f}",
            "y": f"{self.y:.3f}",
            "mode": self.mode,
            "episode": str(self.episode),
            "distance": f"{self.distance:.3f}",
        }


@dataclass
class MissionResult:
    reports: list[EpisodeReport] = field(default_factory=list)
    rows: list[StepRow] = field(default_factory=list)
    status: str = "running"
    diagnostic: str = ""
    global_irm: GlobalIRM | None = None
    trajectory_length: float = 0.0

    @property
    def steps(self) -> int:
        return self.rows[-1].step if self.rows else 0

    @property
    def final_coverage(self) -> float:
        return self.rows[-1].coverage_fraction if self.rows else 0.0

    @property
    def frontier_count(self) -> int:
        return len(self.global_irm.frontiers()) if self.global_irm is not None else 0


# ---------------------------------------------------------------------------
# Policy reconciliation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reconciliation:
    tau: int
    prefix: tuple[int, ...]
    prefix_rewards: tuple[float, ...]
    objective: tuple[float, ...]      # J(0..len(tail))
    end_state: LocalSimState


def reconcile(
    prev_policy: Policy,
    executed: int,
    local_irm: LocalIRM,
    state: LocalSimState,
    sensor: SensorSpec,
    weights: RewardWeights,
) -> Reconciliation:
    """Choose how much of the previous policy's tail to keep.

    The tail is re-simulated under the current belief.  With stored
    predictions, ``J(tau)`` sums the discounted change of each step reward
    against its prediction, so unchanged beliefs leave J flat; without them
    J is the plain discounted return.  Steps into non-node cells score
    ``-inf``.  Ties go to the longer prefix.
    """
    tail = prev_policy.tail(executed)
    planned = prev_policy.tail_rewards(executed)
    fresh, _ = evaluate_primitive_sequence(local_irm, state, tail, sensor, weights)

    objective = [0.0]
    disc = 1.0
    for i in range(len(tail)):
        if i >= len(fresh) or fresh[i] == -math.inf or objective[-1] == -math.inf:
            objective.append(-math.inf)
            continue
        delta = fresh[i] - planned[i] if planned else fresh[i]
        objective.append(objective[-1] + disc * delta)
        disc *= weights.gamma

    best = max(objective)
    tau = max(t for t, j in enumerate(objective) if j >= best - TAU_TIE)
    prefix = tuple(tail[:tau])
    _, end_state = evaluate_primitive_sequence(local_irm, state, prefix, sensor, weights)
    return Reconciliation(tau, prefix, tuple(fresh[:tau]), tuple(objective), end_state)


# ---------------------------------------------------------------------------
# Mission
# ---------------------------------------------------------------------------

class Mission:
    def __init__(self, world: GroundTruthWorld, config: "RunConfig", seed: int):
        self.world = dataclasses.replace(
            world, covered=np.zeros((world.height, world.width), dtype=bool),
        )
        self.cfg = config
        motion_seq, lcp_seq, nbv_seq = np.random.SeedSequence(seed).spawn(3)
        self.motion_rng = np.random.default_rng(motion_seq)
        self.lcp_rng = np.random.default_rng(lcp_seq)
        self.nbv_rng = np.random.default_rng(nbv_seq)

        res = world.resolution
        self.res = res
        self.pose = world.start_pose
        self.riskmap = RiskMap(config.belief.window_size, center=self.pose.cell(res))
        self.coverage = CoverageBelief(bounds=(world.width, world.height))
        self.pose_graph = PoseGraph(res)
        self.global_irm = GlobalIRM(config.irm, res)
        self.reachable = self.world.reachable_mask()
        self.horizon = config.lcp.horizon
        self.dt = config.executive.execute_steps or config.lcp.macro_length

        self.step = 0
        self.episode = 0
        self.distance = 0.0
        self.mode = MODE_LOCAL
        self.result = MissionResult(global_irm=self.global_irm)
        self.prev_policy: Policy | None = None
        self.prev_executed = 0
        self._no_move = 0
        self._stall = 0

        self._sense()
        self._record()

    # ---- sensing ----------------------------------------------------------

    def _sense(self) -> None:
        world, spec = self.world, self.cfg.sensor
        cell = self.pose.cell(self.res)
        update_risk(self.riskmap, sense_risk(world, self.pose, spec), center=cell)
        fresh = sense_coverage(world, self.pose, spec)
        lethal = [c for c in fresh if world.cell_risk(c) >= LETHAL_RISK]
        update_coverage(self.coverage, fresh, lethal)
        append_pose(self.pose_graph, self.pose, float(self.step))

    def _covered_reachable(self) -> int:
        return int((self.world.covered & self.reachable).sum())

    def _fraction(self) -> float:
        total = int(self.reachable.sum())
        return 1.0 if total == 0 else self._covered_reachable() / total

    def _record(self) -> None:
        self.result.rows.append(StepRow(
            step=self.step,
            sim_time=float(self.step),
            covered_cells=self._covered_reachable(),
            coverage_fraction=self._fraction(),
            x=self.pose.x,
            y=self.pose.y,
            mode=self.mode,
            episode=self.episode,
            distance=self.distance,
        ))

    # ---- planning ---------------------------------------------------------

    def _guidance(self, local: LocalIRM, cell) -> Guidance | None:
        anchor = anchor_breadcrumb(self.global_irm, local, cell)
        if anchor is None:
            return None
        gcp = self.cfg.gcp
        table = value_iteration(self.global_irm, self.cfg.reward, gcp.epsilon, gcp.gamma, gcp.max_sweeps)
        action = qmdp_action(table, PoseBelief.point_mass(anchor[0]))
        if action is None:
            return None
        route = global_route(self.global_irm, local, cell, action.chain, weight=risk_weight(self.cfg.reward))
        waypoints = [self.global_irm.cell(n) for n in action.chain]
        return Guidance.along(local, route, waypoints)

    def _plan_hierarchical(self, local: LocalIRM, cell) -> tuple[Policy, str, int, bool]:
        cfg = self.cfg
        state = LocalSimState(cell, self.pose.heading)
        root = state
        prefix: tuple[int, ...] = ()
        prefix_rewards: tuple[float, ...] = ()
        tau = 0
        # relocation tails are replanned from the current cell, not reconciled
        if self.prev_policy is not None and cfg.executive.reconcile and self.mode == MODE_LOCAL:
            rec = reconcile(self.prev_policy, self.prev_executed, local, state, cfg.sensor, cfg.reward)
            tau, prefix, prefix_rewards, root = rec.tau, rec.prefix, rec.prefix_rewards, rec.end_state

        guidance = self._guidance(local, root.cell)
        plan = pomcp_plan(local, root, guidance, cfg.lcp, cfg.sensor, cfg.reward, self.lcp_rng, anchor=self.step)
        actions = (prefix + plan.policy.actions)[:self.horizon]
        rewards: tuple[float, ...] = ()
        if plan.policy.predicted_rewards or not plan.policy.actions:
            rewards = (prefix_rewards + plan.policy.predicted_rewards)[:self.horizon]
        source = PolicySource.RECONCILED if tau > 0 else plan.policy.source
        policy = Policy(self.step, actions, self.horizon, source, rewards)
        mode = MODE_RELOCATE if plan.exhausted else MODE_LOCAL
        return policy, mode, tau, plan.stuck and not actions

    def _plan_hfe(self, local: LocalIRM, cell) -> tuple[Policy, str, int, bool]:
        plan = hfe_plan(self.global_irm, local, cell, self.horizon, anchor=self.step)
        mode = MODE_LOCAL if plan.scope == "local" else MODE_RELOCATE
        return plan.policy, mode, 0, plan.stuck

    def _plan_nbv(self, local: LocalIRM, cell) -> tuple[Policy, str, int, bool]:
        cfg = self.cfg
        plan = nbv_plan(local, cell, cfg.reward, cfg.sensor, cfg.nbv, self.nbv_rng, self.horizon, anchor=self.step)
        if plan.viewpoint is None or plan.viewpoint.gain <= 0.0:
            fallback = self._plan_hfe(local, cell)
            return fallback[0], MODE_RELOCATE, 0, fallback[3]
        return plan.policy, MODE_LOCAL, 0, plan.stuck

    # ---- execution --------------------------------------------------------

    def _execute(self, policy: Policy) -> int:
        budget = self.cfg.step_budget
        done = 0
        for move in policy.actions[:self.dt]:
            if budget is not None and self.step >= budget:
                break
            cx, cy = self.pose.cell(self.res)
            dx, dy = DIRECTIONS[move]
            target = (cx + dx, cy + dy)
            if not self.riskmap.is_free(target):
                log.warning("safety stop before %s at step %d", target, self.step)
                break
            outcome = step_robot(self.world, self.pose, move, self.cfg.noise, self.motion_rng)
            self.distance += math.dist((self.pose.x, self.pose.y), (outcome.pose.x, outcome.pose.y))
            self.pose = outcome.pose
            self.step += 1
            self._sense()
            self._record()
            done += 1
        return done

    def _abort(self, diagnostic: str) -> None:
        self.result.status = "aborted"
        self.result.diagnostic = diagnostic
        self.result.trajectory_length = self.distance
        log.warning("mission aborted: %s", diagnostic)
        raise MissionAborted(diagnostic, self.result)

    def run_episode(self) -> bool:
        """One plan-execute cycle; ``False`` once the mission is over."""
        budget = self.cfg.step_budget
        if budget is not None and self.step >= budget:
            self.result.status = "budget"
            return False

        started = time.perf_counter()
        self.episode += 1
        cell = self.pose.cell(self.res)
        local = build_local_irm(self.riskmap, self.coverage, self.pose, self.res)
        candidates = detect_frontiers(self.coverage, self.riskmap)
        update_global_irm(self.global_irm, self.pose_graph, candidates, self.riskmap)

        if not self.global_irm.frontiers():
            self.mode = MODE_DONE
            self.result.status = "done"
            self.result.reports.append(EpisodeReport(
                self.episode, self.step, time.perf_counter() - started, MODE_DONE, 0, None,
                self._fraction(), 0, self.global_irm.graph.number_of_nodes(),
            ))
            return False

        planner = self.cfg.planner
        if planner == "hierarchical":
            policy, mode, tau, stuck = self._plan_hierarchical(local, cell)
        elif planner == "nbv":
            policy, mode, tau, stuck = self._plan_nbv(local, cell)
        else:
            policy, mode, tau, stuck = self._plan_hfe(local, cell)
        self.mode = mode

        covered_before = self._covered_reachable()
        executed = self._execute(policy)
        self.prev_policy, self.prev_executed = (policy, executed) if planner == "hierarchical" else (None, 0)

        report = EpisodeReport(
            self.episode, self.step, time.perf_counter() - started, mode, tau, policy,
            self._fraction(), len(self.global_irm.frontiers()),
            self.global_irm.graph.number_of_nodes(), executed,
        )
        self.result.reports.append(report)
        log.info(
            "episode %d step %d mode %s tau %d executed %d coverage %.3f frontiers %d",
            report.episode, report.step, mode, tau, executed, report.coverage_fraction, report.frontiers,
        )

        self._no_move = self._no_move + 1 if self.pose.cell(self.res) == cell else 0
        self._stall = self._stall + 1 if self._covered_reachable() == covered_before else 0
        params = self.cfg.executive
        if self._no_move >= params.stuck_episodes:
            why = "no macro action" if stuck else "no motion"
            self._abort(
                f"stuck at {cell} for {self._no_move} episodes ({why}, mode {mode}, "
                f"{len(self.global_irm.frontiers())} frontiers, coverage {self._fraction():.3f})"
            )
        if self._stall >= params.stall_episodes:
            self._abort(
                f"no coverage gain for {self._stall} episodes at step {self.step} "
                f"(coverage {self._fraction():.3f})"
            )
        return True

    def run(self) -> MissionResult:
        log.info(
            "mission start: world %s (%dx%d), planner %s, budget %s",
            self.world.name, self.world.width, self.world.height, self.cfg.planner, self.cfg.step_budget,
        )
        while self.run_episode():
            pass
        self.result.trajectory_length = self.distance
        log.info(
            "mission %s after %d steps, %d episodes, coverage %.3f",
            self.result.status, self.step, self.episode, self._fraction(),
        )
        return self.result


def run_mission(world: GroundTruthWorld, config: "RunConfig", seed: int) -> MissionResult:
    return Mission(world, config, seed).run()

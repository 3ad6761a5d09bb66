"""Belief layer: rolling RiskMap, Pose Graph and global CoverageBelief."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from pydantic import BaseModel, ConfigDict, Field, field_validator

from world import LETHAL_RISK, Cell, RobotPose

# Coverage prior for known-traversable cells never seen by the coverage sensor.
COVERAGE_PRIOR = 0.5


class BeliefParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    window_size: int = Field(21, ge=3)  # RiskMap / Local IRM side, cells

    @field_validator("window_size")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("window_size must be odd so the robot sits at the centre")
        return v


class PoseGraphError(ValueError):
    """Non-monotone timestamp or a jump longer than one primitive move."""


# ---------------------------------------------------------------------------
# RiskMap
# ---------------------------------------------------------------------------

@dataclass
class RiskMap:
    """Square rolling window of scalar risk estimates around the robot."""

    window_size: int
    center: Cell = (0, 0)
    values: dict[Cell, float] = field(default_factory=dict)
    dropped: set[Cell] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be a positive odd number, got {self.window_size}")

    @property
    def half(self) -> int:
        return self.window_size // 2

    def bounds(self, center: Cell | None = None) -> tuple[int, int, int, int]:
        """Inclusive ``(x0, y0, x1, y1)`` of the window around *center*."""
        cx, cy = self.center if center is None else center
        h = self.half
        return cx - h, cy - h, cx + h, cy + h

    def in_window(self, cell: Cell) -> bool:
        x0, y0, x1, y1 = self.bounds()
        return x0 <= cell[0] <= x1 and y0 <= cell[1] <= y1

    def window_cells(self) -> Iterator[Cell]:
        x0, y0, x1, y1 = self.bounds()
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                yield (x, y)

    def risk(self, cell: Cell) -> float | None:
        """Latest sensed risk, ``None`` while unknown."""
        return self.values.get(cell)

    def is_free(self, cell: Cell) -> bool:
        r = self.values.get(cell)
        return r is not None and r < LETHAL_RISK

    def is_lethal(self, cell: Cell) -> bool:
        r = self.values.get(cell)
        return r is not None and r >= LETHAL_RISK

    def recenter(self, center: Cell) -> set[Cell]:
        """Move the window; known cells that fall outside are forgotten."""
        self.center = center
        x0, y0, x1, y1 = self.bounds()
        gone = {c for c in self.values if not (x0 <= c[0] <= x1 and y0 <= c[1] <= y1)}
        for c in gone:
            del self.values[c]
        return gone


def update_risk(riskmap: RiskMap, patch: Mapping[Cell, float], center: Cell | None = None) -> RiskMap:
    """Recenter (when *center* is given) and write *patch* latest-wins.

    Cells scrolled out of the window are recorded in ``riskmap.dropped``.
    Patch cells outside the window are ignored.
    """
    riskmap.dropped = riskmap.recenter(center) if center is not None else set()
    for cell, value in patch.items():
        if riskmap.in_window(cell):
            riskmap.values[cell] = float(value)
    return riskmap


# ---------------------------------------------------------------------------
# Pose Graph
# ---------------------------------------------------------------------------

@dataclass
class PoseGraph:
    """Chain of timestamped poses joined by odometry edges."""

    resolution: float = 1.0
    times: list[float] = field(default_factory=list)
    poses: list[RobotPose] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [
            (i, i + 1, math.dist((a.x, a.y), (b.x, b.y)))
            for i, (a, b) in enumerate(zip(self.poses, self.poses[1:]))
        ]

    def path_length(self) -> float:
        return sum(d for _, _, d in self.edges)

    @property
    def last(self) -> RobotPose | None:
        return self.poses[-1] if self.poses else None


def append_pose(pose_graph: PoseGraph, pose: RobotPose, time: float) -> PoseGraph:
    if pose_graph.times and time <= pose_graph.times[-1]:
        raise PoseGraphError(f"timestamp {time} not after {pose_graph.times[-1]}")
    if pose_graph.poses:
        prev = pose_graph.poses[-1]
        step = math.dist((prev.x, prev.y), (pose.x, pose.y))
        if step > math.sqrt(2.0) * pose_graph.resolution + 1e-9:
            raise PoseGraphError(f"pose jump of {step:.3f} m exceeds one primitive move")
    pose_graph.times.append(time)
    pose_graph.poses.append(pose)
    return pose_graph


# ---------------------------------------------------------------------------
# Coverage belief
# ---------------------------------------------------------------------------

@dataclass
class CoverageBelief:
    """Sparse global map cell -> p_covered.

    ``bounds`` is the mission area the robot is asked to cover (width,
    height); ``lethal`` remembers covered cells that were sensed lethal so
    frontier detection outside the rolling RiskMap does not treat walls as
    open boundary.
    """

    p_covered: dict[Cell, float] = field(default_factory=dict)
    lethal: set[Cell] = field(default_factory=set)
    bounds: tuple[int, int] | None = None

    def get(self, cell: Cell) -> float | None:
        return self.p_covered.get(cell)

    def is_covered(self, cell: Cell) -> bool:
        return self.p_covered.get(cell, 0.0) >= 1.0

    def in_bounds(self, cell: Cell) -> bool:
        if self.bounds is None:
            return True
        return 0 <= cell[0] < self.bounds[0] and 0 <= cell[1] < self.bounds[1]

    def covered_cells(self) -> set[Cell]:
        return {c for c, p in self.p_covered.items() if p >= 1.0}


def update_coverage(
    coverage_belief: CoverageBelief,
    cells: Iterable[Cell],
    lethal: Iterable[Cell] = (),
) -> CoverageBelief:
    """Set every listed cell to p_covered = 1; remember which were lethal."""
    for c in cells:
        coverage_belief.p_covered[c] = 1.0
    coverage_belief.lethal.update(lethal)
    return coverage_belief


def prior_p_covered(coverage_belief: CoverageBelief, cell: Cell) -> float:
    p = coverage_belief.get(cell)
    return COVERAGE_PRIOR if p is None else p


def dump_snapshot(riskmap: RiskMap, coverage_belief: CoverageBelief) -> list[str]:
    """One ``x y kind value`` record per known cell, sorted for diffing."""
    records = [f"{x} {y} risk {v:.6f}" for (x, y), v in sorted(riskmap.values.items(), key=lambda kv: (kv[0][1], kv[0][0]))]
    records += [
        f"{x} {y} coverage {p:.6f}"
        for (x, y), p in sorted(coverage_belief.p_covered.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    ]
    return records

"""Ground-truth grid world: environment files, robot motion, risk and
coverage sensors.

Cells are ``(x, y)`` integer tuples; ``y`` grows downwards with the file
rows.  Per-cell arrays are indexed ``[y, x]``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage

Cell = tuple[int, int]

# A cell at or above this risk is never planned through.
LETHAL_RISK = 0.95

# ---------------------------------------------------------------------------
# Motion primitives
# ---------------------------------------------------------------------------
# Compass order, counter-clockwise starting East (y points down in the grid).
DIRECTIONS: tuple[Cell, ...] = (
    (1, 0),    # E
    (1, -1),   # NE
    (0, -1),   # N
    (-1, -1),  # NW
    (-1, 0),   # W
    (-1, 1),   # SW
    (0, 1),    # S
    (1, 1),    # SE
)
DIRECTION_NAMES = ("E", "NE", "N", "NW", "W", "SW", "S", "SE")
WAIT = 8


def direction_between(a: Cell, b: Cell) -> int:
    """Index of the unit move from *a* to the 8-neighbour *b*."""
    return DIRECTIONS.index((b[0] - a[0], b[1] - a[1]))


def heading_steps(a: int, b: int) -> int:
    """Heading change between two compass indices in 45° steps (0..4)."""
    diff = abs(a - b) % 8
    return min(diff, 8 - diff)


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class WorldFormatError(ValueError):
    """Environment text does not follow the grid format."""


class MalformedHeaderError(WorldFormatError):
    pass


class RaggedGridError(WorldFormatError):
    pass


class StartCellError(WorldFormatError):
    pass


class UnknownSymbolError(WorldFormatError):
    pass


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobotPose:
    """Continuous pose in meters; graph operations use :meth:`cell`."""

    x: float
    y: float
    heading: int = 0

    def cell(self, resolution: float) -> Cell:
        return int(math.floor(self.x / resolution)), int(math.floor(self.y / resolution))

    @classmethod
    def at_cell(cls, cell: Cell, resolution: float, heading: int = 0) -> "RobotPose":
        return cls((cell[0] + 0.5) * resolution, (cell[1] + 0.5) * resolution, heading)


class SensorSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    risk_radius: float = Field(4.0, gt=0)
    coverage_radius: float = Field(2.0, gt=0)
    line_of_sight: bool = True

    @model_validator(mode="after")
    def _coverage_inside_mapping(self) -> "SensorSpec":
        if self.coverage_radius > self.risk_radius:
            raise ValueError("coverage_radius must not exceed risk_radius")
        return self


class MotionNoise(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    slip_probability: float = Field(0.0, ge=0.0, le=1.0)
    enabled: bool = False


@dataclass
class GroundTruthWorld:
    width: int
    height: int
    resolution: float
    traversable: np.ndarray   # bool [height, width]
    risk: np.ndarray          # float [height, width]
    start_pose: RobotPose
    covered: np.ndarray = field(default=None)  # bool [height, width], monotone
    name: str = "world"

    def __post_init__(self) -> None:
        if self.covered is None:
            self.covered = np.zeros((self.height, self.width), dtype=bool)

    # ---- queries ------------------------------------------------------------

    @property
    def start_cell(self) -> Cell:
        return self.start_pose.cell(self.resolution)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_traversable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and bool(self.traversable[cell[1], cell[0]])

    def cell_risk(self, cell: Cell) -> float:
        return float(self.risk[cell[1], cell[0]])

    def covered_count(self) -> int:
        return int(self.covered.sum())

    def reachable_mask(self) -> np.ndarray:
        """8-connected flood fill of sub-lethal traversable cells from the start."""
        free = self.traversable & (self.risk < LETHAL_RISK)
        labels, _ = ndimage.label(free, structure=np.ones((3, 3), dtype=int))
        sx, sy = self.start_cell
        return labels == labels[sy, sx]

    def reachable_cells(self) -> set[Cell]:
        ys, xs = np.nonzero(self.reachable_mask())
        return {(int(x), int(y)) for x, y in zip(xs, ys)}

    def coverage_fraction(self, reachable: np.ndarray | None = None) -> float:
        mask = self.reachable_mask() if reachable is None else reachable
        total = int(mask.sum())
        if total == 0:
            return 1.0
        return float((self.covered & mask).sum()) / total


# ---------------------------------------------------------------------------
# Environment file format
# ---------------------------------------------------------------------------

def parse_world(text: str, name: str = "world") -> GroundTruthWorld:
    """Parse environment text: header ``width height resolution_m`` then rows."""
    lines = [ln.rstrip("\r\n") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MalformedHeaderError("empty environment file")

    header = lines[0].split()
    if len(header) != 3:
        raise MalformedHeaderError(f"header must be 'width height resolution', got {lines[0]!r}")
    try:
        width, height, resolution = int(header[0]), int(header[1]), float(header[2])
    except ValueError as exc:
        raise MalformedHeaderError(f"bad header {lines[0]!r}: {exc}") from exc
    if width <= 0 or height <= 0 or not resolution > 0:
        raise MalformedHeaderError(f"dimensions must be positive, got {lines[0]!r}")

    rows = lines[1:]
    if len(rows) != height:
        raise RaggedGridError(f"expected {height} rows, found {len(rows)}")
    for i, row in enumerate(rows):
        if len(row) != width:
            raise RaggedGridError(f"row {i} has {len(row)} cells, expected {width}")

    traversable = np.ones((height, width), dtype=bool)
    risk = np.zeros((height, width), dtype=float)
    starts: list[Cell] = []
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "#":
                traversable[y, x] = False
                risk[y, x] = 1.0
            elif ch == ".":
                pass
            elif ch == "S":
                starts.append((x, y))
            elif ch in "123456789":
                risk[y, x] = int(ch) / 9.0
            else:
                raise UnknownSymbolError(f"unknown symbol {ch!r} at ({x}, {y})")

    if len(starts) != 1:
        raise StartCellError(f"expected exactly one start cell 'S', found {len(starts)}")

    return GroundTruthWorld(
        width=width,
        height=height,
        resolution=resolution,
        traversable=traversable,
        risk=risk,
        start_pose=RobotPose.at_cell(starts[0], resolution),
        name=name,
    )


def load_world(path: str) -> GroundTruthWorld:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_world(text, name=os.path.splitext(os.path.basename(path))[0])


def format_world(world: GroundTruthWorld) -> str:
    """Inverse of :func:`parse_world` (risk digits are rounded to ninths)."""
    lines = [f"{world.width} {world.height} {world.resolution:g}"]
    start = world.start_cell
    for y in range(world.height):
        row = []
        for x in range(world.width):
            if (x, y) == start:
                row.append("S")
            elif not world.traversable[y, x]:
                row.append("#")
            else:
                d = int(round(world.risk[y, x] * 9))
                row.append("." if d == 0 else str(d))
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------

def bresenham(a: Cell, b: Cell) -> list[Cell]:
    """Integer ray from *a* to *b*, both endpoints included."""
    x0, y0 = a
    x1, y1 = b
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    cells = [(x0, y0)]
    while (x0, y0) != (x1, y1):
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
        cells.append((x0, y0))
    return cells


@lru_cache(maxsize=64)
def disc_offsets(radius_cells: float) -> tuple[Cell, ...]:
    """Offsets whose cell centre lies within *radius_cells* plus half a cell."""
    reach = radius_cells + 0.5
    r = int(math.floor(reach))
    out = [
        (dx, dy)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dx * dx + dy * dy <= reach * reach
    ]
    return tuple(sorted(out, key=lambda o: (o[0] * o[0] + o[1] * o[1], o[1], o[0])))


def visible(origin: Cell, target: Cell, blocked) -> bool:
    """True if no cell strictly between *origin* and *target* is blocked."""
    for c in bresenham(origin, target)[1:-1]:
        if blocked(c):
            return False
    return True


def _visible_cells(world: GroundTruthWorld, origin: Cell, radius: float, line_of_sight: bool) -> list[Cell]:
    cells = []
    blocked = lambda c: not world.traversable[c[1], c[0]]  # noqa: E731
    for dx, dy in disc_offsets(radius / world.resolution):
        c = (origin[0] + dx, origin[1] + dy)
        if not world.in_bounds(c):
            continue
        if line_of_sight and not visible(origin, c, blocked):
            continue
        cells.append(c)
    return cells


# ---------------------------------------------------------------------------
# Motion and sensing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoveOutcome:
    pose: RobotPose
    collision: bool = False
    slipped: bool = False


def step_robot(
    world: GroundTruthWorld,
    pose: RobotPose,
    move: int,
    noise: MotionNoise,
    rng: np.random.Generator | None = None,
) -> MoveOutcome:
    """Apply one primitive move (0..7) or :data:`WAIT`."""
    if move == WAIT:
        return MoveOutcome(pose)
    if not 0 <= move < len(DIRECTIONS):
        raise ValueError(f"unknown primitive move {move}")

    if noise.enabled and noise.slip_probability > 0.0:
        if rng is None:
            raise ValueError("motion noise enabled but no rng given")
        if rng.random() < noise.slip_probability:
            return MoveOutcome(pose, slipped=True)

    cx, cy = pose.cell(world.resolution)
    dx, dy = DIRECTIONS[move]
    target = (cx + dx, cy + dy)
    if not world.is_traversable(target):
        return MoveOutcome(pose, collision=True)
    return MoveOutcome(RobotPose.at_cell(target, world.resolution, heading=move))


def sense_risk(world: GroundTruthWorld, pose: RobotPose, spec: SensorSpec) -> dict[Cell, float]:
    """True risk of every in-range (and visible) cell."""
    origin = pose.cell(world.resolution)
    return {
        c: float(world.risk[c[1], c[0]])
        for c in _visible_cells(world, origin, spec.risk_radius, spec.line_of_sight)
    }


def sense_coverage(world: GroundTruthWorld, pose: RobotPose, spec: SensorSpec) -> set[Cell]:
    """Mark the footprint in the ledger and return the newly covered cells."""
    origin = pose.cell(world.resolution)
    fresh = set()
    for c in _visible_cells(world, origin, spec.coverage_radius, spec.line_of_sight):
        if not world.covered[c[1], c[0]]:
            world.covered[c[1], c[0]] = True
            fresh.add(c)
    return fresh

from __future__ import annotations

import os

import numpy as np
import pytest
from pydantic import ValidationError

import worldgen
from world import (
    DIRECTIONS,
    WAIT,
    MalformedHeaderError,
    MotionNoise,
    RaggedGridError,
    RobotPose,
    SensorSpec,
    StartCellError,
    UnknownSymbolError,
    bresenham,
    disc_offsets,
    format_world,
    heading_steps,
    parse_world,
    sense_coverage,
    sense_risk,
    step_robot,
)

EAST, NORTH = 0, 2
NO_NOISE = MotionNoise()


# ---------------------------------------------------------------------------
# Environment format
# ---------------------------------------------------------------------------

def test_parse_open_grid() -> None:
    world = parse_world("3 3 1\n...\n.S.\n...\n")
    assert world.traversable.all()
    assert (world.risk == 0.0).all()
    assert world.start_cell == (1, 1)
    assert world.reachable_cells() == {(x, y) for x in range(3) for y in range(3)}


def test_parse_walls_and_risk_digits() -> None:
    world = parse_world("5 3 0.5\n#####\n#S39#\n#####\n")
    assert world.resolution == 0.5
    assert not world.traversable[0, 0]
    assert world.cell_risk((0, 0)) == 1.0
    assert world.cell_risk((2, 1)) == pytest.approx(3 / 9)
    assert world.is_traversable((3, 1))
    assert world.cell_risk((3, 1)) == 1.0
    # digit 9 is traversable but lethal, so it is not part of the reachable set
    assert world.reachable_cells() == {(1, 1), (2, 1)}


@pytest.mark.parametrize(
    "text, error",
    [
        ("", MalformedHeaderError),
        ("3 x 1\n...\n.S.\n...\n", MalformedHeaderError),
        ("3 3\n...\n.S.\n...\n", MalformedHeaderError),
        ("3 3 0\n...\n.S.\n...\n", MalformedHeaderError),
        ("3 3 1\n...\n.S.\n", RaggedGridError),
        ("3 3 1\n...\n.S..\n...\n", RaggedGridError),
        ("3 3 1\n...\n...\n...\n", StartCellError),
        ("3 3 1\nS..\n.S.\n...\n", StartCellError),
        ("3 3 1\n...\n.S?\n...\n", UnknownSymbolError),
    ],
)
def test_parse_errors(text: str, error: type) -> None:
    with pytest.raises(error):
        parse_world(text)


def test_format_world_round_trips_file_text() -> None:
    text = "6 4 1\n######\n#S.2.#\n#..7.#\n######\n"
    assert format_world(parse_world(text)) == text


def test_hand_made_fixtures_parse(envs_dir) -> None:
    for name in ("room.txt", "corridor.txt", "tjunction.txt", "hazard_room.txt"):
        with open(os.path.join(envs_dir, name), encoding="utf-8") as fh:
            world = parse_world(fh.read(), name=name)
        assert world.reachable_mask()[world.start_cell[1], world.start_cell[0]]


def test_maze_fixture_flood_fill_matches_independent_scan() -> None:
    world = parse_world(worldgen.maze(50, 50, seed=0))
    free = {(x, y) for y in range(world.height) for x in range(world.width) if world.traversable[y, x]}
    # breadth-first scan written independently of scipy labelling
    seen = {world.start_cell}
    frontier = [world.start_cell]
    while frontier:
        cx, cy = frontier.pop()
        for dx, dy in DIRECTIONS:
            n = (cx + dx, cy + dy)
            if n in free and n not in seen:
                seen.add(n)
                frontier.append(n)
    assert world.reachable_cells() == seen


# ---------------------------------------------------------------------------
# Motion
# ---------------------------------------------------------------------------

def test_step_east_in_open_grid() -> None:
    world = parse_world("3 3 1\n...\n.S.\n...\n")
    out = step_robot(world, world.start_pose, EAST, NO_NOISE)
    assert out.pose.cell(1.0) == (2, 1)
    assert out.pose.heading == EAST
    assert not out.collision


def test_step_into_wall_is_a_collision(corridor_world) -> None:
    start = corridor_world.start_pose
    out = step_robot(corridor_world, start, NORTH, NO_NOISE)
    assert out.collision
    assert out.pose == start


def test_wait_keeps_pose(corridor_world) -> None:
    start = corridor_world.start_pose
    assert step_robot(corridor_world, start, WAIT, NO_NOISE).pose == start


def test_certain_slip_never_moves(corridor_world) -> None:
    noise = MotionNoise(enabled=True, slip_probability=1.0)
    rng = np.random.default_rng(0)
    pose = corridor_world.start_pose
    for _ in range(5):
        out = step_robot(corridor_world, pose, EAST, noise, rng)
        assert out.slipped
        assert out.pose == pose


def test_noise_without_rng_is_rejected(corridor_world) -> None:
    noise = MotionNoise(enabled=True, slip_probability=0.5)
    with pytest.raises(ValueError):
        step_robot(corridor_world, corridor_world.start_pose, EAST, noise)


def test_unknown_move_is_rejected(corridor_world) -> None:
    with pytest.raises(ValueError):
        step_robot(corridor_world, corridor_world.start_pose, 11, NO_NOISE)


def test_heading_steps() -> None:
    assert heading_steps(0, 0) == 0
    assert heading_steps(0, 2) == 2
    assert heading_steps(0, 4) == 4
    assert heading_steps(0, 7) == 1
    assert heading_steps(1, 7) == 2


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------

def test_disc_offsets_sizes() -> None:
    assert len(disc_offsets(1.0)) == 9
    assert len(disc_offsets(2.0)) == 21
    assert disc_offsets(2.0)[0] == (0, 0)


def test_bresenham_endpoints_and_adjacency() -> None:
    ray = bresenham((0, 0), (5, 2))
    assert ray[0] == (0, 0) and ray[-1] == (5, 2)
    for a, b in zip(ray, ray[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def test_risk_patch_radius_one_in_open_world() -> None:
    world = parse_world("5 5 1\n.....\n.....\n..S..\n.....\n.....\n")
    patch = sense_risk(world, world.start_pose, SensorSpec(risk_radius=1.0, coverage_radius=1.0))
    assert len(patch) == 9
    assert set(patch.values()) == {0.0}


def test_risk_patch_covers_small_world() -> None:
    world = parse_world("5 5 1\n.....\n.1...\n..S..\n...2.\n.....\n")
    patch = sense_risk(world, world.start_pose, SensorSpec(risk_radius=4.0, coverage_radius=2.0))
    assert len(patch) == 25
    assert patch[(1, 1)] == pytest.approx(1 / 9)


def test_wall_occludes_cells_behind_it() -> None:
    world = parse_world("8 3 1\n########\n#S.#...#\n########\n")
    patch = sense_risk(world, world.start_pose, SensorSpec(risk_radius=4.0, coverage_radius=2.0))
    assert (3, 1) in patch          # the wall itself is seen
    assert (4, 1) not in patch
    assert (5, 1) not in patch

    def visible(target):
        return all(world.traversable[c[1], c[0]] for c in bresenham(world.start_cell, target)[1:-1])

    expected = {
        (world.start_cell[0] + dx, world.start_cell[1] + dy)
        for dx, dy in disc_offsets(4.0)
        if 0 <= world.start_cell[0] + dx < world.width and 0 <= world.start_cell[1] + dy < world.height
    }
    assert set(patch) == {c for c in expected if visible(c)}


def test_coverage_first_call_then_idempotent() -> None:
    world = parse_world("5 5 1\n.....\n.....\n..S..\n.....\n.....\n")
    spec = SensorSpec(risk_radius=1.0, coverage_radius=1.0)
    fresh = sense_coverage(world, world.start_pose, spec)
    assert len(fresh) == 9
    assert world.covered_count() == 9
    assert sense_coverage(world, world.start_pose, spec) == set()


def test_corridor_sweep_matches_rasterized_union(corridor_world) -> None:
    spec = SensorSpec(risk_radius=1.0, coverage_radius=1.0)
    pose = corridor_world.start_pose
    path = [pose.cell(1.0)]
    sense_coverage(corridor_world, pose, spec)
    for _ in range(9):
        pose = step_robot(corridor_world, pose, EAST, NO_NOISE).pose
        path.append(pose.cell(1.0))
        sense_coverage(corridor_world, pose, spec)

    oracle = np.zeros_like(corridor_world.covered)
    for x, y in path:
        oracle[max(0, y - 1):y + 2, max(0, x - 1):x + 2] = True
    assert (corridor_world.covered == oracle).all()
    assert corridor_world.coverage_fraction() == 1.0


def test_sensor_spec_rejects_coverage_beyond_risk_range() -> None:
    with pytest.raises(ValidationError):
        SensorSpec(risk_radius=1.0, coverage_radius=2.0)


def test_pose_cell_round_trip() -> None:
    pose = RobotPose.at_cell((3, 4), 0.5)
    assert pose.cell(0.5) == (3, 4)
    assert pose.x == pytest.approx(1.75)

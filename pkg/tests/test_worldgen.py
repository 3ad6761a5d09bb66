from __future__ import annotations

import numpy as np
import pytest

import worldgen
from world import parse_world


@pytest.mark.parametrize(
    "kind, width, height, seed",
    [
        ("room", 9, 7, 0),
        ("corridor", 10, 0, 0),
        ("tjunction", 10, 8, 0),
        ("maze", 30, 30, 3),
        ("cave", 40, 30, 5),
    ],
)
def test_generated_worlds_parse_and_start_is_reachable(kind, width, height, seed) -> None:
    world = parse_world(worldgen.generate(kind, width, height, seed))
    mask = world.reachable_mask()
    sx, sy = world.start_cell
    assert mask[sy, sx]
    assert mask.sum() > 1


def test_generation_is_deterministic() -> None:
    assert worldgen.maze(31, 31, seed=4) == worldgen.maze(31, 31, seed=4)
    assert worldgen.maze(31, 31, seed=4) != worldgen.maze(31, 31, seed=5)
    assert worldgen.cave(40, 40, seed=2) == worldgen.cave(40, 40, seed=2)


def test_maze_free_space_is_one_component() -> None:
    world = parse_world(worldgen.maze(50, 50, seed=0, risk_fraction=0.1))
    free = world.traversable & (world.risk < 0.95)
    assert world.reachable_mask().sum() == free.sum()
    assert world.risk[world.traversable].max() <= 4 / 9 + 1e-12


def test_cave_keeps_only_the_start_component() -> None:
    world = parse_world(worldgen.cave(40, 40, seed=1))
    assert (world.reachable_mask() == world.traversable).all()


def test_corridor_shape() -> None:
    world = parse_world(worldgen.corridor(10))
    assert (world.width, world.height) == (12, 3)
    assert int(world.traversable.sum()) == 10
    assert world.start_cell == (1, 1)


def test_tjunction_has_three_dead_ends() -> None:
    world = parse_world(worldgen.tjunction(5, 6))
    free = world.traversable
    ends = 0
    for y, x in zip(*np.nonzero(free)):
        n = free[y - 1:y + 2, x - 1:x + 2].sum() - 1
        ends += int(n == 1)
    assert ends == 3


@pytest.mark.parametrize(
    "call",
    [
        lambda: worldgen.room(2, 5),
        lambda: worldgen.corridor(0),
        lambda: worldgen.maze(4, 9),
        lambda: worldgen.cave(6, 6),
        lambda: worldgen.generate("swamp", 10, 10),
    ],
)
def test_too_small_or_unknown_is_rejected(call) -> None:
    with pytest.raises(ValueError):
        call()

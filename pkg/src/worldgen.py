"""Deterministic environment generators.

Every generator returns environment-file text (see :func:`world.parse_world`)
so generated and hand-written fixtures go through the same parser.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

KINDS = ("room", "corridor", "tjunction", "maze", "cave")


def _render(grid: np.ndarray, start: tuple[int, int], resolution: float,
            risk_digits: np.ndarray | None = None) -> str:
    """*grid* is True where free; *risk_digits* holds 0..9 per free cell."""
    h, w = grid.shape
    lines = [f"{w} {h} {resolution:g}"]
    for y in range(h):
        row = []
        for x in range(w):
            if (x, y) == start:
                row.append("S")
            elif not grid[y, x]:
                row.append("#")
            else:
                d = 0 if risk_digits is None else int(risk_digits[y, x])
                row.append("." if d == 0 else str(d))
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def room(width: int, height: int, resolution: float = 1.0) -> str:
    if width < 3 or height < 3:
        raise ValueError("room needs at least 3x3 cells")
    grid = np.zeros((height, width), dtype=bool)
    grid[1:-1, 1:-1] = True
    return _render(grid, (width // 2, height // 2), resolution)


def corridor(length: int, resolution: float = 1.0) -> str:
    """Walled 1-cell corridor of *length* free cells, start at the west end."""
    if length < 1:
        raise ValueError("corridor needs at least one free cell")
    grid = np.zeros((3, length + 2), dtype=bool)
    grid[1, 1:-1] = True
    return _render(grid, (1, 1), resolution)


def tjunction(arm: int, stem: int, resolution: float = 1.0) -> str:
    """Horizontal bar of ``2*arm+1`` cells with a stem going down from its middle."""
    if arm < 1 or stem < 1:
        raise ValueError("tjunction arms must be positive")
    width = 2 * arm + 3
    height = stem + 3
    grid = np.zeros((height, width), dtype=bool)
    grid[1, 1:-1] = True
    mid = width // 2
    grid[1:stem + 2, mid] = True
    return _render(grid, (mid, stem + 1), resolution)


def maze(width: int, height: int, seed: int = 0, resolution: float = 1.0,
         risk_fraction: float = 0.0) -> str:
    """Randomized depth-first maze carved on odd coordinates."""
    if width < 5 or height < 5:
        raise ValueError("maze needs at least 5x5 cells")
    rng = np.random.default_rng(seed)
    grid = np.zeros((height, width), dtype=bool)
    cols = (width - 1) // 2
    rows = (height - 1) // 2
    visited = np.zeros((rows, cols), dtype=bool)
    stack = [(0, 0)]
    visited[0, 0] = True
    grid[1, 1] = True
    while stack:
        cx, cy = stack[-1]
        options = [
            (cx + dx, cy + dy)
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
            if 0 <= cx + dx < cols and 0 <= cy + dy < rows and not visited[cy + dy, cx + dx]
        ]
        if not options:
            stack.pop()
            continue
        nx_, ny_ = options[int(rng.integers(len(options)))]
        visited[ny_, nx_] = True
        grid[2 * ny_ + 1, 2 * nx_ + 1] = True
        grid[cy + ny_ + 1, cx + nx_ + 1] = True
        stack.append((nx_, ny_))

    digits = None
    if risk_fraction > 0.0:
        digits = np.zeros_like(grid, dtype=int)
        sprinkle = grid & (rng.random(grid.shape) < risk_fraction)
        sprinkle[1, 1] = False
        digits[sprinkle] = rng.integers(1, 5, size=int(sprinkle.sum()))
    return _render(grid, (1, 1), resolution, digits)


def cave(width: int, height: int, seed: int = 0, resolution: float = 1.0,
         fill: float = 0.42, iterations: int = 4) -> str:
    """Cellular-automaton cave; only the component holding the start stays open."""
    if width < 8 or height < 8:
        raise ValueError("cave needs at least 8x8 cells")
    rng = np.random.default_rng(seed)
    wall = rng.random((height, width)) < fill
    wall[0, :] = wall[-1, :] = True
    wall[:, 0] = wall[:, -1] = True
    kernel = np.ones((3, 3), dtype=int)
    for _ in range(iterations):
        neighbours = ndimage.convolve(wall.astype(int), kernel, mode="constant", cval=1)
        wall = neighbours >= 5
        wall[0, :] = wall[-1, :] = True
        wall[:, 0] = wall[:, -1] = True

    free = ~wall
    labels, count = ndimage.label(free, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        raise ValueError("cave generation produced no free space; lower fill")
    sizes = ndimage.sum(free, labels, index=range(1, count + 1))
    keep = int(np.argmax(sizes)) + 1
    free = labels == keep
    ys, xs = np.nonzero(free)
    centre = np.array([width / 2.0, height / 2.0])
    order = np.argsort((xs - centre[0]) ** 2 + (ys - centre[1]) ** 2, kind="stable")
    start = (int(xs[order[0]]), int(ys[order[0]]))
    return _render(free, start, resolution)


def generate(kind: str, width: int = 0, height: int = 0, seed: int = 0, **options) -> str:
    """Dispatch by family name; ``corridor`` uses *width* as its length."""
    if kind == "room":
        return room(width, height, **options)
    if kind == "corridor":
        return corridor(width, **options)
    if kind == "tjunction":
        return tjunction(options.pop("arm", max(1, width // 2)),
                         options.pop("stem", max(1, height - 3)), **options)
    if kind == "maze":
        return maze(width, height, seed=seed, **options)
    if kind == "cave":
        return cave(width, height, seed=seed, **options)
    raise ValueError(f"unknown environment kind {kind!r}, expected one of {KINDS}")

"""Primitive-move policies shared by every planner and the executive."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from world import DIRECTIONS, Cell


class PolicySource(str, Enum):
    LCP = "LCP"
    GCP_GUIDED = "GCP-guided"
    RECONCILED = "reconciled"
    NBV = "NBV"
    HFE = "HFE"


@dataclass(frozen=True)
class Policy:
    """Open-loop primitive actions anchored at step ``anchor``.

    ``predicted_rewards[i]`` is the undiscounted step reward the planner
    expected for ``actions[i]``; reconciliation compares it against a
    re-simulation under the newer belief.
    """

    anchor: int
    actions: tuple[int, ...]
    horizon: int
    source: PolicySource
    predicted_rewards: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.actions) > self.horizon:
            raise ValueError(f"policy of {len(self.actions)} actions exceeds horizon {self.horizon}")
        if any(not 0 <= a < len(DIRECTIONS) for a in self.actions):
            raise ValueError(f"policy holds non-primitive actions {self.actions}")
        if self.predicted_rewards and len(self.predicted_rewards) != len(self.actions):
            raise ValueError("predicted_rewards must match actions one to one")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def empty(self) -> bool:
        return not self.actions

    def tail(self, executed: int) -> tuple[int, ...]:
        return self.actions[executed:]

    def tail_rewards(self, executed: int) -> tuple[float, ...]:
        return self.predicted_rewards[executed:]

    def cells(self, start: Cell) -> list[Cell]:
        """Start cell followed by every cell the actions visit."""
        out = [start]
        for a in self.actions:
            dx, dy = DIRECTIONS[a]
            out.append((out[-1][0] + dx, out[-1][1] + dy))
        return out

    @classmethod
    def hold(cls, anchor: int, horizon: int, source: PolicySource) -> "Policy":
        return cls(anchor=anchor, actions=(), horizon=horizon, source=source)


def moves_from_path(path: Sequence[Cell]) -> tuple[int, ...]:
    return tuple(
        DIRECTIONS.index((b[0] - a[0], b[1] - a[1])) for a, b in zip(path, path[1:])
    )

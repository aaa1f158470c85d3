"""Shaped and sparse rewards computed from engine events."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, fields
from typing import Iterable, Mapping

from .engine import EventKind, GameEvent


@dataclass(frozen=True)
class RewardWeights:
    win: float = 10.0
    draw: float = 0.0
    loss: float = -10.0
    harvest: float = 1.0
    produce_worker: float = 1.0
    construct_building: float = 0.2
    valid_attack: float = 1.0
    produce_combat_unit: float = 4.0
    return_resource: float = 0.0

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "RewardWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown reward weights: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in values.items()})

    def weight(self, kind: EventKind) -> float:
        return _WEIGHT_OF[kind](self)


_WEIGHT_OF = {
    EventKind.WIN: lambda w: w.win,
    EventKind.DRAW: lambda w: w.draw,
    EventKind.LOSS: lambda w: w.loss,
    EventKind.HARVEST: lambda w: w.harvest,
    EventKind.PRODUCE_WORKER: lambda w: w.produce_worker,
    EventKind.CONSTRUCT_BUILDING: lambda w: w.construct_building,
    EventKind.ATTACK_ISSUED: lambda w: w.valid_attack,
    EventKind.PRODUCE_COMBAT_UNIT: lambda w: w.produce_combat_unit,
    EventKind.RETURN_RESOURCE: lambda w: w.return_resource,
}

DEFAULT_WEIGHTS = RewardWeights()

SPARSE = {EventKind.WIN: 1.0, EventKind.DRAW: 0.0, EventKind.LOSS: -1.0}


def shape(events: Iterable[GameEvent], player: int,
          weights: RewardWeights = DEFAULT_WEIGHTS) -> tuple[float, dict[int, float]]:
    """Total shaped reward for ``player`` and its breakdown by initiating unit id.

    Terminal events carry unit id -1 in the breakdown.
    """
    total = 0.0
    per_unit: dict[int, float] = defaultdict(float)
    for ev in events:
        if ev.player != player:
            continue
        r = weights.weight(ev.kind)
        total += r
        per_unit[ev.unit_id] += r
    return total, dict(per_unit)


def sparse(outcome: EventKind | int) -> float:
    """+1 / 0 / -1 for a win / draw / loss, given an event kind or a winner-relative int."""
    if isinstance(outcome, EventKind):
        if outcome not in SPARSE:
            raise ValueError(f"{outcome!r} is not a terminal outcome")
        return SPARSE[outcome]
    if outcome not in (1, 0, -1):
        raise ValueError(f"outcome must be 1, 0 or -1, got {outcome}")
    return float(outcome)


def outcome_for(winner: int, player: int) -> int:
    """Winner code from ``step`` (0, 1, or -1 draw) seen from ``player``: 1, 0 or -1."""
    if winner == -1:
        return 0
    return 1 if winner == player else -1

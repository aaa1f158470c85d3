"""Unit action vectors and validity masks.

A unit mask has 78 bits laid out as the logit partition
``[6 | 4 | 4 | 4 | 4 | 7 | 49]``: action type, move, harvest, return,
produce direction, produce type, relative attack position. Gridnet rows
prepend one source-availability bit (79 wide).
"""
from __future__ import annotations

from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .engine import (ATTACK, ATTACK_WINDOW, HARVEST, MOVE, NOOP, PRODUCE, RETURN,
                     GameError, GameState, UnitActionCommand, unit_options)

COMPONENT_SIZES = (6, 4, 4, 4, 4, 7, ATTACK_WINDOW * ATTACK_WINDOW)
COMPONENT_NAMES = ("action_type", "move", "harvest", "return", "produce_dir", "produce_type",
                   "attack_pos")
COMPONENT_OFFSETS = tuple(int(v) for v in np.cumsum((0,) + COMPONENT_SIZES[:-1]))
UNIT_MASK_WIDTH = sum(COMPONENT_SIZES)  # 78
GRID_MASK_WIDTH = UNIT_MASK_WIDTH + 1   # 79

TYPE_SLICE = slice(0, 6)
MOVE_SLICE = slice(6, 10)
HARVEST_SLICE = slice(10, 14)
RETURN_SLICE = slice(14, 18)
PDIR_SLICE = slice(18, 22)
PTYPE_SLICE = slice(22, 29)
ATTACK_SLICE = slice(29, 78)

# parameter components (indices into COMPONENT_SIZES) consumed by each action type
CONSUMED = {NOOP: (), MOVE: (1,), HARVEST: (2,), RETURN: (3,), PRODUCE: (4, 5), ATTACK: (6,)}


class MaskLevel(str, Enum):
    FULL = "full"
    PARTIAL = "partial"
    NONE = "none"


def encode_action(cmd: UnitActionCommand, w: int, h: int) -> list[int]:
    vec = [int(v) for v in cmd]
    _check_ranges(vec, w, h)
    return vec


def decode_action(vec: Sequence[int], w: int, h: int) -> UnitActionCommand:
    if len(vec) != 8:
        raise GameError(f"action vector must have 8 components, got {len(vec)}")
    vals = [int(v) for v in vec]
    _check_ranges(vals, w, h)
    return UnitActionCommand(*vals)


def _check_ranges(vec: Sequence[int], w: int, h: int) -> None:
    limits = (w * h,) + COMPONENT_SIZES
    for i, (v, n) in enumerate(zip(vec, limits)):
        if not 0 <= v < n:
            raise GameError(f"action component {i} = {v} outside [0, {n - 1}]")


def command_from_components(source: int, comps: Sequence[int]) -> UnitActionCommand:
    """Build a command from a source cell and 7 component selections."""
    return UnitActionCommand(source, *(int(c) for c in comps))


def source_unit_mask(s: GameState, player: int) -> np.ndarray:
    mask = np.zeros(s.w * s.h, dtype=bool)
    w = s.w
    for u in s.units.values():
        if u.owner == player and u.busy is None:
            mask[u.x + u.y * w] = True
    return mask


def _fill_full(s: GameState, u, out: np.ndarray) -> None:
    o = unit_options(s, u)
    out[NOOP] = True
    if o.moves:
        out[MOVE] = True
        out[[6 + d for d in o.moves]] = True
    if o.harvests:
        out[HARVEST] = True
        out[[10 + d for d in o.harvests]] = True
    if o.returns:
        out[RETURN] = True
        out[[14 + d for d in o.returns]] = True
    if o.produce_dirs:
        out[PRODUCE] = True
        out[[18 + d for d in o.produce_dirs]] = True
        out[[22 + p for p in o.produce_types]] = True
    if o.attacks:
        out[ATTACK] = True
        out[[29 + i for i in o.attacks]] = True


def unit_action_mask(s: GameState, unit_id: int, level: MaskLevel | str = MaskLevel.FULL,
                     player: Optional[int] = None) -> np.ndarray:
    level = MaskLevel(level)
    u = s.units.get(unit_id)
    if u is None or u.owner < 0 or (player is not None and u.owner != player):
        raise GameError(f"unit {unit_id} is not an actionable unit of this player")
    if u.busy is not None:
        raise GameError(f"unit {unit_id} is busy")
    out = np.zeros(UNIT_MASK_WIDTH, dtype=bool)
    if level is MaskLevel.NONE:
        out[:] = True
        return out
    _fill_full(s, u, out)
    if level is MaskLevel.PARTIAL:
        out[6:] = True
    return out


def gridnet_mask(s: GameState, player: int, level: MaskLevel | str = MaskLevel.FULL) -> np.ndarray:
    level = MaskLevel(level)
    mask = np.zeros((s.w * s.h, GRID_MASK_WIDTH), dtype=bool)
    mask[:, 1 + NOOP] = True  # degenerate rows still admit NOOP
    w = s.w
    for u in s.units.values():
        if u.owner == player and u.busy is None:
            row = mask[u.x + u.y * w]
            row[0] = True
            if level is MaskLevel.NONE:
                row[1:] = True
            else:
                _fill_full(s, u, row[1:])
                if level is MaskLevel.PARTIAL:
                    row[7:] = True
    return mask


# ----------------------------------------------------------------------------
# Player-2 perspective: 180 degree rotation maps cell c -> hw-1-c, direction
# d -> (d+2)%4 and attack offset (dx,dy) -> (-dx,-dy), i.e. index i -> 48-i.

_DIR_FLIP = np.array([2, 3, 0, 1])
_UNIT_PERM = np.concatenate([
    np.arange(6),
    6 + _DIR_FLIP, 10 + _DIR_FLIP, 14 + _DIR_FLIP, 18 + _DIR_FLIP,
    np.arange(22, 29),
    29 + np.arange(48, -1, -1),
])


def flip_command(cmd: UnitActionCommand, w: int, h: int) -> UnitActionCommand:
    return UnitActionCommand(w * h - 1 - cmd.source, cmd.action_type, (cmd.move + 2) % 4,
                             (cmd.harvest + 2) % 4, (cmd.ret + 2) % 4, (cmd.produce_dir + 2) % 4,
                             cmd.produce_type, ATTACK_WINDOW * ATTACK_WINDOW - 1 - cmd.attack_pos)


def flip_unit_mask(mask: np.ndarray) -> np.ndarray:
    """Re-index a (..., 78) mask or logit array into the rotated frame (an involution)."""
    return mask[..., _UNIT_PERM]


def flip_source_mask(mask: np.ndarray) -> np.ndarray:
    return mask[::-1].copy()


def flip_grid_mask(mask: np.ndarray) -> np.ndarray:
    out = mask[::-1]
    return np.concatenate([out[:, :1], out[:, 1:][:, _UNIT_PERM]], axis=1)


"""Binary feature-plane encoding of a game state.

Layout is row-major ``(y, x, plane)`` with 27 planes:

    0-4    hit points       0, 1, 2, 3, >=4
    5-9    resources        0, 1, 2, 3, >=4   (carried, or node stock)
    10-12  owner            player 1, none, player 2
    13-20  unit type        none, resource, base, barracks, worker, light, heavy, ranged
    21-26  current action   none, move, harvest, return, produce, attack

Empty cells take the zero/none entry of every group. For player 2 the grid is
rotated 180 degrees and the owner planes swapped, so the observer always sees
itself as player 1.
"""
from __future__ import annotations

import numpy as np

from .engine import P2, GameState, NOOP

NUM_PLANES = 27
HP_OFFSET, RES_OFFSET, OWNER_OFFSET, TYPE_OFFSET, ACTION_OFFSET = 0, 5, 10, 13, 21

_EMPTY_CELL = np.zeros(NUM_PLANES, dtype=np.uint8)
_EMPTY_CELL[[HP_OFFSET, RES_OFFSET, OWNER_OFFSET + 1, TYPE_OFFSET, ACTION_OFFSET]] = 1

_templates: dict[tuple[int, int], np.ndarray] = {}


def _template(h: int, w: int) -> np.ndarray:
    t = _templates.get((h, w))
    if t is None:
        t = _templates[(h, w)] = np.broadcast_to(_EMPTY_CELL, (h, w, NUM_PLANES)).copy()
    return t


def encode(s: GameState, player: int = 0) -> np.ndarray:
    obs = _template(s.h, s.w).copy()
    if s.units:
        n = len(s.units)
        ys = np.empty(n, dtype=np.intp)
        xs = np.empty(n, dtype=np.intp)
        hot = np.empty((n, 5), dtype=np.intp)
        for i, u in enumerate(s.units.values()):
            ys[i] = u.y
            xs[i] = u.x
            b = u.busy
            act = NOOP if b is None else b.command.action_type
            hot[i] = (HP_OFFSET + min(u.hp, 4), RES_OFFSET + min(u.carried, 4),
                      OWNER_OFFSET + (1 if u.owner < 0 else 2 * u.owner),
                      TYPE_OFFSET + 1 + u.type, ACTION_OFFSET + act)
        obs[ys, xs] = 0
        obs[ys[:, None], xs[:, None], hot] = 1
    if player == P2:
        obs = flip_perspective(obs)
    return obs


def flip_perspective(obs: np.ndarray) -> np.ndarray:
    """Rotate 180 degrees and swap the player-1/player-2 owner planes (an involution)."""
    out = obs[::-1, ::-1].copy()
    out[..., [OWNER_OFFSET, OWNER_OFFSET + 2]] = out[..., [OWNER_OFFSET + 2, OWNER_OFFSET]]
    return out

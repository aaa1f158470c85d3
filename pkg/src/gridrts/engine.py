"""Deterministic tick-based RTS simulation.

The state is a small grid of units. Every command is durative: it occupies the
unit for a fixed number of ticks and resolves when the counter reaches zero.
Events (harvest, produce, attack) are emitted on the tick a command is issued.

Players are ``0`` (P1) and ``1`` (P2); resource nodes have owner ``-1``.
``step`` mutates the state in place for throughput; use ``GameState.clone``
when value semantics are needed.
"""
from __future__ import annotations

import configparser
import hashlib
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

P1, P2, NO_OWNER = 0, 1, -1

UNIT_TYPES = ("resource", "base", "barracks", "worker", "light", "heavy", "ranged")
RESOURCE, BASE, BARRACKS, WORKER, LIGHT, HEAVY, RANGED = range(7)
COMBAT_TYPES = frozenset((LIGHT, HEAVY, RANGED))

ACTION_TYPES = ("noop", "move", "harvest", "return", "produce", "attack")
NOOP, MOVE, HARVEST, RETURN, PRODUCE, ATTACK = range(6)

# N, E, S, W
DIRECTIONS = ((0, -1), (1, 0), (0, 1), (-1, 0))
ATTACK_WINDOW = 7
ATTACK_HALF = ATTACK_WINDOW // 2


class GameError(ValueError):
    """Raised for malformed maps, unit tables and protocol violations."""


class UnitActionCommand(NamedTuple):
    """The 8-component unit action vector; the tuple itself is the flat encoding."""

    source: int
    action_type: int = NOOP
    move: int = 0
    harvest: int = 0
    ret: int = 0
    produce_dir: int = 0
    produce_type: int = 0
    attack_pos: int = 0

    def canonical(self) -> "UnitActionCommand":
        """Zero every parameter the action type does not consume."""
        t = self.action_type
        if t == NOOP:
            return UnitActionCommand(self.source)
        if t == MOVE:
            return UnitActionCommand(self.source, MOVE, move=self.move)
        if t == HARVEST:
            return UnitActionCommand(self.source, HARVEST, harvest=self.harvest)
        if t == RETURN:
            return UnitActionCommand(self.source, RETURN, ret=self.ret)
        if t == PRODUCE:
            return UnitActionCommand(self.source, PRODUCE, produce_dir=self.produce_dir,
                                     produce_type=self.produce_type)
        return UnitActionCommand(self.source, ATTACK, attack_pos=self.attack_pos)


def attack_index(dx: int, dy: int) -> int:
    return (dy + ATTACK_HALF) * ATTACK_WINDOW + (dx + ATTACK_HALF)


def attack_offset(index: int) -> tuple[int, int]:
    dy, dx = divmod(index, ATTACK_WINDOW)
    return dx - ATTACK_HALF, dy - ATTACK_HALF


class EventKind(IntEnum):
    HARVEST = 0
    RETURN_RESOURCE = 1
    PRODUCE_WORKER = 2
    CONSTRUCT_BUILDING = 3
    PRODUCE_COMBAT_UNIT = 4
    ATTACK_ISSUED = 5
    WIN = 6
    DRAW = 7
    LOSS = 8


class GameEvent(NamedTuple):
    kind: EventKind
    player: int
    unit_id: int
    tick: int


@dataclass(frozen=True)
class UnitTypeStats:
    type_id: int
    cost: int
    max_hp: int
    attack_damage: int
    attack_range: int
    move_time: int
    attack_time: int
    harvest_time: int
    return_time: int
    produce_time: int
    harvest_amount: int
    can_move: bool
    can_attack: bool
    can_harvest: bool
    is_structure: bool
    produces: tuple[int, ...] = ()

    @property
    def name(self) -> str:
        return UNIT_TYPES[self.type_id]


_UTT_INT_FIELDS = ("cost", "max_hp", "attack_damage", "attack_range", "move_time",
                   "attack_time", "harvest_time", "return_time", "produce_time",
                   "harvest_amount")
_UTT_BOOL_FIELDS = ("can_move", "can_attack", "can_harvest", "is_structure")


def parse_utt(text: str) -> tuple[UnitTypeStats, ...]:
    """Parse a unit-type table (one INI section per unit type)."""
    cp = configparser.ConfigParser()
    cp.read_string(text)
    table = []
    for type_id, name in enumerate(UNIT_TYPES):
        if not cp.has_section(name):
            raise GameError(f"unit-type table is missing section [{name}]")
        sec = cp[name]
        try:
            kwargs = {k: sec.getint(k) for k in _UTT_INT_FIELDS}
            kwargs.update({k: sec.getboolean(k) for k in _UTT_BOOL_FIELDS})
        except (ValueError, TypeError) as exc:
            raise GameError(f"bad value in [{name}]: {exc}") from None
        produced = [p.strip() for p in sec.get("produces", "").split(",") if p.strip()]
        try:
            kwargs["produces"] = tuple(UNIT_TYPES.index(p) for p in produced)
        except ValueError:
            raise GameError(f"[{name}] produces an unknown unit type: {produced}") from None
        table.append(UnitTypeStats(type_id=type_id, **kwargs))
    validate_utt(table)
    return tuple(table)


def validate_utt(table: Sequence[UnitTypeStats]) -> None:
    if len(table) != len(UNIT_TYPES):
        raise GameError("unit-type table must cover all 7 unit types")
    for st in table:
        times = (st.move_time, st.attack_time, st.harvest_time, st.return_time, st.produce_time)
        if min(times) < 1 or st.cost < 0 or st.max_hp < 1:
            raise GameError(f"invalid stats for {st.name}")
        if st.can_harvest and st.type_id != WORKER:
            raise GameError("only workers may harvest")
    if table[RESOURCE].produces:
        raise GameError("resource nodes cannot produce")


def load_utt(path: str | Path | None = None) -> tuple[UnitTypeStats, ...]:
    if path is None:
        return default_utt()
    return parse_utt(Path(path).read_text())


_DEFAULT_UTT: Optional[tuple[UnitTypeStats, ...]] = None


def default_utt() -> tuple[UnitTypeStats, ...]:
    global _DEFAULT_UTT
    if _DEFAULT_UTT is None:
        _DEFAULT_UTT = parse_utt(resources.files("gridrts.data").joinpath("utt.ini").read_text())
    return _DEFAULT_UTT


# ----------------------------------------------------------------------------
# Maps

_MAP_CHARS = {
    "r": (RESOURCE, NO_OWNER),
    "b": (BASE, P1), "B": (BASE, P2),
    "k": (BARRACKS, P1), "K": (BARRACKS, P2),
    "w": (WORKER, P1), "W": (WORKER, P2),
    "l": (LIGHT, P1), "L": (LIGHT, P2),
    "h": (HEAVY, P1), "H": (HEAVY, P2),
    "g": (RANGED, P1), "G": (RANGED, P2),
}
DEFAULT_RESOURCE_STOCK = 25
DEFAULT_STOCKPILE = 5


class MapUnit(NamedTuple):
    type_id: int
    owner: int
    x: int
    y: int
    amount: int = 0


@dataclass
class MapSpec:
    w: int
    h: int
    units: list[MapUnit]
    stockpiles: list[int] = field(default_factory=lambda: [DEFAULT_STOCKPILE, DEFAULT_STOCKPILE])
    name: str = ""


def parse_map(text: str, name: str = "") -> MapSpec:
    """Parse the line-oriented ``rtsmap v1`` format.

    ``k``/``K`` mark barracks; the remaining letters follow the unit initials.
    """
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or lines[0].strip() != "rtsmap v1":
        raise GameError("map must start with 'rtsmap v1'")
    try:
        w, h = (int(v) for v in lines[1].split())
    except (IndexError, ValueError):
        raise GameError("map line 2 must be 'w h'") from None
    if w < 1 or h < 1:
        raise GameError("map dimensions must be positive")
    rows = lines[2:2 + h]
    if len(rows) != h:
        raise GameError(f"expected {h} map rows, found {len(rows)}")
    units: list[MapUnit] = []
    for y, row in enumerate(rows):
        if len(row) != w:
            raise GameError(f"map row {y} has width {len(row)}, expected {w}")
        for x, ch in enumerate(row):
            if ch == ".":
                continue
            if ch not in _MAP_CHARS:
                raise GameError(f"unknown map character {ch!r} at ({x},{y})")
            type_id, owner = _MAP_CHARS[ch]
            units.append(MapUnit(type_id, owner, x, y, DEFAULT_RESOURCE_STOCK if type_id == RESOURCE else 0))
    spec = MapSpec(w, h, units, name=name)
    for ln in lines[2 + h:]:
        parts = ln.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "resource" and len(parts) == 4:
                x, y, amount = (int(p) for p in parts[1:])
                idx = next((i for i, u in enumerate(spec.units)
                            if u.x == x and u.y == y and u.type_id == RESOURCE), None)
                if idx is None:
                    raise GameError(f"resource override at ({x},{y}) has no resource node")
                spec.units[idx] = spec.units[idx]._replace(amount=amount)
            elif parts[0] == "stockpile" and len(parts) == 3:
                p, amount = int(parts[1]), int(parts[2])
                if p not in (1, 2):
                    raise GameError("stockpile player must be 1 or 2")
                spec.stockpiles[p - 1] = amount
            else:
                raise GameError(f"unrecognised map directive: {ln!r}")
        except ValueError:
            raise GameError(f"bad map directive: {ln!r}") from None
    return spec


BUILTIN_MAPS = ("basesWorkers16x16", "basesWorkers8x8")


def load_map(path_or_name: str | Path) -> MapSpec:
    """Load a map file, or one of the bundled maps by name."""
    key = str(path_or_name)
    stem = Path(key).stem
    if not Path(key).exists() and stem in BUILTIN_MAPS:
        text = resources.files("gridrts.data").joinpath(f"{stem}.map").read_text()
        return parse_map(text, name=stem)
    try:
        text = Path(key).read_text()
    except OSError as exc:
        raise GameError(f"cannot read map {key}: {exc}") from None
    return parse_map(text, name=stem)


# ----------------------------------------------------------------------------
# State


class InProgressAction:
    __slots__ = ("command", "ticks", "target")

    def __init__(self, command: UnitActionCommand, ticks: int, target: int = -1):
        self.command = command
        self.ticks = ticks
        # cell index for move/produce, unit id for harvest/return/attack
        self.target = target

    @property
    def ticks_remaining(self) -> int:
        return self.ticks

    def __repr__(self) -> str:
        return f"InProgressAction({ACTION_TYPES[self.command.action_type]}, ticks={self.ticks})"


class Unit:
    __slots__ = ("id", "owner", "type", "x", "y", "hp", "carried", "busy")

    def __init__(self, uid, owner, type_id, x, y, hp, carried=0, busy=None):
        self.id = uid
        self.owner = owner
        self.type = type_id
        self.x = x
        self.y = y
        self.hp = hp
        self.carried = carried
        self.busy: Optional[InProgressAction] = busy

    def copy(self) -> "Unit":
        b = self.busy
        if b is not None:
            b = InProgressAction(b.command, b.ticks, b.target)
        return Unit(self.id, self.owner, self.type, self.x, self.y, self.hp, self.carried, b)

    def __repr__(self) -> str:
        return (f"Unit(id={self.id}, owner={self.owner}, {UNIT_TYPES[self.type]} "
                f"@({self.x},{self.y}), hp={self.hp}, carried={self.carried}, busy={self.busy})")


_NEIGHBOURS: dict[tuple[int, int], tuple[tuple[int, int, int, int], ...]] = {}


def neighbour_table(w: int, h: int) -> tuple[tuple[int, int, int, int], ...]:
    """Per cell, the N/E/S/W neighbour cell index or -1 off-grid."""
    key = (w, h)
    table = _NEIGHBOURS.get(key)
    if table is None:
        rows = []
        for c in range(w * h):
            x, y = c % w, c // w
            rows.append(tuple((x + dx) + (y + dy) * w if 0 <= x + dx < w and 0 <= y + dy < h else -1
                              for dx, dy in DIRECTIONS))
        table = _NEIGHBOURS[key] = tuple(rows)
    return table


_ATTACK_OFFSETS: dict[int, tuple[tuple[int, int, int], ...]] = {}


def attack_offsets(attack_range: int) -> tuple[tuple[int, int, int], ...]:
    """(window index, dx, dy) reachable with a circular range, inside the 7x7 window."""
    offs = _ATTACK_OFFSETS.get(attack_range)
    if offs is None:
        r2 = attack_range * attack_range
        offs = tuple((attack_index(dx, dy), dx, dy)
                     for dy in range(-ATTACK_HALF, ATTACK_HALF + 1)
                     for dx in range(-ATTACK_HALF, ATTACK_HALF + 1)
                     if (dx or dy) and dx * dx + dy * dy <= r2)
        _ATTACK_OFFSETS[attack_range] = offs
    return offs


class StepResult(NamedTuple):
    events: list[GameEvent]
    winner: Optional[int]  # 0, 1, or -1 for a draw; None while running
    dropped: tuple[int, int]


class GameState:
    """Full simulation state. ``grid`` and ``reserved`` are indexes kept in sync with ``units``."""

    __slots__ = ("w", "h", "tick", "max_ticks", "units", "grid", "resources", "reserved",
                 "next_id", "rng_state", "utt", "spent", "destroyed", "winner", "nbr")

    def __init__(self, w: int, h: int, utt: Sequence[UnitTypeStats], max_ticks: int, seed: int = 0):
        self.w = w
        self.h = h
        self.tick = 0
        self.max_ticks = max_ticks
        self.units: dict[int, Unit] = {}
        self.grid: list[Optional[Unit]] = [None] * (w * h)
        self.resources = [0, 0]
        self.reserved: dict[int, int] = {}  # cell -> unit id of the pending move/produce
        self.next_id = 0
        self.rng_state = _splitmix64(seed)
        self.utt = tuple(utt)
        self.spent = 0      # cost of completed productions
        self.destroyed = 0  # resources lost with dead units
        self.winner: Optional[int] = None
        self.nbr = neighbour_table(w, h)

    # -- construction helpers -------------------------------------------------
    def add_unit(self, type_id: int, owner: int, x: int, y: int, carried: int = 0,
                 hp: Optional[int] = None) -> Unit:
        if not (0 <= x < self.w and 0 <= y < self.h):
            raise GameError(f"unit at ({x},{y}) is outside the {self.w}x{self.h} map")
        if self.grid[x + y * self.w] is not None:
            raise GameError(f"cell ({x},{y}) is already occupied")
        if (owner == NO_OWNER) != (type_id == RESOURCE):
            raise GameError("resource nodes, and only resource nodes, are unowned")
        u = Unit(self.next_id, owner, type_id, x, y,
                 self.utt[type_id].max_hp if hp is None else hp, carried)
        self.next_id += 1
        self.units[u.id] = u
        self.grid[x + y * self.w] = u
        return u

    def clone(self) -> "GameState":
        s = GameState.__new__(GameState)
        s.w, s.h, s.tick, s.max_ticks = self.w, self.h, self.tick, self.max_ticks
        s.utt, s.nbr, s.rng_state = self.utt, self.nbr, self.rng_state
        s.next_id, s.spent, s.destroyed, s.winner = self.next_id, self.spent, self.destroyed, self.winner
        s.resources = list(self.resources)
        s.reserved = dict(self.reserved)
        s.units = {uid: u.copy() for uid, u in self.units.items()}
        grid = [None] * (self.w * self.h)
        w = self.w
        for u in s.units.values():
            grid[u.x + u.y * w] = u
        s.grid = grid
        return s

    # -- queries -------------------------------------------------------------
    def unit_at(self, x: int, y: int) -> Optional[Unit]:
        return self.grid[x + y * self.w]

    def player_units(self, player: int) -> list[Unit]:
        return [u for u in self.units.values() if u.owner == player]

    def actionable_units(self, player: int) -> list[Unit]:
        return [u for u in self.units.values() if u.owner == player and u.busy is None]

    @property
    def done(self) -> bool:
        return self.winner is not None

    def total_resources(self) -> int:
        """Conserved quantity: stocks, carried, stockpiles, spent, in-production, destroyed."""
        total = self.resources[0] + self.resources[1] + self.spent + self.destroyed
        for u in self.units.values():
            total += u.carried
            b = u.busy
            if b is not None and b.command.action_type == PRODUCE:
                total += self.utt[b.command.produce_type].cost
        return total

    def __repr__(self) -> str:
        return f"GameState({self.w}x{self.h}, tick={self.tick}, units={len(self.units)}, resources={self.resources})"


def _splitmix64(seed: int) -> int:
    z = (seed + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def new_game(map_spec: MapSpec, utt: Optional[Sequence[UnitTypeStats]] = None, seed: int = 0,
             max_ticks: int = 2000) -> GameState:
    utt = default_utt() if utt is None else tuple(utt)
    validate_utt(utt)
    if max_ticks < 1:
        raise GameError("max_ticks must be positive")
    s = GameState(map_spec.w, map_spec.h, utt, max_ticks, seed)
    for mu in sorted(map_spec.units, key=lambda u: (u.y, u.x)):
        s.add_unit(mu.type_id, mu.owner, mu.x, mu.y, carried=mu.amount)
    if any(v < 0 for v in map_spec.stockpiles):
        raise GameError("stockpiles must be non-negative")
    s.resources = list(map_spec.stockpiles)
    return s


# ----------------------------------------------------------------------------
# Command validity


def _owned_idle_unit(s: GameState, player: int, source: int) -> Optional[Unit]:
    if not (0 <= source < s.w * s.h):
        return None
    u = s.grid[source]
    if u is None or u.owner != player or u.busy is not None:
        return None
    return u


def _target_cell(s: GameState, u: Unit, direction: int) -> int:
    if not (0 <= direction < 4):
        return -1
    return s.nbr[u.x + u.y * s.w][direction]


def is_valid_command(s: GameState, u: Unit, cmd: UnitActionCommand) -> bool:
    """Generic validity check of one command for an idle unit (the engine's acceptance rule)."""
    st = s.utt[u.type]
    t = cmd.action_type
    if t == NOOP:
        return True
    if t == MOVE:
        c = _target_cell(s, u, cmd.move)
        return st.can_move and c >= 0 and s.grid[c] is None and c not in s.reserved
    if t == HARVEST:
        c = _target_cell(s, u, cmd.harvest)
        if not st.can_harvest or c < 0 or u.carried != 0:
            return False
        v = s.grid[c]
        return v is not None and v.type == RESOURCE and v.carried > 0
    if t == RETURN:
        c = _target_cell(s, u, cmd.ret)
        if not st.can_harvest or c < 0 or u.carried <= 0:
            return False
        v = s.grid[c]
        return v is not None and v.type == BASE and v.owner == u.owner
    if t == PRODUCE:
        c = _target_cell(s, u, cmd.produce_dir)
        p = cmd.produce_type
        if c < 0 or not (0 <= p < len(UNIT_TYPES)) or p not in st.produces:
            return False
        return s.resources[u.owner] >= s.utt[p].cost and s.grid[c] is None and c not in s.reserved
    if t == ATTACK:
        if not st.can_attack or not (0 <= cmd.attack_pos < ATTACK_WINDOW * ATTACK_WINDOW):
            return False
        dx, dy = attack_offset(cmd.attack_pos)
        if (dx == 0 and dy == 0) or dx * dx + dy * dy > st.attack_range * st.attack_range:
            return False
        x, y = u.x + dx, u.y + dy
        if not (0 <= x < s.w and 0 <= y < s.h):
            return False
        v = s.grid[x + y * s.w]
        return v is not None and v.owner == 1 - u.owner
    return False


def _canonical_candidates(source: int) -> Iterable[UnitActionCommand]:
    yield UnitActionCommand(source)
    for d in range(4):
        yield UnitActionCommand(source, MOVE, move=d)
    for d in range(4):
        yield UnitActionCommand(source, HARVEST, harvest=d)
    for d in range(4):
        yield UnitActionCommand(source, RETURN, ret=d)
    for d in range(4):
        for p in range(len(UNIT_TYPES)):
            yield UnitActionCommand(source, PRODUCE, produce_dir=d, produce_type=p)
    for i in range(ATTACK_WINDOW * ATTACK_WINDOW):
        yield UnitActionCommand(source, ATTACK, attack_pos=i)


def _require_idle(s: GameState, unit_id: int) -> Unit:
    u = s.units.get(unit_id)
    if u is None:
        raise GameError(f"unknown unit {unit_id}")
    if u.owner == NO_OWNER:
        raise GameError(f"unit {unit_id} is not owned by a player")
    if u.busy is not None:
        raise GameError(f"unit {unit_id} is busy")
    return u


def valid_unit_actions(s: GameState, unit_id: int) -> list[UnitActionCommand]:
    """Brute-force oracle: every canonical command the engine would accept for this unit."""
    u = _require_idle(s, unit_id)
    source = u.x + u.y * s.w
    return [c for c in _canonical_candidates(source) if is_valid_command(s, u, c)]


class UnitOptions(NamedTuple):
    moves: tuple[int, ...]
    harvests: tuple[int, ...]
    returns: tuple[int, ...]
    produce_dirs: tuple[int, ...]
    produce_types: tuple[int, ...]
    attacks: tuple[int, ...]


def unit_options(s: GameState, u: Unit) -> UnitOptions:
    """Fast enumeration of the parameters each action type can take (joint validity is separable)."""
    st = s.utt[u.type]
    grid, reserved = s.grid, s.reserved
    nb = s.nbr[u.x + u.y * s.w]
    free = tuple(d for d in range(4) if nb[d] >= 0 and grid[nb[d]] is None and nb[d] not in reserved)
    harvests = returns = ()
    if st.can_harvest:
        if u.carried == 0:
            harvests = tuple(d for d in range(4) if nb[d] >= 0 and (v := grid[nb[d]]) is not None
                             and v.type == RESOURCE and v.carried > 0)
        else:
            returns = tuple(d for d in range(4) if nb[d] >= 0 and (v := grid[nb[d]]) is not None
                            and v.type == BASE and v.owner == u.owner)
    ptypes = ()
    if st.produces and free:
        budget = s.resources[u.owner]
        ptypes = tuple(p for p in st.produces if s.utt[p].cost <= budget)
    attacks = ()
    if st.can_attack:
        enemy = 1 - u.owner
        w, h, x0, y0 = s.w, s.h, u.x, u.y
        found = []
        for idx, dx, dy in attack_offsets(st.attack_range):
            x, y = x0 + dx, y0 + dy
            if 0 <= x < w and 0 <= y < h:
                v = grid[x + y * w]
                if v is not None and v.owner == enemy:
                    found.append(idx)
        attacks = tuple(found)
    return UnitOptions(free if st.can_move else (), harvests, returns,
                       free if ptypes else (), ptypes, attacks)


def legal_commands(s: GameState, u: Unit) -> list[UnitActionCommand]:
    """Same set as ``valid_unit_actions`` (same order), without the brute-force scan."""
    o = unit_options(s, u)
    src = u.x + u.y * s.w
    cmds = [UnitActionCommand(src)]
    cmds += [UnitActionCommand(src, MOVE, move=d) for d in o.moves]
    cmds += [UnitActionCommand(src, HARVEST, harvest=d) for d in o.harvests]
    cmds += [UnitActionCommand(src, RETURN, ret=d) for d in o.returns]
    cmds += [UnitActionCommand(src, PRODUCE, produce_dir=d, produce_type=p)
             for d in o.produce_dirs for p in o.produce_types]
    cmds += [UnitActionCommand(src, ATTACK, attack_pos=i) for i in o.attacks]
    return cmds


# ----------------------------------------------------------------------------
# Issue / resolve

_PRODUCE_EVENT = {WORKER: EventKind.PRODUCE_WORKER, BASE: EventKind.CONSTRUCT_BUILDING,
                  BARRACKS: EventKind.CONSTRUCT_BUILDING, LIGHT: EventKind.PRODUCE_COMBAT_UNIT,
                  HEAVY: EventKind.PRODUCE_COMBAT_UNIT, RANGED: EventKind.PRODUCE_COMBAT_UNIT}


def _issue(s: GameState, u: Unit, cmd: UnitActionCommand, events: Optional[list]) -> None:
    """Start a command that has already been validated."""
    st = s.utt[u.type]
    t = cmd.action_type
    if t == NOOP:
        u.busy = InProgressAction(cmd, 1)
    elif t == MOVE:
        c = s.nbr[u.x + u.y * s.w][cmd.move]
        s.reserved[c] = u.id
        u.busy = InProgressAction(cmd, st.move_time, c)
    elif t == HARVEST:
        c = s.nbr[u.x + u.y * s.w][cmd.harvest]
        u.busy = InProgressAction(cmd, st.harvest_time, s.grid[c].id)
        if events is not None:
            events.append(GameEvent(EventKind.HARVEST, u.owner, u.id, s.tick))
    elif t == RETURN:
        c = s.nbr[u.x + u.y * s.w][cmd.ret]
        u.busy = InProgressAction(cmd, st.return_time, s.grid[c].id)
        if events is not None:
            events.append(GameEvent(EventKind.RETURN_RESOURCE, u.owner, u.id, s.tick))
    elif t == PRODUCE:
        c = s.nbr[u.x + u.y * s.w][cmd.produce_dir]
        pst = s.utt[cmd.produce_type]
        s.resources[u.owner] -= pst.cost
        s.reserved[c] = u.id
        u.busy = InProgressAction(cmd, pst.produce_time, c)
        if events is not None:
            events.append(GameEvent(_PRODUCE_EVENT[cmd.produce_type], u.owner, u.id, s.tick))
    else:
        dx, dy = attack_offset(cmd.attack_pos)
        target = s.grid[(u.x + dx) + (u.y + dy) * s.w]
        u.busy = InProgressAction(cmd, st.attack_time, target.id)
        if events is not None:
            events.append(GameEvent(EventKind.ATTACK_ISSUED, u.owner, u.id, s.tick))


def simulate_issue(s: GameState, unit_id: int, cmd: UnitActionCommand,
                   events: Optional[list] = None) -> GameState:
    """Return a copy of ``s`` in which ``cmd`` has been issued to ``unit_id``.

    The unit becomes busy, produce costs are taken from the stockpile and
    move/produce targets are reserved, so later mask queries in the same
    decision round see earlier commitments. Time does not advance.
    """
    u = _require_idle(s, unit_id)
    if cmd.source != u.x + u.y * s.w or not is_valid_command(s, u, cmd):
        raise GameError(f"invalid command {tuple(cmd)} for unit {unit_id}")
    sim = s.clone()
    _issue(sim, sim.units[unit_id], cmd, events)
    return sim


def _remove(s: GameState, u: Unit) -> None:
    del s.units[u.id]
    s.grid[u.x + u.y * s.w] = None
    if u.type != RESOURCE:
        s.destroyed += u.carried
    b = u.busy
    if b is not None:
        t = b.command.action_type
        if t == MOVE or t == PRODUCE:
            if s.reserved.get(b.target) == u.id:
                del s.reserved[b.target]
            if t == PRODUCE:
                s.destroyed += s.utt[b.command.produce_type].cost


def step(s: GameState, p1: Sequence[UnitActionCommand] = (), p2: Sequence[UnitActionCommand] = ()) -> StepResult:
    """Advance one tick in place.

    Invalid commands are dropped and counted rather than raised. Commands of
    both players are validated against the pre-step state; produce costs are
    charged in list order so a player cannot overspend within one tick.
    """
    if s.winner is not None:
        raise GameError("game is already over")
    events: list[GameEvent] = []
    dropped = [0, 0]
    accepted = []
    for player, cmds in ((P1, p1), (P2, p2)):
        budget = s.resources[player]
        seen = set()
        for cmd in cmds:
            u = _owned_idle_unit(s, player, cmd.source)
            if u is None or u.id in seen or not is_valid_command(s, u, cmd):
                dropped[player] += 1
                continue
            if cmd.action_type == PRODUCE:
                cost = s.utt[cmd.produce_type].cost
                if cost > budget:
                    dropped[player] += 1
                    continue
                budget -= cost
            seen.add(u.id)
            accepted.append((u, cmd))
    for u, cmd in accepted:
        _issue(s, u, cmd, events)

    resolving = []
    for u in s.units.values():
        b = u.busy
        if b is not None:
            b.ticks -= 1
            if b.ticks <= 0:
                resolving.append(u)
    if resolving:
        _resolve(s, resolving)

    s.tick += 1
    alive = [False, False]
    for u in s.units.values():
        if u.owner >= 0:
            alive[u.owner] = True
    winner = None
    if not alive[0] or not alive[1]:
        winner = 0 if alive[0] else (1 if alive[1] else -1)
    elif s.tick >= s.max_ticks:
        winner = -1
    if winner is not None:
        s.winner = winner
        if winner == -1:
            events.append(GameEvent(EventKind.DRAW, P1, -1, s.tick))
            events.append(GameEvent(EventKind.DRAW, P2, -1, s.tick))
        else:
            events.append(GameEvent(EventKind.WIN, winner, -1, s.tick))
            events.append(GameEvent(EventKind.LOSS, 1 - winner, -1, s.tick))
    return StepResult(events, winner, (dropped[0], dropped[1]))


def _resolve(s: GameState, resolving: list[Unit]) -> None:
    units, utt, w = s.units, s.utt, s.w
    # attacks land simultaneously; targets that died earlier or left range are misses
    damage: dict[int, int] = {}
    for u in resolving:
        b = u.busy
        if b.command.action_type == ATTACK:
            tgt = units.get(b.target)
            if tgt is not None:
                st = utt[u.type]
                dx, dy = tgt.x - u.x, tgt.y - u.y
                if dx * dx + dy * dy <= st.attack_range * st.attack_range:
                    damage[tgt.id] = damage.get(tgt.id, 0) + st.attack_damage
    if damage:
        for tid, dmg in damage.items():
            tgt = units[tid]
            tgt.hp -= dmg
            if tgt.hp <= 0:
                _remove(s, tgt)

    for u in resolving:
        if u.id not in units:
            continue
        b = u.busy
        u.busy = None
        t = b.command.action_type
        if t == HARVEST:
            node = units.get(b.target)
            if node is not None and node.carried > 0:
                amount = min(utt[u.type].harvest_amount, node.carried)
                node.carried -= amount
                u.carried += amount
                if node.carried == 0:
                    _remove(s, node)
        elif t == RETURN:
            base = units.get(b.target)
            if base is not None and base.owner == u.owner:
                s.resources[u.owner] += u.carried
                u.carried = 0
        elif t == MOVE or t == PRODUCE:
            c = b.target
            if s.reserved.get(c) == u.id:
                del s.reserved[c]
            if t == MOVE:
                if s.grid[c] is None:
                    s.grid[u.x + u.y * w] = None
                    u.x, u.y = c % w, c // w
                    s.grid[c] = u
            else:
                ptype = b.command.produce_type
                if s.grid[c] is None:
                    s.add_unit(ptype, u.owner, c % w, c // w)
                    s.spent += utt[ptype].cost
                else:
                    s.resources[u.owner] += utt[ptype].cost


# ----------------------------------------------------------------------------
# Hashing

_HDR = struct.Struct("<8q")
_UNIT = struct.Struct("<7q")
_BUSY = struct.Struct("<10q")


def state_hash(s: GameState) -> int:
    """64-bit digest of every semantic field, including the RNG state."""
    hsh = hashlib.blake2b(digest_size=8)
    hsh.update(_HDR.pack(s.w, s.h, s.tick, s.max_ticks, s.resources[0], s.resources[1],
                         s.next_id, s.rng_state - (1 << 63)))
    hsh.update(struct.pack("<3q", s.spent, s.destroyed, -2 if s.winner is None else s.winner))
    for uid in sorted(s.units):
        u = s.units[uid]
        hsh.update(_UNIT.pack(u.id, u.owner, u.type, u.x, u.y, u.hp, u.carried))
        b = u.busy
        if b is not None:
            hsh.update(_BUSY.pack(*b.command, b.ticks, b.target))
    for cell in sorted(s.reserved):
        hsh.update(struct.pack("<2q", cell, s.reserved[cell]))
    return int.from_bytes(hsh.digest(), "little")

"""Scripted opponents.

Every bot maps ``(state, player)`` to a list of commands for its idle units and
never mutates the state. Commands within one call respect the player's budget
and each other's target cells, so a bot never has a command dropped.
"""
from __future__ import annotations

import random
from collections import deque
from typing import Optional

from .engine import (ATTACK, BARRACKS, BASE, HARVEST, LIGHT, MOVE, PRODUCE, RESOURCE, RETURN,
                     WORKER, GameState, Unit, UnitActionCommand, attack_offsets, legal_commands)


class _Plan:
    """Budget and claimed cells for the commands issued so far in one call."""

    def __init__(self, s: GameState, player: int):
        self.s = s
        self.player = player
        self.budget = s.resources[player]
        self.claimed: set[int] = set()
        self.commands: list[UnitActionCommand] = []

    def options(self, u: Unit) -> list[UnitActionCommand]:
        s, claimed = self.s, self.claimed
        out = []
        for c in legal_commands(s, u):
            t = c.action_type
            if t == MOVE:
                if s.nbr[c.source][c.move] in claimed:
                    continue
            elif t == PRODUCE:
                if s.utt[c.produce_type].cost > self.budget or s.nbr[c.source][c.produce_dir] in claimed:
                    continue
            out.append(c)
        return out

    def issue(self, c: UnitActionCommand) -> None:
        s = self.s
        if c.action_type == MOVE:
            self.claimed.add(s.nbr[c.source][c.move])
        elif c.action_type == PRODUCE:
            self.claimed.add(s.nbr[c.source][c.produce_dir])
            self.budget -= s.utt[c.produce_type].cost
        self.commands.append(c)

    def free(self, cell: int) -> bool:
        return cell >= 0 and self.s.grid[cell] is None and cell not in self.s.reserved and cell not in self.claimed


class Bot:
    name = "bot"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)

    def reset(self, seed: Optional[int] = None) -> None:
        if seed is not None:
            self.seed = seed
        self.rng = random.Random(self.seed)

    def get_action(self, s: GameState, player: int) -> list[UnitActionCommand]:
        raise NotImplementedError

    def __call__(self, s: GameState, player: int) -> list[UnitActionCommand]:
        return self.get_action(s, player)


class PassiveAI(Bot):
    name = "passive"

    def get_action(self, s, player):
        w = s.w
        return [UnitActionCommand(u.x + u.y * w) for u in s.actionable_units(player)]


class RandomAI(Bot):
    """Uniform over each idle unit's valid commands."""

    name = "random"

    def weight(self, c: UnitActionCommand) -> float:
        return 1.0

    def get_action(self, s, player):
        plan = _Plan(s, player)
        for u in s.actionable_units(player):
            opts = plan.options(u)
            weights = [self.weight(c) for c in opts]
            if all(wt == weights[0] for wt in weights):
                c = opts[self.rng.randrange(len(opts))]
            else:
                c = self.rng.choices(opts, weights)[0]
            plan.issue(c)
        return plan.commands


class RandomBiasedAI(RandomAI):
    """Random, with attack/harvest/return five times as likely as the other commands."""

    name = "randombiased"
    BIAS = 5.0

    def weight(self, c):
        return self.BIAS if c.action_type in (ATTACK, HARVEST, RETURN) else 1.0


def bfs_first_step(plan: _Plan, start: int, goals: set[int]) -> Optional[int]:
    """Direction of the first move on a shortest path from ``start`` into ``goals``.

    Paths run over currently free cells. Returns None when ``start`` is already a
    goal or no goal is reachable.
    """
    if start in goals or not goals:
        return None
    nbr = plan.s.nbr
    first = {start: -1}
    q = deque([start])
    while q:
        c = q.popleft()
        for d, n in enumerate(nbr[c]):
            if n < 0 or n in first or not plan.free(n):
                continue
            first[n] = d if c == start else first[c]
            if n in goals:
                return first[n]
            q.append(n)
    return None


class _RushBase(Bot):
    """Shared pieces of the rush scripts: harvesting shuttle and chase-and-attack."""

    def _adjacent_dir(self, s: GameState, u: Unit, pred) -> Optional[int]:
        for d, n in enumerate(s.nbr[u.x + u.y * s.w]):
            if n >= 0 and (v := s.grid[n]) is not None and pred(v):
                return d
        return None

    def _move(self, plan: _Plan, u: Unit, goals: set[int]) -> bool:
        src = u.x + u.y * plan.s.w
        d = bfs_first_step(plan, src, goals)
        if d is None:
            return False
        plan.issue(UnitActionCommand(src, MOVE, move=d))
        return True

    def _attack_goals(self, s: GameState, player: int, attack_range: int, cache: dict) -> set[int]:
        goals = cache.get(attack_range)
        if goals is None:
            goals = set()
            w, h = s.w, s.h
            offs = attack_offsets(attack_range)
            for e in s.units.values():
                if e.owner == 1 - player:
                    for _, dx, dy in offs:
                        x, y = e.x - dx, e.y - dy
                        if 0 <= x < w and 0 <= y < h:
                            goals.add(x + y * w)
            cache[attack_range] = goals
        return goals

    def _attack(self, plan: _Plan, u: Unit, cache: dict) -> None:
        s = plan.s
        src = u.x + u.y * s.w
        opts = [c for c in plan.options(u) if c.action_type == ATTACK]
        if opts:
            # weakest target first, then lowest id
            plan.issue(min(opts, key=lambda c: (_attack_target(s, u, c).hp, _attack_target(s, u, c).id)))
            return
        if s.utt[u.type].can_move and self._move(plan, u, self._attack_goals(s, plan.player, s.utt[u.type].attack_range, cache)):
            return
        plan.issue(UnitActionCommand(src))

    def _harvest(self, plan: _Plan, u: Unit, cache: dict) -> None:
        s, player = plan.s, plan.player
        src = u.x + u.y * s.w
        if u.carried > 0:
            d = self._adjacent_dir(s, u, lambda v: v.type == BASE and v.owner == player)
            if d is not None:
                plan.issue(UnitActionCommand(src, RETURN, ret=d))
                return
            targets = [v for v in s.units.values() if v.type == BASE and v.owner == player]
        else:
            d = self._adjacent_dir(s, u, lambda v: v.type == RESOURCE and v.carried > 0)
            if d is not None:
                plan.issue(UnitActionCommand(src, HARVEST, harvest=d))
                return
            targets = [v for v in s.units.values() if v.type == RESOURCE and v.carried > 0]
        if not targets:
            self._attack(plan, u, cache)
            return
        goals = {n for v in targets for n in s.nbr[v.x + v.y * s.w] if n >= 0}
        if not self._move(plan, u, goals):
            plan.issue(UnitActionCommand(src))

    def _produce(self, plan: _Plan, u: Unit, type_id: int) -> bool:
        s = plan.s
        if s.utt[type_id].cost > plan.budget:
            return False
        src = u.x + u.y * s.w
        for d, n in enumerate(s.nbr[src]):
            if plan.free(n):
                plan.issue(UnitActionCommand(src, PRODUCE, produce_dir=d, produce_type=type_id))
                return True
        return False


def _attack_target(s: GameState, u: Unit, c: UnitActionCommand) -> Unit:
    dy, dx = divmod(c.attack_pos, 7)
    return s.grid[(u.x + dx - 3) + (u.y + dy - 3) * s.w]


class WorkerRush(_RushBase):
    """Base trains workers nonstop; one worker harvests, the rest hunt the nearest enemy."""

    name = "workerrush"

    def get_action(self, s, player):
        plan = _Plan(s, player)
        cache: dict = {}
        workers = sorted(u.id for u in s.units.values() if u.owner == player and u.type == WORKER)
        harvester = workers[0] if workers else None
        for u in s.actionable_units(player):
            src = u.x + u.y * s.w
            if u.type == BASE:
                if not self._produce(plan, u, WORKER):
                    plan.issue(UnitActionCommand(src))
            elif u.type == WORKER and u.id == harvester:
                self._harvest(plan, u, cache)
            elif s.utt[u.type].can_attack:
                self._attack(plan, u, cache)
            else:
                plan.issue(UnitActionCommand(src))
        return plan.commands


class LightRush(_RushBase):
    """One harvester, one barracks next to the base, then a stream of light units."""

    name = "lightrush"
    WANTED_WORKERS = 2

    def _build_site(self, plan: _Plan, player: int) -> Optional[int]:
        s = plan.s
        for b in sorted((v for v in s.units.values() if v.type == BASE and v.owner == player),
                        key=lambda v: v.id):
            for n in s.nbr[b.x + b.y * s.w]:
                if plan.free(n):
                    return n
        return None

    def _build(self, plan: _Plan, u: Unit, site: int) -> None:
        s = plan.s
        src = u.x + u.y * s.w
        for d, n in enumerate(s.nbr[src]):
            if n == site:
                plan.issue(UnitActionCommand(src, PRODUCE, produce_dir=d, produce_type=BARRACKS))
                return
        goals = {n for n in s.nbr[site] if n >= 0 and n != site}
        if not self._move(plan, u, goals):
            plan.issue(UnitActionCommand(src))

    def get_action(self, s, player):
        plan = _Plan(s, player)
        cache: dict = {}
        own = [u for u in s.units.values() if u.owner == player]
        workers = sorted(u.id for u in own if u.type == WORKER)
        harvester = workers[0] if workers else None
        has_barracks = any(u.type == BARRACKS for u in own) or any(
            u.busy is not None and u.busy.command.action_type == PRODUCE
            and u.busy.command.produce_type == BARRACKS for u in own)
        idle = s.actionable_units(player)
        idle_workers = [u for u in idle if u.type == WORKER]
        builder = None
        if not has_barracks and plan.budget >= s.utt[BARRACKS].cost and idle_workers:
            others = [u for u in idle_workers if u.id != harvester]
            builder = (others or idle_workers)[0]
        if builder is not None:
            idle.sort(key=lambda u: u is not builder)
        for u in idle:
            src = u.x + u.y * s.w
            if u.type == BASE:
                # a pending barracks order keeps its cost out of the worker budget
                ordered = any(c.action_type == PRODUCE and c.produce_type == BARRACKS for c in plan.commands)
                spare = plan.budget - (s.utt[BARRACKS].cost if builder is not None and not ordered else 0)
                if (len(workers) >= self.WANTED_WORKERS or spare < s.utt[WORKER].cost
                        or not self._produce(plan, u, WORKER)):
                    plan.issue(UnitActionCommand(src))
            elif u.type == BARRACKS:
                if not self._produce(plan, u, LIGHT):
                    plan.issue(UnitActionCommand(src))
            elif u is builder:
                site = self._build_site(plan, player)
                if site is None:
                    self._attack(plan, u, cache)
                else:
                    self._build(plan, u, site)
            elif u.type == WORKER and u.id == harvester:
                self._harvest(plan, u, cache)
            elif s.utt[u.type].can_attack:
                self._attack(plan, u, cache)
            else:
                plan.issue(UnitActionCommand(src))
        return plan.commands


BOTS = {cls.name: cls for cls in (PassiveAI, RandomAI, RandomBiasedAI, WorkerRush, LightRush)}
_ALIASES = {"passiveai": "passive", "randomai": "random", "randombiasedai": "randombiased"}


def make_bot(name: str, seed: int = 0) -> Bot:
    key = name.strip().lower().replace("_", "").replace("-", "")
    key = _ALIASES.get(key, key)
    if key not in BOTS:
        raise ValueError(f"unknown bot {name!r}; choose from {sorted(BOTS)}")
    return BOTS[key](seed)

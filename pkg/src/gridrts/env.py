"""Player-action protocols as episodic environments.

``UasRound`` implements one unit-action-simulation decision round: the policy
picks a unit, then its command, the command is issued into a simulated copy
of the state, and the loop repeats until no unit is left to command.
``UasEnv`` wraps rounds into an episode against a scripted opponent;
``GridnetEnv`` issues one command per cell in a single step. The vector
runners step many slots in lockstep and auto-reset finished episodes.

All observations, masks and action vectors are in the agent's own frame:
when the agent plays player 2, the perspective transform is applied on the
way out and inverted on the way in.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .action_space import (CONSUMED, COMPONENT_OFFSETS, COMPONENT_SIZES, MaskLevel, flip_command,
                           flip_grid_mask, flip_source_mask, flip_unit_mask, gridnet_mask,
                           source_unit_mask, unit_action_mask)
from .bots import Bot, make_bot
from .engine import (NOOP, P1, P2, GameError, GameState, MapSpec, UnitActionCommand, is_valid_command,
                     new_game, simulate_issue, step)
from .observation import encode
from .rewards import DEFAULT_WEIGHTS, RewardWeights, outcome_for, shape

SELF = "self"


class ConfigError(ValueError):
    pass


@dataclass
class EnvStep:
    observation: np.ndarray
    masks: object
    reward: object
    done: bool
    info: dict = field(default_factory=dict)


def _agent_command(source: int, comps: Sequence[int], player: int, w: int, h: int) -> UnitActionCommand:
    cmd = UnitActionCommand(int(source), *(int(c) for c in comps))
    if player == P2:
        cmd = flip_command(cmd, w, h)
    return cmd.canonical()


def check_selection(mask: np.ndarray, comps: Sequence[int]) -> None:
    """Raise if a (type, params) selection uses a masked-out bit of a 78-wide unit mask."""
    t = int(comps[0])
    if not (0 <= t < 6) or not mask[t]:
        raise GameError(f"action type {t} is masked out")
    for k in CONSUMED[t]:
        v = int(comps[k])
        if not (0 <= v < COMPONENT_SIZES[k]) or not mask[COMPONENT_OFFSETS[k] + v]:
            raise GameError(f"component {k} value {v} is masked out")


class UasRound:
    """One decision round over a simulated copy of ``state``."""

    def __init__(self, state: GameState, player: int, level: MaskLevel | str = MaskLevel.FULL,
                 weights: RewardWeights = DEFAULT_WEIGHTS):
        self.real = state
        self.sim = state
        self.player = player
        self.level = MaskLevel(level)
        self.weights = weights
        self.commands: list[UnitActionCommand] = []
        self.unit_ids: list[int] = []
        self.rewards: list[float] = []
        self.closed = False
        self._obs: Optional[np.ndarray] = None
        self._src: Optional[np.ndarray] = None

    @property
    def flipped(self) -> bool:
        return self.player == P2

    def source_mask(self) -> np.ndarray:
        if self._src is None:
            m = source_unit_mask(self.sim, self.player)
            self._src = flip_source_mask(m) if self.flipped else m
        return self._src

    def observation(self) -> np.ndarray:
        if self._obs is None:
            self._obs = encode(self.sim, self.player)
        return self._obs

    @property
    def complete(self) -> bool:
        return self.closed or not self.source_mask().any()

    def _unit_at(self, source: int):
        s = self.sim
        cell = s.w * s.h - 1 - source if self.flipped else source
        if not 0 <= cell < s.w * s.h:
            return None
        u = s.grid[cell]
        if u is None or u.owner != self.player or u.busy is not None:
            return None
        return u

    def unit_mask(self, source: int) -> np.ndarray:
        u = self._unit_at(source)
        if u is None:
            if self.level is MaskLevel.NONE:
                return np.ones(sum(COMPONENT_SIZES), dtype=bool)
            raise GameError(f"source {source} holds no actionable unit")
        m = unit_action_mask(self.sim, u.id, self.level)
        return flip_unit_mask(m) if self.flipped else m

    def decide(self, source: int, comps: Sequence[int]) -> float:
        """Commit one unit command; returns the shaped reward of the events it initiates."""
        if self.complete:
            raise GameError("decision round is already complete")
        u = self._unit_at(source)
        if u is None:
            if self.level is not MaskLevel.NONE:
                raise GameError(f"source {source} is masked out")
            # unmasked selection of an empty cell forfeits the rest of the round
            self.closed = True
            self.rewards.append(0.0)
            self.unit_ids.append(-1)
            return 0.0
        if self.level is not MaskLevel.NONE:
            check_selection(self.unit_mask(source), comps)
        s = self.sim
        cmd = _agent_command(source, comps, self.player, s.w, s.h)
        events: list = []
        if is_valid_command(s, u, cmd):
            self.sim = simulate_issue(s, u.id, cmd, events)
        else:
            # the engine will drop it; the unit still counts as commanded this round
            self.sim = simulate_issue(s, u.id, UnitActionCommand(cmd.source))
        self.commands.append(cmd)
        self.unit_ids.append(u.id)
        r, _ = shape(events, self.player, self.weights)
        self.rewards.append(r)
        self._obs = self._src = None
        return r

    def play(self, choose_source: Callable, choose_action: Callable) -> None:
        """Run the round to completion with callback decision functions."""
        while not self.complete:
            src = int(choose_source(self.observation(), self.source_mask()))
            mask = self.unit_mask(src) if self._unit_at(src) is not None or self.level is MaskLevel.NONE else None
            if mask is None:
                raise GameError(f"source {src} is masked out")
            comps = choose_action(self.observation(), src, mask)
            self.decide(src, comps)


class _EpisodeEnv:
    def __init__(self, map_spec: MapSpec, opponent: Optional[Bot], *, utt=None, max_ticks: int = 2000,
                 seed: int = 0, player: int = P1, level: MaskLevel | str = MaskLevel.FULL,
                 weights: RewardWeights = DEFAULT_WEIGHTS):
        self.map_spec = map_spec
        self.opponent = opponent
        self.utt = utt
        self.max_ticks = max_ticks
        self.seed = seed
        self.player = player
        self.level = MaskLevel(level)
        self.weights = weights
        self.episode = -1
        self.state: Optional[GameState] = None
        self.episode_return = 0.0
        self.dropped = 0

    def _new_episode(self) -> None:
        self.episode += 1
        game_seed = self.seed + self.episode
        self.state = new_game(self.map_spec, self.utt, seed=game_seed, max_ticks=self.max_ticks)
        if self.opponent is not None:
            self.opponent.reset(game_seed)
        self.episode_return = 0.0
        self.dropped = 0

    def _engine_step(self, commands: Sequence[UnitActionCommand]):
        s = self.state
        other = self.opponent(s, 1 - self.player) if self.opponent is not None else []
        if self.player == P1:
            res = step(s, commands, other)
        else:
            res = step(s, other, commands)
        self.dropped += res.dropped[self.player]
        return res

    def _info(self, res=None) -> dict:
        s = self.state
        outcome = None if s.winner is None else outcome_for(s.winner, self.player)
        return {"sparse_outcome": outcome, "dropped": self.dropped, "tick": s.tick,
                "episode_return": self.episode_return}


class UasEnv(_EpisodeEnv):
    """Unit-action-simulation episodes.

    ``round`` plays exactly one engine tick with callback decision functions.
    ``observe``/``unit_mask``/``act`` expose single decisions for batched
    learners; ``act`` closes the round when nothing is left to command and then
    advances the game until the agent has an idle unit again.
    """

    def reset(self) -> tuple[np.ndarray, np.ndarray]:
        self._new_episode()
        self.round_ = UasRound(self.state, self.player, self.level, self.weights)
        self._advance()
        return self.observe()

    def observe(self) -> tuple[np.ndarray, np.ndarray]:
        return self.round_.observation(), self.round_.source_mask()

    def unit_mask(self, source: int) -> np.ndarray:
        return self.round_.unit_mask(source)

    def _submit(self):
        rnd = self.round_
        res = self._engine_step(rnd.commands)
        shaped, per_unit = shape(res.events, self.player, self.weights)
        self.episode_return += shaped
        self.round_ = UasRound(self.state, self.player, self.level, self.weights)
        return res, shaped, per_unit

    def _advance(self) -> float:
        """Step idle ticks until the agent can act or the game ends; returns reward collected."""
        total = 0.0
        while not self.state.done and self.round_.complete:
            _, shaped, _ = self._submit()
            total += shaped
        return total

    def round(self, choose_source: Callable, choose_action: Callable) -> EnvStep:
        """One tick: decide for every idle unit, then a single engine step."""
        if self.state is None or self.state.done:
            raise GameError("reset the environment first")
        rnd = self.round_
        rnd.play(choose_source, choose_action)
        res, shaped, per_unit = self._submit()
        rewards = np.array([per_unit.get(uid, 0.0) if uid >= 0 else 0.0 for uid in rnd.unit_ids])
        info = self._info(res)
        info.update(events=res.events, commands=list(rnd.commands), unit_ids=list(rnd.unit_ids),
                    simulated_rewards=list(rnd.rewards), terminal_reward=per_unit.get(-1, 0.0),
                    step_dropped=res.dropped[self.player])
        obs, src = self.observe()
        return EnvStep(obs, src, rewards, self.state.done, info)

    def act(self, source: int, comps: Sequence[int]) -> tuple[float, bool, dict]:
        rnd = self.round_
        reward = rnd.decide(source, comps)
        info: dict = {}
        if rnd.complete:
            res, shaped, per_unit = self._submit()
            # terminal outcome (if any) goes to the decision that closed the round
            reward += per_unit.get(-1, 0.0)
            reward += self._advance()
            if self.state.done:
                info = self._info()
                self.reset()
                return reward, True, info
        return reward, False, info


def _executed(cmds: Sequence[UnitActionCommand], dropped: int) -> int:
    # NOOPs for idle owned units are never dropped, so drops all come from the rest
    return sum(c.action_type != NOOP for c in cmds) - dropped


class GridnetEnv(_EpisodeEnv):
    """One command per cell per tick; cells without an idle own unit are ignored."""

    def reset(self) -> tuple[np.ndarray, np.ndarray]:
        self._new_episode()
        return self.observe()

    def observe(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.state
        m = gridnet_mask(s, self.player, self.level)
        if self.player == P2:
            m = flip_grid_mask(m)
        return encode(s, self.player), m

    def commands_for(self, grid_action: np.ndarray) -> list[UnitActionCommand]:
        s = self.state
        if grid_action.shape != (s.w * s.h, 7):
            raise GameError(f"grid action must have shape ({s.w * s.h}, 7)")
        src = source_unit_mask(s, self.player)
        cells = np.flatnonzero(src)
        cmds = []
        for cell in cells:
            agent_cell = s.w * s.h - 1 - cell if self.player == P2 else cell
            cmds.append(_agent_command(agent_cell, grid_action[agent_cell], self.player, s.w, s.h))
        return cmds

    def step(self, grid_action: np.ndarray) -> EnvStep:
        if self.state is None or self.state.done:
            raise GameError("reset the environment first")
        cmds = self.commands_for(np.asarray(grid_action))
        res = self._engine_step(cmds)
        reward, _ = shape(res.events, self.player, self.weights)
        self.episode_return += reward
        info = self._info(res)
        info.update(events=res.events, commands=cmds, step_dropped=res.dropped[self.player],
                    executed=_executed(cmds, res.dropped[self.player]))
        done = self.state.done
        obs, mask = self.observe()
        return EnvStep(obs, mask, float(reward), done, info)


class SelfplayGame:
    """One game viewed by two gridnet slots: slot A plays player 1, slot B player 2."""

    def __init__(self, map_spec: MapSpec, *, utt=None, max_ticks: int = 2000, seed: int = 0,
                 level: MaskLevel | str = MaskLevel.FULL, weights: RewardWeights = DEFAULT_WEIGHTS):
        self.views = [GridnetEnv(map_spec, None, utt=utt, max_ticks=max_ticks, seed=seed, player=p,
                                 level=level, weights=weights) for p in (P1, P2)]

    def reset(self):
        a = self.views[0].reset()
        self.views[1].episode = self.views[0].episode
        self.views[1].state = self.views[0].state
        self.views[1].episode_return = 0.0
        self.views[1].dropped = 0
        return a, self.views[1].observe()

    def step(self, action_a: np.ndarray, action_b: np.ndarray) -> tuple[EnvStep, EnvStep]:
        va, vb = self.views
        s = va.state
        if s.done:
            raise GameError("reset the game first")
        cmds_a = va.commands_for(np.asarray(action_a))
        cmds_b = vb.commands_for(np.asarray(action_b))
        res = step(s, cmds_a, cmds_b)
        out = []
        for v, cmds, p in ((va, cmds_a, P1), (vb, cmds_b, P2)):
            r, _ = shape(res.events, p, v.weights)
            v.episode_return += r
            v.dropped += res.dropped[p]
            info = v._info(res)
            info.update(events=res.events, commands=cmds, step_dropped=res.dropped[p],
                        executed=_executed(cmds, res.dropped[p]))
            obs, mask = v.observe()
            out.append(EnvStep(obs, mask, float(r), s.done, info))
        return out[0], out[1]


# ----------------------------------------------------------------------------
# Slot planning and vectorised runners


def parse_opponent_mix(text: str) -> dict[str, float]:
    """``"lightrush:18, randombiased:2"`` -> {name: weight}."""
    mix: dict[str, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.partition(":")
        try:
            mix[name.strip().lower()] = float(value) if value else 1.0
        except ValueError:
            raise ConfigError(f"bad opponent weight in {part!r}") from None
    if not mix:
        raise ConfigError("opponent mix is empty")
    return mix


def plan_slots(num_envs: int, mix: dict[str, float]) -> list[tuple[int, str]]:
    """Assign every slot an opponent; weights are counts if they sum to ``num_envs``, else fractions.

    Fractions are rounded by largest remainder. SELF slots must come in pairs and
    are placed first so pairs occupy adjacent slots.
    """
    if num_envs < 1:
        raise ConfigError("need at least one environment slot")
    weights = {k: float(v) for k, v in mix.items()}
    if any(v < 0 for v in weights.values()) or sum(weights.values()) <= 0:
        raise ConfigError("opponent weights must be non-negative with a positive sum")
    total = sum(weights.values())
    if abs(total - num_envs) < 1e-9 and all(float(v).is_integer() for v in weights.values()):
        counts = {k: int(v) for k, v in weights.items()}
    else:
        raw = {k: v / total * num_envs for k, v in weights.items()}
        counts = {k: int(np.floor(v)) for k, v in raw.items()}
        rest = num_envs - sum(counts.values())
        for k in sorted(raw, key=lambda k: (-(raw[k] - counts[k]), k))[:rest]:
            counts[k] += 1
    if counts.get(SELF, 0) % 2:
        raise ConfigError(f"selfplay slots must come in pairs, got {counts[SELF]}")
    names = [SELF] * counts.get(SELF, 0)
    for k in weights:
        if k != SELF:
            names += [k] * counts[k]
    return list(enumerate(names))


class UasVecEnv:
    """Batched single-decision interface over UAS slots (bots only)."""

    def __init__(self, map_spec: MapSpec, opponents: Sequence[str], *, utt=None, max_ticks: int = 2000,
                 seed: int = 0, level: MaskLevel | str = MaskLevel.FULL,
                 weights: RewardWeights = DEFAULT_WEIGHTS):
        if any(o == SELF for o in opponents):
            raise ConfigError("selfplay is only supported with the gridnet protocol")
        # slot i draws episode seeds from its own stride so slots never share a game
        self.envs = [UasEnv(map_spec, make_bot(name, seed + 7919 * i), utt=utt, max_ticks=max_ticks,
                            seed=seed + 1_000_003 * i, level=level, weights=weights)
                     for i, name in enumerate(opponents)]
        self.num_envs = len(self.envs)

    def reset(self):
        for e in self.envs:
            e.reset()
        return self.observe()

    def observe(self) -> tuple[np.ndarray, np.ndarray]:
        obs, src = zip(*(e.observe() for e in self.envs))
        return np.stack(obs), np.stack(src)

    def unit_masks(self, sources: Sequence[int]) -> np.ndarray:
        self._check(sources)
        return np.stack([e.unit_mask(int(s)) for e, s in zip(self.envs, sources)])

    def step(self, sources: Sequence[int], comps: np.ndarray):
        self._check(sources)
        rewards = np.zeros(self.num_envs)
        dones = np.zeros(self.num_envs, dtype=bool)
        infos = []
        for i, e in enumerate(self.envs):
            rewards[i], dones[i], info = e.act(int(sources[i]), comps[i])
            infos.append(info)
        return rewards, dones, infos

    def _check(self, batch) -> None:
        if len(batch) != self.num_envs:
            raise ConfigError(f"expected {self.num_envs} decisions, got {len(batch)}")


class GridnetVecEnv:
    """Batched gridnet slots; SELF slots are paired onto shared games."""

    def __init__(self, map_spec: MapSpec, opponents: Sequence[str], *, utt=None, max_ticks: int = 2000,
                 seed: int = 0, level: MaskLevel | str = MaskLevel.FULL,
                 weights: RewardWeights = DEFAULT_WEIGHTS):
        self.slots: list[tuple] = []
        names = list(opponents)
        if names.count(SELF) % 2:
            raise ConfigError("selfplay slots must come in pairs")
        self.games: list[SelfplayGame] = []
        pending: Optional[int] = None
        for i, name in enumerate(names):
            kw = dict(utt=utt, max_ticks=max_ticks, seed=seed + 1_000_003 * i, level=level, weights=weights)
            if name == SELF:
                if pending is None:
                    game = SelfplayGame(map_spec, **kw)
                    self.games.append(game)
                    self.slots.append(("self", game, 0))
                    pending = len(self.games) - 1
                else:
                    self.slots.append(("self", self.games[pending], 1))
                    pending = None
            else:
                self.slots.append(("bot", GridnetEnv(map_spec, make_bot(name, seed + 7919 * i), **kw), 0))
        self.num_envs = len(self.slots)
        self._last: list = [None] * self.num_envs

    def reset(self):
        for i, (kind, env, side) in enumerate(self.slots):
            if kind == "bot":
                self._last[i] = env.reset()
            elif side == 0:
                a, b = env.reset()
                self._last[i] = a
                self._last[i + self._partner_offset(i)] = b
        return self.observe()

    def _partner_offset(self, i: int) -> int:
        game = self.slots[i][1]
        for j in range(i + 1, self.num_envs):
            if self.slots[j][1] is game:
                return j - i
        raise ConfigError("unpaired selfplay slot")

    def observe(self) -> tuple[np.ndarray, np.ndarray]:
        obs, masks = zip(*self._last)
        return np.stack(obs), np.stack(masks)

    def step(self, actions: np.ndarray):
        actions = np.asarray(actions)
        if len(actions) != self.num_envs:
            raise ConfigError(f"expected {self.num_envs} grid actions, got {len(actions)}")
        rewards = np.zeros(self.num_envs)
        dones = np.zeros(self.num_envs, dtype=bool)
        infos: list = [None] * self.num_envs
        for i, (kind, env, side) in enumerate(self.slots):
            if kind == "bot":
                st = env.step(actions[i])
                rewards[i], dones[i], infos[i] = st.reward, st.done, st.info
                self._last[i] = env.reset() if st.done else (st.observation, st.masks)
            elif side == 0:
                j = i + self._partner_offset(i)
                sa, sb = env.step(actions[i], actions[j])
                for k, st in ((i, sa), (j, sb)):
                    rewards[k], dones[k], infos[k] = st.reward, st.done, st.info
                if sa.done:
                    self._last[i], self._last[j] = env.reset()
                else:
                    self._last[i] = (sa.observation, sa.masks)
                    self._last[j] = (sb.observation, sb.masks)
        return rewards, dones, infos

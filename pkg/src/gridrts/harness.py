"""Training driver, evaluation ladder and throughput benchmark."""
from __future__ import annotations

import csv
import io
import logging
import math
import random
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .action_space import MaskLevel
from .bots import make_bot
from .config import Config, describe
from .engine import (MOVE, NOOP, P1, P2, PRODUCE, GameError, GameState, MapSpec, legal_commands,
                     load_map, new_game, step)
from .env import GridnetEnv, GridnetVecEnv, UasRound, UasVecEnv, plan_slots
from .learner import policy
from .learner.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .learner.network import Architecture, init_params
from .learner.ppo import Adam, NonFiniteLoss, ppo_update
from .learner.policy import sample_unit
from .learner.rollout import Collector, make_runner
from .rewards import DEFAULT_WEIGHTS, RewardWeights, shape

log = logging.getLogger(__name__)

METRIC_FIELDS = ("update", "env_steps", "episodes", "shaped_return", "sparse_return", "loss",
                 "policy_loss", "value_loss", "entropy", "approx_kl", "clipfrac", "lr", "grad_norm")


# ----------------------------------------------------------------------------
# Agents


class PolicyAgent:
    """A checkpointed policy behind the same ``(state, player) -> commands`` interface as bots."""

    def __init__(self, ck: Checkpoint, greedy: bool = True, seed: int = 0,
                 level: MaskLevel | str = MaskLevel.FULL):
        self.arch = ck.arch
        self.params = ck.params
        self.greedy = greedy
        self.level = MaskLevel(level)
        self.seed = seed
        self.name = f"policy[{ck.arch.protocol}]"
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: Optional[int] = None) -> None:
        if seed is not None:
            self.seed = seed
        self.rng = np.random.default_rng(self.seed)

    def check_map(self, s: GameState) -> None:
        if (s.h, s.w) != (self.arch.h, self.arch.w):
            raise GameError(f"checkpoint expects a {self.arch.w}x{self.arch.h} map, got {s.w}x{s.h}")

    def __call__(self, s: GameState, player: int):
        self.check_map(s)
        if self.arch.protocol == "uas":
            rnd = UasRound(s, player, self.level)
            while not rnd.complete:
                obs = rnd.observation()[None]
                src, comps, _, _, _ = policy.act_uas(
                    self.params, self.arch, obs, rnd.source_mask()[None],
                    lambda sources: rnd.unit_mask(int(sources[0]))[None], self.rng, self.greedy)
                rnd.decide(int(src[0]), comps[0])
            return rnd.commands
        env = GridnetEnv(MapSpec(s.w, s.h, []), None, player=player, level=self.level)
        env.state = s
        obs, mask = env.observe()
        comps, _, _ = policy.act_gridnet(self.params, self.arch, obs[None], mask[None], self.rng, self.greedy)
        return env.commands_for(comps[0])


def make_agent(name: str, seed: int = 0, greedy: bool = True):
    """A bot by name, or ``ckpt:PATH`` / a path ending in .bin / .ckpt for a policy."""
    if name.startswith("ckpt:") or name.endswith((".bin", ".ckpt")):
        path = name[5:] if name.startswith("ckpt:") else name
        return PolicyAgent(load_checkpoint(path), greedy=greedy, seed=seed)
    return make_bot(name, seed)


# ----------------------------------------------------------------------------
# Matches and ladders


@dataclass
class MatchResult:
    bot_a: str
    bot_b: str
    map: str
    seed: int
    winner: str  # "A", "B" or "Draw"
    ticks: int
    return_a: float
    return_b: float


def _agent_name(agent) -> str:
    return getattr(agent, "name", type(agent).__name__)


def play_match(a, b, map_spec: MapSpec, max_ticks: int = 4000, seed: int = 0,
               weights: RewardWeights = DEFAULT_WEIGHTS) -> MatchResult:
    """``a`` plays player 1 (top-left start on the symmetric maps), ``b`` player 2."""
    s = new_game(map_spec, seed=seed, max_ticks=max_ticks)
    for agent in (a, b):
        if hasattr(agent, "reset"):
            agent.reset(seed)
        if hasattr(agent, "check_map"):
            agent.check_map(s)
    ret = [0.0, 0.0]
    while not s.done:
        ca, cb = a(s, P1), b(s, P2)
        res = step(s, ca, cb)
        for p in (P1, P2):
            ret[p] += shape(res.events, p, weights)[0]
    winner = {P1: "A", P2: "B"}.get(s.winner, "Draw")
    return MatchResult(_agent_name(a), _agent_name(b), map_spec.name, seed, winner, s.tick, ret[0], ret[1])


@dataclass
class LadderRow:
    opponent: str
    wins: int = 0
    ties: int = 0
    losses: int = 0

    @property
    def games(self) -> int:
        return self.wins + self.ties + self.losses


@dataclass
class LadderReport:
    rows: list[LadderRow] = field(default_factory=list)
    matches: list[MatchResult] = field(default_factory=list)

    @property
    def games(self) -> int:
        return sum(r.games for r in self.rows)

    @property
    def win_rate(self) -> float:
        return sum(r.wins for r in self.rows) / self.games if self.games else 0.0

    def summary(self) -> str:
        lines = [f"{'opponent':<14}{'W':>5}{'T':>5}{'L':>5}"]
        for r in self.rows:
            lines.append(f"{r.opponent:<14}{r.wins:>5}{r.ties:>5}{r.losses:>5}")
        lines.append(f"cumulative win rate {self.win_rate:.3f} over {self.games} games")
        return "\n".join(lines)

    def to_csv(self, seed: int) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={seed}\n")
        w = csv.DictWriter(buf, fieldnames=[f for f in MatchResult.__dataclass_fields__])
        w.writeheader()
        for m in self.matches:
            w.writerow(asdict(m))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, agent: str) -> "LadderReport":
        """Recount a report from its raw match CSV."""
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        rep = cls()
        by_opp: dict[str, LadderRow] = {}
        for row in csv.DictReader(lines):
            opp = row["bot_b"] if row["bot_a"] == agent else row["bot_a"]
            r = by_opp.setdefault(opp, LadderRow(opp))
            won = row["winner"] == ("A" if row["bot_a"] == agent else "B")
            if row["winner"] == "Draw":
                r.ties += 1
            elif won:
                r.wins += 1
            else:
                r.losses += 1
        rep.rows = list(by_opp.values())
        return rep


def evaluate(agent, pool: Sequence[str], map_spec: MapSpec, games: int = 100, max_ticks: int = 4000,
             seed: int = 0, progress: Optional[Callable[[MatchResult], None]] = None) -> LadderReport:
    """Agent always sits as player 1; match i against any opponent uses seed ``seed + i``."""
    if not pool:
        raise ValueError("opponent pool is empty")
    rep = LadderReport()
    index = 0
    for name in pool:
        row = LadderRow(name)
        for _ in range(games):
            opp = make_bot(name, seed + index)
            m = play_match(agent, opp, map_spec, max_ticks, seed + index)
            m.bot_b = name
            rep.matches.append(m)
            if m.winner == "A":
                row.wins += 1
            elif m.winner == "B":
                row.losses += 1
            else:
                row.ties += 1
            index += 1
            if progress:
                progress(m)
        rep.rows.append(row)
    return rep


# ----------------------------------------------------------------------------
# Training


def ema(values: Sequence[float], weight: float = 0.99) -> list[float]:
    """Exponential moving average for plots; stored metrics are never smoothed."""
    out, last = [], None
    for v in values:
        last = v if last is None else weight * last + (1 - weight) * v
        out.append(last)
    return out


def svg_line_chart(series: dict[str, Sequence[float]], title: str, width: int = 640, height: int = 320) -> str:
    pts = [v for s in series.values() for v in s if math.isfinite(v)]
    if not pts:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"></svg>\n'
    lo, hi = min(pts), max(pts)
    hi = hi if hi > lo else lo + 1
    n = max(len(s) for s in series.values())
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="10" y="16" font-size="12">{title} (min {lo:.2f}, max {hi:.2f})</text>']
    for k, (name, s) in enumerate(series.items()):
        coords = " ".join(f"{10 + (width - 20) * i / max(n - 1, 1):.1f},"
                          f"{height - 10 - (height - 40) * (v - lo) / (hi - lo):.1f}"
                          for i, v in enumerate(s) if math.isfinite(v))
        c = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" points="{coords}"/>')
        parts.append(f'<text x="{width - 150}" y="{16 + 14 * k}" font-size="11" fill="{c}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass
class TrainResult:
    out_dir: Path
    metrics_path: Path
    checkpoint_path: Path
    updates: int
    env_steps: int
    episodes_shaped: list[float]
    episodes_sparse: list[int]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def train(cfg: Config, seed: Optional[int] = None, out_dir: Optional[str] = None,
          max_updates: Optional[int] = None,
          on_update: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Rollout -> GAE -> PPO loop; writes metrics.csv, checkpoints and a smoothed-return plot."""
    seed = cfg.run.seed if seed is None else seed
    out = Path(out_dir or cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    map_spec = load_map(cfg.env.map)
    ppo = cfg.ppo
    slots = [name for _, name in plan_slots(ppo.num_envs, cfg.opponent_mix)]
    runner = make_runner(cfg.env.protocol, map_spec, slots, max_ticks=cfg.env.max_ticks, seed=seed,
                         level=cfg.env.mask, weights=cfg.rewards)
    arch = Architecture(cfg.env.protocol, map_spec.h, map_spec.w, cfg.hidden)
    params = init_params(arch, seed)
    opt = Adam(params, eps=ppo.adam_eps)
    rng = np.random.default_rng(seed)
    collector = Collector(runner, arch)

    metrics_path = out / "metrics.csv"
    ckpt_path = out / "checkpoint.bin"
    updates = ppo.num_updates if max_updates is None else min(max_updates, ppo.num_updates)
    all_shaped: list[float] = []
    all_sparse: list[int] = []
    env_steps = 0
    with open(metrics_path, "w", newline="") as f:
        f.write(f"# seed={seed} {describe(cfg)}\n")
        writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        for u in range(updates):
            batch, eps = collector.collect(params, ppo, rng)
            env_steps += ppo.batch_size
            try:
                stats = ppo_update(params, arch, opt, batch, ppo, u, rng)
            except NonFiniteLoss:
                log.error("non-finite loss at update %d; last good checkpoint kept at %s", u, ckpt_path)
                raise
            all_shaped += eps.shaped
            all_sparse += eps.sparse
            row = {"update": u + 1, "env_steps": env_steps, "episodes": len(eps.shaped),
                   "shaped_return": float(np.mean(eps.shaped)) if eps.shaped else float("nan"),
                   "sparse_return": float(np.mean(eps.sparse)) if eps.sparse else float("nan")}
            row.update({k: stats[k] for k in METRIC_FIELDS if k in stats})
            writer.writerow({k: _fmt(v) for k, v in row.items()})
            f.flush()
            if on_update:
                on_update(row)
            if cfg.run.checkpoint_every and (u + 1) % cfg.run.checkpoint_every == 0:
                save_checkpoint(ckpt_path, Checkpoint(arch, params, u + 1, seed, opt.state()))
    save_checkpoint(ckpt_path, Checkpoint(arch, params, updates, seed, opt.state()))
    if all_shaped:
        (out / "returns.svg").write_text(svg_line_chart(
            {"shaped (ema 0.99)": ema(all_shaped), "sparse x10 (ema 0.99)": ema([10 * v for v in all_sparse])},
            f"episode returns, seed {seed}"))
    return TrainResult(out, metrics_path, ckpt_path, updates, env_steps, all_shaped, all_sparse)


# ----------------------------------------------------------------------------
# Benchmark


@dataclass
class BenchReport:
    engine_ticks_per_sec: list[float]
    live_units: float
    pipeline: dict[str, float]

    def summary(self) -> str:
        t = self.engine_ticks_per_sec
        sd = statistics.stdev(t) if len(t) > 1 else 0.0
        lines = [f"engine-only: {statistics.mean(t):,.0f} ticks/s (stdev {sd:,.0f}, {len(t)} trials, "
                 f"~{self.live_units:.1f} live units)"]
        for k, v in self.pipeline.items():
            lines.append(f"pipeline {k}: {v:,.0f} env steps/s")
        return "\n".join(lines)


def _random_commands(s: GameState, player: int, rng) -> list:
    budget = s.resources[player]
    cmds = []
    claimed = set()
    for u in s.actionable_units(player):
        opts = legal_commands(s, u)
        c = opts[rng.randrange(len(opts))]
        if c.action_type == PRODUCE:
            cost = s.utt[c.produce_type].cost
            cell = s.nbr[c.source][c.produce_dir]
            if cost > budget or cell in claimed:
                c = opts[0]
            else:
                budget -= cost
                claimed.add(cell)
        elif c.action_type == MOVE:
            cell = s.nbr[c.source][c.move]
            if cell in claimed:
                c = opts[0]
            else:
                claimed.add(cell)
        cmds.append(c)
    return cmds


def bench_engine(map_spec: MapSpec, ticks: int = 2000, seed: int = 0, cap_units: int = 10) -> tuple[float, float]:
    """Ticks/sec of random valid stepping, excluding action generation.

    Commands are generated up front against the live state but only ``step``
    is timed. Production is suppressed once ``cap_units`` units are alive so
    the population stays near the target.
    """
    rng = random.Random(seed)
    s = new_game(map_spec, seed=seed, max_ticks=10 ** 9)
    spent = 0.0
    units = 0
    done = 0
    while done < ticks:
        alive = sum(1 for u in s.units.values() if u.owner >= 0)
        p = [_random_commands(s, pl, rng) for pl in (P1, P2)]
        if alive >= cap_units:
            p = [[c if c.action_type != PRODUCE else c._replace(action_type=NOOP) for c in cmds] for cmds in p]
        t0 = time.perf_counter()
        step(s, p[0], p[1])
        spent += time.perf_counter() - t0
        units += alive
        done += 1
        if s.done:
            s = new_game(map_spec, seed=seed + done, max_ticks=10 ** 9)
    return ticks / spent, units / ticks


def bench_pipeline(map_spec: MapSpec, protocol: str, steps: int = 300, seed: int = 0) -> float:
    """Env steps/sec with a random-masked policy (no network) against RandomAI."""
    rng = np.random.default_rng(seed)
    if protocol == "uas":
        venv = UasVecEnv(map_spec, ["random"], seed=seed)
        obs, src = venv.reset()
        t0 = time.perf_counter()
        for _ in range(steps):
            s = np.array([rng.choice(np.flatnonzero(src[0]))])
            m = venv.unit_masks(s)
            venv.step(s, sample_unit(np.zeros((1, 78)), m, rng))
            obs, src = venv.observe()
    else:
        venv = GridnetVecEnv(map_spec, ["random"], seed=seed)
        obs, mask = venv.reset()
        cells = map_spec.w * map_spec.h
        t0 = time.perf_counter()
        for _ in range(steps):
            comps = sample_unit(np.zeros((cells, 78)), mask[0, :, 1:], rng)
            venv.step(comps[None])
            obs, mask = venv.observe()
    return steps / (time.perf_counter() - t0)


def bench(cfg: Config) -> BenchReport:
    map_spec = load_map(cfg.env.map)
    trials = [bench_engine(map_spec, cfg.run.bench_ticks, seed=cfg.run.seed + i) for i in range(cfg.run.bench_trials)]
    pipeline = {p: bench_pipeline(map_spec, p, seed=cfg.run.seed) for p in ("uas", "gridnet")}
    return BenchReport([t for t, _ in trials], statistics.mean(u for _, u in trials), pipeline)

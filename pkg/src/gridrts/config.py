"""Run configuration from an INI file.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` and
``;`` start comments. Recognised sections and keys::

    [env]      map, protocol (uas|gridnet), mask (full|partial|none),
               opponents ("name:weight, ..."), max_ticks
    [ppo]      total_steps, num_envs, num_steps, minibatches, epochs, gamma,
               gae_lambda, clip, max_grad_norm, learning_rate, anneal_lr,
               vf_coef, ent_coef, adam_eps, norm_adv, clip_vloss
    [model]    hidden ("128,128")
    [run]      seed, out_dir, checkpoint_every, bench_trials, bench_ticks
    [rewards]  any RewardWeights field (win, loss, harvest, ...)

Unknown sections or keys are errors so that typos do not silently fall back
to defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .action_space import MaskLevel
from .env import ConfigError, parse_opponent_mix
from .learner.network import PROTOCOLS
from .learner.ppo import PpoConfig
from .rewards import RewardWeights


@dataclass(frozen=True)
class EnvConfig:
    map: str = "basesWorkers8x8"
    protocol: str = "uas"
    mask: str = "full"
    opponents: str = "random"
    max_ticks: int = 2000


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    out_dir: str = "runs/default"
    checkpoint_every: int = 50
    bench_trials: int = 5
    bench_ticks: int = 2000


@dataclass(frozen=True)
class Config:
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    hidden: tuple[int, ...] = (128, 128)
    run: RunConfig = field(default_factory=RunConfig)
    rewards: RewardWeights = field(default_factory=RewardWeights)

    @property
    def opponent_mix(self) -> dict[str, float]:
        return parse_opponent_mix(self.env.opponents)


def _coerce(cls, section: str, values: dict):
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        if key not in types:
            raise ConfigError(f"unknown key [{section}] {key}")
        kind = types[key]
        try:
            if kind in ("int", int):
                out[key] = int(float(raw)) if "e" in raw.lower() else int(raw)
            elif kind in ("float", float):
                out[key] = float(raw)
            elif kind in ("bool", bool):
                if raw.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(raw)
                out[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = raw
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind}") from None
    return cls(**out)


def parse_config(text: str) -> Config:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    known = {"env", "ppo", "model", "run", "rewards"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    sec = {name: dict(cp[name]) if cp.has_section(name) else {} for name in known}
    env = _coerce(EnvConfig, "env", sec["env"])
    if env.protocol not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {PROTOCOLS}")
    try:
        MaskLevel(env.mask)
    except ValueError:
        raise ConfigError(f"mask must be full, partial or none, got {env.mask!r}") from None
    parse_opponent_mix(env.opponents)
    model = sec["model"]
    if set(model) - {"hidden"}:
        raise ConfigError(f"unknown keys in [model]: {sorted(set(model) - {'hidden'})}")
    try:
        hidden = tuple(int(v) for v in model.get("hidden", "128,128").split(","))
    except ValueError:
        raise ConfigError("[model] hidden must be comma-separated integers") from None
    try:
        rewards = RewardWeights.from_mapping(sec["rewards"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return Config(env, _coerce(PpoConfig, "ppo", sec["ppo"]), hidden, _coerce(RunConfig, "run", sec["run"]),
                  rewards)


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


def describe(cfg: Config) -> str:
    """One-line summary recorded in output headers."""
    ppo = ";".join(f"{k}={v}" for k, v in sorted(cfg.ppo.overrides().items()))
    return (f"map={cfg.env.map};protocol={cfg.env.protocol};mask={cfg.env.mask};"
            f"opponents={cfg.env.opponents};max_ticks={cfg.env.max_ticks};"
            f"hidden={','.join(map(str, cfg.hidden))};ppo_overrides={ppo};rewards={cfg.rewards}")

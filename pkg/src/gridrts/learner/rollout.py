"""Fixed-length segment collection from the vectorised runners."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import GridnetVecEnv, UasVecEnv
from . import policy
from .network import Architecture
from .ppo import PpoConfig, gae


@dataclass
class EpisodeLog:
    shaped: list[float] = field(default_factory=list)
    sparse: list[int] = field(default_factory=list)

    def add(self, info: dict) -> None:
        self.shaped.append(float(info["episode_return"]))
        self.sparse.append(int(info["sparse_outcome"]))


class Collector:
    """Holds the runner's current observation between segments."""

    def __init__(self, venv, arch: Architecture):
        if (arch.protocol == "uas") != isinstance(venv, UasVecEnv):
            raise ValueError("runner protocol does not match the network")
        self.venv = venv
        self.arch = arch
        self.obs, self.mask = venv.reset()

    def collect(self, params: dict, cfg: PpoConfig, rng: np.random.Generator):
        """Run ``cfg.num_steps`` transitions in every slot; returns (flat batch, episodes)."""
        T, N = cfg.num_steps, self.venv.num_envs
        if N != cfg.num_envs:
            raise ValueError(f"runner has {N} slots, config asks for {cfg.num_envs}")
        uas = self.arch.protocol == "uas"
        cells = self.arch.cells
        buf = {"obs": np.zeros((T, N) + self.obs.shape[1:], dtype=np.uint8),
               "logp": np.zeros((T, N)), "value": np.zeros((T, N)),
               "reward": np.zeros((T, N)), "done": np.zeros((T, N), dtype=bool)}
        if uas:
            buf.update(source=np.zeros((T, N), dtype=np.int64),
                       source_mask=np.zeros((T, N, cells), dtype=bool),
                       unit_mask=np.zeros((T, N, 78), dtype=bool),
                       comps=np.zeros((T, N, 7), dtype=np.int64))
        else:
            buf.update(grid_mask=np.zeros((T, N, cells, 79), dtype=bool),
                       comps=np.zeros((T, N, cells, 7), dtype=np.int64))
        episodes = EpisodeLog()
        venv = self.venv
        for t in range(T):
            buf["obs"][t] = self.obs
            if uas:
                src, comps, um, logp, v = policy.act_uas(params, self.arch, self.obs, self.mask,
                                                         venv.unit_masks, rng)
                buf["source"][t], buf["source_mask"][t] = src, self.mask
                buf["unit_mask"][t], buf["comps"][t] = um, comps
                rewards, dones, infos = venv.step(src, comps)
                self.obs, self.mask = venv.observe()
            else:
                comps, logp, v = policy.act_gridnet(params, self.arch, self.obs, self.mask, rng)
                buf["grid_mask"][t], buf["comps"][t] = self.mask, comps
                rewards, dones, infos = venv.step(comps)
                self.obs, self.mask = venv.observe()
            buf["logp"][t], buf["value"][t] = logp, v
            buf["reward"][t], buf["done"][t] = rewards, dones
            for i in np.flatnonzero(dones):
                episodes.add(infos[i])
        last_v = policy.value(params, self.arch, self.obs)
        adv, ret = gae(buf["reward"], buf["value"], buf["done"], last_v, cfg.gamma, cfg.gae_lambda)
        buf["adv"], buf["ret"] = adv, ret
        flat = {k: v.reshape((T * N,) + v.shape[2:]) for k, v in buf.items()}
        return flat, episodes


def make_runner(protocol: str, map_spec, opponents, **kw):
    cls = UasVecEnv if protocol == "uas" else GridnetVecEnv
    return cls(map_spec, opponents, **kw)

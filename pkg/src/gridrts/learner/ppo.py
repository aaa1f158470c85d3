"""GAE, the clipped PPO objective and its optimizer."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .network import Architecture
from .policy import evaluate


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    total_steps: int = 300_000_000
    num_envs: int = 24
    num_steps: int = 256
    minibatches: int = 4
    epochs: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.1
    max_grad_norm: float = 0.5
    learning_rate: float = 2.5e-4
    anneal_lr: bool = True
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    adam_eps: float = 1e-5
    norm_adv: bool = True
    clip_vloss: bool = True

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.num_steps

    @property
    def num_updates(self) -> int:
        return max(1, self.total_steps // self.batch_size)

    def overrides(self) -> dict:
        """Fields that differ from the defaults."""
        base = PpoConfig()
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) != getattr(base, f.name)}

    def with_(self, **kw) -> "PpoConfig":
        return replace(self, **kw)


def gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Generalized advantage estimates over a (T, ...) segment.

    ``dones[t]`` marks that the episode ended with transition t, so nothing
    after it is bootstrapped. ``bootstrap_value`` is V of the observation
    following the last transition.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not rewards.shape == values.shape == dones.shape:
        raise ValueError("rewards, values and dones must have the same shape")
    T = len(rewards)
    adv = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1:])
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def learning_rate(cfg: PpoConfig, update: int) -> float:
    """lr at 0-based ``update``: linear from the base rate down to 0 at ``num_updates``."""
    if not cfg.anneal_lr:
        return cfg.learning_rate
    return cfg.learning_rate * (1.0 - update / cfg.num_updates)


def normalize(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_loss(params: dict, arch: Architecture, mb: dict, cfg: PpoConfig, want_grad: bool = True):
    """Clipped-surrogate loss, its parts and (optionally) parameter gradients.

    ``mb`` carries the transitions plus ``logp``, ``value`` (old), ``adv``
    (already normalised if wanted) and ``ret``.
    """
    logp, ent, v, back = evaluate(params, arch, mb)
    n = len(logp)
    adv = np.asarray(mb["adv"], dtype=np.float64)
    ret = np.asarray(mb["ret"], dtype=np.float64)
    old_v = np.asarray(mb["value"], dtype=np.float64)
    ratio = np.exp(logp - np.asarray(mb["logp"], dtype=np.float64))
    eps = cfg.clip
    clipped = np.clip(ratio, 1 - eps, 1 + eps)
    s1, s2 = -adv * ratio, -adv * clipped
    pg_loss = np.maximum(s1, s2).mean()
    # the unclipped branch is active unless the clipped one is strictly larger
    use_unclipped = s1 >= s2
    inside = (ratio > 1 - eps) & (ratio < 1 + eps)
    dlogp = np.where(use_unclipped | inside, -adv * ratio, 0.0) / n

    if cfg.clip_vloss:
        v_clip = old_v + np.clip(v - old_v, -eps, eps)
        l1, l2 = (v - ret) ** 2, (v_clip - ret) ** 2
        v_loss = 0.5 * np.maximum(l1, l2).mean()
        dv_clip = np.where(np.abs(v - old_v) < eps, 1.0, 0.0)
        dv = np.where(l1 >= l2, (v - ret), (v_clip - ret) * dv_clip) / n
    else:
        v_loss = 0.5 * ((v - ret) ** 2).mean()
        dv = (v - ret) / n
    entropy = ent.mean()
    loss = pg_loss + cfg.vf_coef * v_loss - cfg.ent_coef * entropy
    stats = {"loss": float(loss), "policy_loss": float(pg_loss), "value_loss": float(v_loss),
             "entropy": float(entropy), "approx_kl": float(((ratio - 1) - np.log(ratio)).mean()),
             "clipfrac": float((np.abs(ratio - 1) > eps).mean())}
    if not math.isfinite(stats["loss"]):
        raise NonFiniteLoss(f"non-finite PPO loss: {stats}")
    if not want_grad:
        return stats, None
    grads = back(dlogp, np.full(n, -cfg.ent_coef / n), cfg.vf_coef * dv)
    return stats, grads


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


class Adam:
    def __init__(self, params: dict, eps: float = 1e-5, betas=(0.9, 0.999)):
        self.eps = eps
        self.b1, self.b2 = betas
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        b1, b2 = self.b1, self.b2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, p in params.items():
            g = grads[k].astype(p.dtype, copy=False)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)

    def state(self) -> dict[str, np.ndarray]:
        out = {f"adam.m.{k}": v for k, v in self.m.items()}
        out.update({f"adam.v.{k}": v for k, v in self.v.items()})
        out["adam.t"] = np.array([self.t], dtype=np.float32)
        return out

    def load_state(self, arrays: dict) -> None:
        for k in self.m:
            self.m[k][...] = arrays[f"adam.m.{k}"]
            self.v[k][...] = arrays[f"adam.v.{k}"]
        self.t = int(arrays["adam.t"][0])


def minibatch_indices(n: int, minibatches: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One shuffled partition of range(n): every index appears exactly once."""
    return np.array_split(rng.permutation(n), minibatches)


def ppo_update(params: dict, arch: Architecture, opt: Adam, batch: dict, cfg: PpoConfig, update: int,
               rng: np.random.Generator) -> dict:
    """K epochs over shuffled minibatches of a flattened segment; mutates ``params``."""
    lr = learning_rate(cfg, update)
    n = len(batch["logp"])
    adv_all = np.asarray(batch["adv"], dtype=np.float64)
    agg: dict[str, list] = {}
    for _ in range(cfg.epochs):
        for idx in minibatch_indices(n, cfg.minibatches, rng):
            mb = {k: v[idx] for k, v in batch.items()}
            if cfg.norm_adv:
                mb["adv"] = normalize(adv_all[idx])
            stats, grads = ppo_loss(params, arch, mb, cfg)
            norm = global_norm(grads)
            if not math.isfinite(norm):
                raise NonFiniteLoss(f"non-finite gradient norm at update {update}")
            if norm > cfg.max_grad_norm:
                scale = cfg.max_grad_norm / (norm + 1e-6)
                grads = {k: g * scale for k, g in grads.items()}
            opt.step(params, grads, lr)
            stats["grad_norm"] = norm
            for k, v in stats.items():
                agg.setdefault(k, []).append(v)
    out = {k: float(np.mean(v)) for k, v in agg.items()}
    out["lr"] = lr
    return out


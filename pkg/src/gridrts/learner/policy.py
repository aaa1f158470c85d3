"""Composite action distributions on top of the network heads.

A unit command is factored into independent components: action type plus
the parameter components that type consumes (move direction, harvest
direction, ..., attack position). Its log-probability is the sum of the
component log-probabilities; a UAS decision adds the source-cell term and a
Gridnet step sums over every cell that holds an idle own unit.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..action_space import COMPONENT_OFFSETS, COMPONENT_SIZES, CONSUMED
from . import distributions as D
from .network import Architecture, backward, flatten_obs, forward

NUM_COMPONENTS = len(COMPONENT_SIZES)

# consumed[t, k] is True when action type t uses component k
_CONSUMED = np.zeros((6, NUM_COMPONENTS), dtype=bool)
for _t, _ks in CONSUMED.items():
    _CONSUMED[_t, 0] = True
    _CONSUMED[_t, list(_ks)] = True


def _slices():
    return [slice(o, o + n) for o, n in zip(COMPONENT_OFFSETS, COMPONENT_SIZES)]


def unit_terms(logits: np.ndarray, mask: np.ndarray, comps: np.ndarray, weight: np.ndarray | None = None):
    """Composite log-prob and entropy of (N, 78) unit rows.

    A component enters the log-prob when the selected action type consumes it,
    and the entropy when it has at least one valid entry. ``weight`` (N,)
    scales each row (0 drops it). Returns (logp, entropy, grad_fn) where
    ``grad_fn(dlogp, dent)`` gives d/d logits.
    """
    n = len(logits)
    comps = np.asarray(comps)
    weight = np.ones(n) if weight is None else np.asarray(weight, dtype=np.float64)
    used = _CONSUMED[comps[:, 0]] & (weight[:, None] > 0)
    logp = np.zeros(n)
    ent = np.zeros(n)
    parts = []
    for k, sl in enumerate(_slices()):
        lk, mk = logits[:, sl], mask[:, sl]
        valid = mk.any(axis=1) & (weight > 0)
        safe = np.where(valid[:, None], mk, True)
        idx = np.where(used[:, k], comps[:, k], 0)
        if not np.take_along_axis(safe, idx[:, None], axis=1)[used[:, k], 0].all():
            raise ValueError(f"selection in component {k} is masked out")
        table = D.masked_log_probs(lk, safe)
        lp = np.take_along_axis(table, idx[:, None], axis=1)[:, 0]
        logp += np.where(used[:, k], lp, 0.0) * weight
        p = np.where(safe, np.exp(table), 0.0)
        h = -np.where(safe, p * table, 0.0).sum(axis=1)
        ent += np.where(valid, h, 0.0) * weight
        parts.append((sl, lk, safe, idx, used[:, k], valid))

    def grad_fn(dlogp: np.ndarray, dent: np.ndarray) -> np.ndarray:
        g = np.zeros(logits.shape, dtype=np.float64)
        for sl, lk, safe, idx, u, valid in parts:
            gk = D.policy_gradient(lk, safe, idx, (dlogp * weight) * u)
            gk += D.entropy_gradient(lk, safe) * ((dent * weight) * valid)[:, None]
            g[:, sl] = gk
        return g

    return logp, ent, grad_fn


def sample_unit(logits: np.ndarray, mask: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> np.ndarray:
    """One component selection per row; components without valid entries get 0."""
    n = len(logits)
    out = np.zeros((n, NUM_COMPONENTS), dtype=np.int64)
    for k, sl in enumerate(_slices()):
        mk = mask[:, sl]
        valid = mk.any(axis=1)
        safe = np.where(valid[:, None], mk, True)
        if greedy:
            idx = np.argmax(D.masked_logits(logits[:, sl], safe), axis=1)
        else:
            idx = D.masked_sample(logits[:, sl], safe, rng)
        out[:, k] = np.where(valid, idx, 0)
    return out


def _source_terms(logits, mask, src):
    table = D.masked_log_probs(logits, mask)
    if not np.take_along_axis(mask, src[:, None], axis=1).all():
        raise ValueError("selected source is masked out")
    lp = np.take_along_axis(table, src[:, None], axis=1)[:, 0]
    p = np.where(mask, np.exp(table), 0.0)
    ent = -np.where(mask, p * table, 0.0).sum(axis=1)

    def grad_fn(dlogp, dent):
        return D.policy_gradient(logits, mask, src, dlogp) + D.entropy_gradient(logits, mask) * dent[:, None]

    return lp, ent, grad_fn


def evaluate(params: dict, arch: Architecture, batch: dict):
    """Log-prob, entropy and value of stored transitions under ``params``.

    Returns (logp, entropy, value, backward_fn); ``backward_fn(dlogp, dent,
    dvalue)`` yields parameter gradients.
    """
    dtype = params["value.w"].dtype
    x = flatten_obs(batch["obs"], arch, dtype)
    if arch.protocol == "uas":
        src = np.asarray(batch["source"])
        out, cache = forward(params, arch, x, src)
        s_lp, s_ent, s_grad = _source_terms(out["source"], batch["source_mask"], src)
        u_lp, u_ent, u_grad = unit_terms(out["unit"], batch["unit_mask"], batch["comps"])
        logp, ent = s_lp + u_lp, s_ent + u_ent

        def backward_fn(dlogp, dent, dvalue):
            return backward(params, arch, cache, {"value": dvalue, "source": s_grad(dlogp, dent),
                                                  "unit": u_grad(dlogp, dent)})
    else:
        out, cache = forward(params, arch, x)
        b, cells = len(x), arch.cells
        gm = np.asarray(batch["grid_mask"])
        active = gm[..., 0].reshape(-1).astype(np.float64)
        lp, en, grad = unit_terms(out["grid"].reshape(b * cells, -1), gm[..., 1:].reshape(b * cells, -1),
                                  np.asarray(batch["comps"]).reshape(b * cells, -1), active)
        logp, ent = lp.reshape(b, cells).sum(1), en.reshape(b, cells).sum(1)

        def backward_fn(dlogp, dent, dvalue):
            dg = grad(np.repeat(dlogp, cells), np.repeat(dent, cells)).reshape(b, cells, -1)
            return backward(params, arch, cache, {"value": dvalue, "grid": dg})
    return logp, ent, out["value"].astype(np.float64), backward_fn


def act_uas(params: dict, arch: Architecture, obs: np.ndarray, source_mask: np.ndarray,
            unit_mask_fn: Callable[[np.ndarray], np.ndarray], rng: np.random.Generator, greedy: bool = False):
    """Sample a batch of UAS decisions.

    ``unit_mask_fn(sources)`` returns the (B, 78) masks of the chosen units.
    Returns (sources, comps, unit_masks, logp, value).
    """
    dtype = params["value.w"].dtype
    x = flatten_obs(obs, arch, dtype)
    out, _ = forward(params, arch, x)
    if greedy:
        src = np.argmax(D.masked_logits(out["source"], source_mask), axis=1)
    else:
        src = D.masked_sample(out["source"], source_mask, rng)
    um = np.asarray(unit_mask_fn(src))
    unit = out["unit"] + params["unit.cond"][src]
    comps = sample_unit(unit, um, rng, greedy)
    s_lp, _, _ = _source_terms(out["source"], source_mask, src)
    u_lp, _, _ = unit_terms(unit, um, comps)
    return src, comps, um, s_lp + u_lp, out["value"].astype(np.float64)


def act_gridnet(params: dict, arch: Architecture, obs: np.ndarray, grid_mask: np.ndarray,
                rng: np.random.Generator, greedy: bool = False):
    """Sample one command per cell. Returns (comps (B, cells, 7), logp, value)."""
    dtype = params["value.w"].dtype
    x = flatten_obs(obs, arch, dtype)
    out, _ = forward(params, arch, x)
    b, cells = len(x), arch.cells
    logits = out["grid"].reshape(b * cells, -1)
    gm = np.asarray(grid_mask)
    comps = sample_unit(logits, gm[..., 1:].reshape(b * cells, -1), rng, greedy)
    lp, _, _ = unit_terms(logits, gm[..., 1:].reshape(b * cells, -1), comps,
                          gm[..., 0].reshape(-1).astype(np.float64))
    return comps.reshape(b, cells, -1), lp.reshape(b, cells).sum(1), out["value"].astype(np.float64)


def value(params: dict, arch: Architecture, obs: np.ndarray) -> np.ndarray:
    out, _ = forward(params, arch, flatten_obs(obs, arch, params["value.w"].dtype))
    return out["value"].astype(np.float64)

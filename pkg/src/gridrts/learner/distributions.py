"""Masked categorical distributions with analytic gradients.

Every function works on the last axis, so a batch of rows (or a batch of
grid cells) is handled with the same code. Invalid entries are replaced by
``M`` before the softmax; their probability underflows to exactly 0.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

M = -1e8


class GradVariant(str, Enum):
    CANONICAL = "canonical"
    NAIVE = "naive"


def _check_mask(mask: np.ndarray) -> None:
    if not mask.any(axis=-1).all():
        raise ValueError("every masked categorical needs at least one valid entry")


def masked_logits(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, logits, np.asarray(M, dtype=logits.dtype))


def log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def masked_log_probs(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Full log-probability table of the masked distribution."""
    _check_mask(mask)
    return log_softmax(masked_logits(logits, mask))


def masked_probs(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.exp(masked_log_probs(logits, mask))


def _gather(table: np.ndarray, index: np.ndarray) -> np.ndarray:
    return np.take_along_axis(table, np.asarray(index)[..., None], axis=-1)[..., 0]


def masked_log_prob(logits: np.ndarray, mask: np.ndarray, index) -> np.ndarray:
    index = np.asarray(index)
    if not _gather(mask, index).all():
        raise ValueError("selected entry is masked out")
    return _gather(masked_log_probs(logits, mask), index)


def masked_entropy(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    logp = masked_log_probs(logits, mask)
    p = np.exp(logp)
    return -np.where(mask, p * logp, 0.0).sum(axis=-1)


def masked_sample(logits: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling; masked entries can never be drawn."""
    p = np.where(mask, masked_probs(logits, mask), 0.0)
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = (cdf <= u).sum(axis=-1)
    idx = np.minimum(idx, p.shape[-1] - 1)
    # float round-off at the top of the cdf could land on a trailing masked entry
    bad = ~_gather(mask, idx)
    if bad.any():
        last_valid = p.shape[-1] - 1 - np.argmax(mask[..., ::-1], axis=-1)
        idx = np.where(bad, last_valid, idx)
    return idx


def policy_gradient(logits: np.ndarray, mask: np.ndarray, index, scale=1.0,
                    variant: GradVariant | str = GradVariant.CANONICAL) -> np.ndarray:
    """Gradient of ``scale * log pi(index)`` with respect to the raw logits.

    CANONICAL differentiates through the masked softmax, so masked entries get
    exactly zero. NAIVE differentiates the unmasked softmax as if no mask had
    been applied.
    """
    variant = GradVariant(variant)
    if variant is GradVariant.CANONICAL:
        p = np.where(mask, masked_probs(logits, mask), 0.0)
    else:
        p = np.exp(log_softmax(logits))
    g = -p
    onehot = np.zeros_like(g)
    np.put_along_axis(onehot, np.asarray(index)[..., None], 1.0, axis=-1)
    g = g + onehot
    return g * np.asarray(scale, dtype=g.dtype)[..., None]


def entropy_gradient(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """d H / d logits for the masked distribution (zero at masked entries)."""
    logp = masked_log_probs(logits, mask)
    p = np.where(mask, np.exp(logp), 0.0)
    lp = np.where(mask, logp, 0.0)
    h = -(p * lp).sum(axis=-1, keepdims=True)
    return -p * (lp + h)


def composite_log_prob(components) -> np.ndarray:
    """Sum of per-component log-probs; ``components`` yields (logits, mask, index)."""
    total = 0.0
    for logits, mask, index in components:
        total = total + masked_log_prob(logits, mask, index)
    return total

"""Dense actor-critic with hand-written backpropagation.

Shared encoder ``flatten -> dense(H) -> ReLU -> dense(H) -> ReLU`` feeds a
policy head and a scalar value head. The UAS policy head emits ``h*w``
source logits plus 78 unit-action logits; the unit logits receive an
additive learned row for the selected source cell (a source-conditioning
table), so the command can depend on which unit was picked. The Gridnet head
emits ``h*w x 78`` logits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..action_space import UNIT_MASK_WIDTH
from ..observation import NUM_PLANES

PROTOCOLS = ("uas", "gridnet")


@dataclass(frozen=True)
class Architecture:
    protocol: str
    h: int
    w: int
    hidden: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")

    @property
    def cells(self) -> int:
        return self.h * self.w

    @property
    def input_size(self) -> int:
        return self.cells * NUM_PLANES

    def descriptor(self) -> str:
        heads = (f"{self.cells}+{UNIT_MASK_WIDTH}" if self.protocol == "uas"
                 else f"{self.cells}x{UNIT_MASK_WIDTH}")
        return (f"mlp;protocol={self.protocol};map={self.w}x{self.h};in={self.input_size};"
                f"hidden={','.join(map(str, self.hidden))};policy={heads};value=1")

    @classmethod
    def from_descriptor(cls, text: str) -> "Architecture":
        fields = dict(part.split("=", 1) for part in text.split(";")[1:])
        w, h = (int(v) for v in fields["map"].split("x"))
        arch = cls(fields["protocol"], h, w, tuple(int(v) for v in fields["hidden"].split(",")))
        if arch.descriptor() != text:
            raise ValueError(f"malformed architecture descriptor {text!r}")
        return arch

    def shapes(self) -> dict[str, tuple[int, ...]]:
        out = {}
        prev = self.input_size
        for i, n in enumerate(self.hidden):
            out[f"enc{i}.w"] = (prev, n)
            out[f"enc{i}.b"] = (n,)
            prev = n
        if self.protocol == "uas":
            out["source.w"] = (prev, self.cells)
            out["source.b"] = (self.cells,)
            out["unit.w"] = (prev, UNIT_MASK_WIDTH)
            out["unit.b"] = (UNIT_MASK_WIDTH,)
            out["unit.cond"] = (self.cells, UNIT_MASK_WIDTH)
        else:
            out["grid.w"] = (prev, self.cells * UNIT_MASK_WIDTH)
            out["grid.b"] = (self.cells * UNIT_MASK_WIDTH,)
        out["value.w"] = (prev, 1)
        out["value.b"] = (1,)
        return out


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(arch: Architecture, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Orthogonal weights (gain sqrt(2) encoder, 0.01 policy, 1 value), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.shapes().items():
        layer, kind = name.split(".")
        if kind == "w":
            gain = np.sqrt(2.0) if layer.startswith("enc") else (1.0 if layer == "value" else 0.01)
            params[name] = orthogonal(shape, gain, rng).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def flatten_obs(obs: np.ndarray, arch: Architecture, dtype=np.float32) -> np.ndarray:
    obs = np.asarray(obs)
    if obs.shape[-3:] != (arch.h, arch.w, NUM_PLANES):
        raise ValueError(f"observation shape {obs.shape[-3:]} does not match "
                         f"({arch.h}, {arch.w}, {NUM_PLANES})")
    return obs.reshape(obs.shape[:-3] + (arch.input_size,)).astype(dtype)


def forward(params: dict, arch: Architecture, x: np.ndarray, sources=None):
    """Returns (outputs, cache).

    ``x`` is a (B, h*w*27) batch. For UAS, ``sources`` (B,) selects the
    conditioning row added to the unit logits; without it the unit logits are
    the unconditioned head output.
    """
    if x.ndim != 2 or x.shape[1] != arch.input_size:
        raise ValueError(f"expected a (B, {arch.input_size}) batch, got {x.shape}")
    acts = [x]
    hcur = x
    for i in range(len(arch.hidden)):
        hcur = np.maximum(hcur @ params[f"enc{i}.w"] + params[f"enc{i}.b"], 0)
        acts.append(hcur)
    out = {"value": (hcur @ params["value.w"] + params["value.b"])[:, 0]}
    if arch.protocol == "uas":
        out["source"] = hcur @ params["source.w"] + params["source.b"]
        unit = hcur @ params["unit.w"] + params["unit.b"]
        if sources is not None:
            unit = unit + params["unit.cond"][np.asarray(sources)]
        out["unit"] = unit
    else:
        out["grid"] = (hcur @ params["grid.w"] + params["grid.b"]).reshape(
            len(x), arch.cells, UNIT_MASK_WIDTH)
    return out, (acts, sources)


def backward(params: dict, arch: Architecture, cache, grads: dict) -> dict[str, np.ndarray]:
    """Parameter gradients given d(loss)/d(output) for each output in ``grads``."""
    acts, sources = cache
    top = acts[-1]
    g = {name: np.zeros_like(p) for name, p in params.items()}
    dh = np.zeros_like(top)

    def dense(name, dout):
        nonlocal dh
        g[f"{name}.w"] += top.T @ dout
        g[f"{name}.b"] += dout.sum(axis=0)
        dh = dh + dout @ params[f"{name}.w"].T

    if "value" in grads:
        dense("value", np.asarray(grads["value"], dtype=top.dtype)[:, None])
    if arch.protocol == "uas":
        if "source" in grads:
            dense("source", grads["source"].astype(top.dtype, copy=False))
        if "unit" in grads:
            du = grads["unit"].astype(top.dtype, copy=False)
            dense("unit", du)
            if sources is not None:
                np.add.at(g["unit.cond"], np.asarray(sources), du)
    elif "grid" in grads:
        dense("grid", grads["grid"].reshape(len(top), -1).astype(top.dtype, copy=False))
    for i in range(len(arch.hidden) - 1, -1, -1):
        dz = dh * (acts[i + 1] > 0)
        g[f"enc{i}.w"] += acts[i].T @ dz
        g[f"enc{i}.b"] += dz.sum(axis=0)
        if i:
            dh = dz @ params[f"enc{i}.w"].T
    return g

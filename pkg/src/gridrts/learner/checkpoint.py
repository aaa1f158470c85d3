"""Versioned binary checkpoints.

Layout (little-endian)::

    b"RTSCKPT1"
    u32 descriptor length, descriptor bytes (utf-8)
    u64 update counter, u64 seed
    u32 array count
    per array: u32 name length, name bytes, u64 element count, float32 data

Arrays are stored flat; shapes are recovered from the architecture descriptor
(optimizer moments share the parameter shapes).
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .network import Architecture

MAGIC = b"RTSCKPT1"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    arch: Architecture
    params: dict[str, np.ndarray]
    update: int = 0
    seed: int = 0
    extra: dict[str, np.ndarray] | None = None


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def to_bytes(ck: Checkpoint) -> bytes:
    arrays = dict(ck.params)
    arrays.update(ck.extra or {})
    parts = [MAGIC, _pack_str(ck.arch.descriptor()), struct.pack("<QQ", ck.update, ck.seed),
             struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        parts += [_pack_str(name), struct.pack("<Q", data.size), data.tobytes()]
    return b"".join(parts)


def save_checkpoint(path, ck: Checkpoint) -> None:
    """Write atomically so an interrupted save never clobbers the previous file."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(to_bytes(ck))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def from_bytes(data: bytes, expect: Architecture | None = None) -> Checkpoint:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic or unsupported version)")
    desc = r.string()
    try:
        arch = Architecture.from_descriptor(desc)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"bad architecture descriptor {desc!r}") from e
    if expect is not None and expect.descriptor() != desc:
        raise CheckpointError(f"architecture mismatch: file has {desc!r}, expected {expect.descriptor()!r}")
    update, seed = r.unpack("<QQ")
    (count,) = r.unpack("<I")
    shapes = arch.shapes()
    params, extra = {}, {}
    for _ in range(count):
        name = r.string()
        (size,) = r.unpack("<Q")
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32)
        base = name.split(".", 2)[-1] if name.startswith("adam.") else name
        if base in shapes:
            if int(np.prod(shapes[base])) != size:
                raise CheckpointError(f"array {name} has {size} elements, expected shape {shapes[base]}")
            arr = arr.reshape(shapes[base])
        (params if name in shapes else extra)[name] = arr
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint body")
    missing = set(shapes) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint lacks arrays {sorted(missing)}")
    return Checkpoint(arch, params, update, seed, extra)


def load_checkpoint(path, expect: Architecture | None = None) -> Checkpoint:
    with open(path, "rb") as f:
        return from_bytes(f.read(), expect)

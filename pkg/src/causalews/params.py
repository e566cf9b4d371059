"""Named parameter store: values, gradient accumulators, Adam state, checkpoint IO.

Checkpoint format (flat binary, little-endian): magic ``CDPK1``, version u32,
then per parameter in name order: name length u32, UTF-8 name, rank u32, one
u64 extent per axis, and the float64 payload. Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

_MAGIC = b"CDPK1"
_VERSION = 1


class NonFiniteGradient(RuntimeError):
    """A parameter's gradient contains NaN or infinity."""


class _Slot:
    __slots__ = ("tensor", "m", "v", "step")

    def __init__(self, tensor: Tensor):
        self.tensor = tensor
        self.m = np.zeros_like(tensor.data)
        self.v = np.zeros_like(tensor.data)
        self.step = 0


class ParamStore:
    """Ordered map of unique names to trainable tensors plus optimizer state."""

    def __init__(self):
        self._slots: dict[str, _Slot] = {}

    def create(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._slots:
            raise ValueError(f"parameter {name!r} already exists")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._slots[name] = _Slot(t)
        return t

    def get(self, name: str) -> Tensor:
        return self._slots[name].tensor

    def names(self) -> list[str]:
        return list(self._slots)

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def n_values(self) -> int:
        return sum(s.tensor.size for s in self._slots.values())

    def zero_grads(self) -> None:
        for s in self._slots.values():
            s.tensor.grad = None

    def set_requires_grad(self, flag: bool, prefix: str = "") -> None:
        for name, s in self._slots.items():
            if name.startswith(prefix):
                s.tensor.requires_grad = flag

    def adam_step(
        self,
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        prefix: str = "",
    ) -> None:
        """One Adam update over parameters under ``prefix``; gradients are zeroed.

        Parameters with no accumulated gradient are treated as zero-gradient
        and left untouched (their moment state does not advance either).
        """
        b1, b2 = betas
        for name, s in self._slots.items():
            if not name.startswith(prefix):
                continue
            g = s.tensor.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
            s.step += 1
            s.m = b1 * s.m + (1.0 - b1) * g
            s.v = b2 * s.v + (1.0 - b2) * (g * g)
            mhat = s.m / (1.0 - b1**s.step)
            vhat = s.v / (1.0 - b2**s.step)
            s.tensor.data -= lr * mhat / (np.sqrt(vhat) + eps)
            s.tensor.grad = None

    def sgd_step(self, lr: float, momentum: float = 0.0, prefix: str = "") -> None:
        """Plain (momentum) SGD; keeps heavy-tailed gradients in their true
        units, which the edge-probability penalty trade-off relies on."""
        for name, s in self._slots.items():
            if not name.startswith(prefix):
                continue
            g = s.tensor.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
            if momentum > 0.0:
                s.m = momentum * s.m + g
                update = s.m
            else:
                update = g
            s.tensor.data -= lr * update
            s.tensor.grad = None

    # -- checkpointing ------------------------------------------------------

    def state_bytes(self, prefix: str = "") -> bytes:
        """Concatenated little-endian value bytes, for bitwise comparisons."""
        chunks = []
        for name in sorted(self._slots):
            if name.startswith(prefix):
                chunks.append(self._slots[name].tensor.data.astype("<f8").tobytes())
        return b"".join(chunks)

    def serialize(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            fh.write(struct.pack("<I", len(self._slots)))
            for name in sorted(self._slots):
                raw = name.encode("utf-8")
                arr = self._slots[name].tensor.data
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", arr.ndim))
                for ext in arr.shape:
                    fh.write(struct.pack("<Q", ext))
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def deserialize(cls, path: str | Path) -> "ParamStore":
        path = Path(path)
        store = cls()
        with open(path, "rb") as fh:
            magic = fh.read(5)
            if magic != _MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != _VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            (count,) = struct.unpack("<I", fh.read(4))
            for _ in range(count):
                (nlen,) = struct.unpack("<I", fh.read(4))
                name = fh.read(nlen).decode("utf-8")
                (rank,) = struct.unpack("<I", fh.read(4))
                shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
                n = int(np.prod(shape)) if shape else 1
                payload = fh.read(8 * n)
                arr = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
                store.create(name, arr)
        return store

    def clone(self) -> "ParamStore":
        other = ParamStore()
        for name, s in self._slots.items():
            other.create(name, s.tensor.data.copy())
        return other

    def copy_values_from(self, other: "ParamStore") -> None:
        for name, s in self._slots.items():
            s.tensor.data[...] = other._slots[name].tensor.data

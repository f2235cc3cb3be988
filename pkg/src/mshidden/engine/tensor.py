"""Dense f32 tensors and a reverse-mode gradient tape.

Ops executed while a :class:`Tape` is active are appended to it whenever one
of their inputs is tracked (a parameter with ``requires_grad`` or a tensor
passed to :meth:`Tape.watch`). :meth:`Tape.gradient` walks the record in
exact reverse execution order.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

DTYPE = np.float32
_dtype = [DTYPE]


def default_dtype():
    return _dtype[-1]


@contextlib.contextmanager
def reference_precision(dtype=np.float64):
    """Build tensors in ``dtype`` inside the block.

    Only the finite-difference oracle uses this; models and training run in f32.
    """
    _dtype.append(dtype)
    try:
        yield
    finally:
        _dtype.pop()


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=default_dtype())
        if any(d < 1 for d in arr.shape):
            raise DimensionError(f"all dimensions must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A new untracked leaf sharing the same values."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # Arithmetic sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.shift(self, float(other))
        return ops.add(self, ops.as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.shift(self, -float(other))
        return ops.sub(self, ops.as_tensor(other))

    def __rsub__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.shift(ops.scale(self, -1.0), float(other))
        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.mul(self, ops.as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class _Record:
    op: str
    out: Tensor
    inputs: tuple
    backward: BackwardFn


_ACTIVE: list = []


class Tape:
    """Records differentiable ops for one forward pass.

    Use as a context manager; nesting is allowed and every active tape sees
    the ops whose inputs it tracks.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self._tracked: set[int] = set()
        self._keep: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._tracked.add(id(t))
            self._keep.append(t)

    def tracks(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked

    def _record(self, op: str, out: Tensor, inputs: tuple, backward: BackwardFn) -> None:
        if any(self.tracks(t) for t in inputs):
            self._tracked.add(id(out))
            self.records.append(_Record(op, out, inputs, backward))

    def gradient(self, target: Tensor, sources: Iterable[Tensor],
                 seed: Optional[np.ndarray] = None) -> list[np.ndarray]:
        """Gradients of ``target`` w.r.t. each source.

        ``seed`` is the upstream gradient for ``target``; ones by default.
        Sources that did not influence the target get zeros.
        """
        sources = list(sources)
        if seed is None:
            seed = np.ones_like(target.data)
        keep = {id(s) for s in sources}
        grads: dict[int, np.ndarray] = {id(target): np.asarray(seed, dtype=target.data.dtype)}
        for rec in reversed(self.records):
            key = id(rec.out)
            g = grads.get(key) if key in keep else grads.pop(key, None)
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not self.tracks(inp):
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        return [grads.get(id(s), np.zeros_like(s.data)).astype(s.data.dtype, copy=False)
                for s in sources]


def record(op: str, out: Tensor, inputs: tuple, backward: BackwardFn) -> Tensor:
    for tape in _ACTIVE:
        tape._record(op, out, inputs, backward)
    return out

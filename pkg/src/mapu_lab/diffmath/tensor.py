"""Dense float64 tensors recorded on a reverse-mode tape."""

from __future__ import annotations

import itertools
from collections.abc import Callable, Generator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mapu_lab.errors import NumericalError, ShapeError, StaleTapeError

FloatArray = NDArray[np.float64]
BackwardFn = Callable[[FloatArray], Sequence[FloatArray | None]]

_active_tape: ContextVar[Tape | None] = ContextVar("mapu_active_tape", default=None)
_grad_enabled: ContextVar[bool] = ContextVar("mapu_grad_enabled", default=True)


class Tensor:
    """An n-dimensional float64 array that may take part in differentiation.

    ``grad`` is allocated only for tensors that require gradients. ``node`` is
    set when the tensor is the output of a recorded operation.
    """

    __slots__ = ("data", "grad", "name", "node", "requires_grad")

    def __init__(
        self, data: ArrayLike, *, requires_grad: bool = False, name: str | None = None, copy: bool = True
    ) -> None:
        self.data: FloatArray = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: FloatArray | None = np.zeros_like(self.data) if requires_grad else None
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> FloatArray:
        return self.data

    def detach(self) -> Tensor:
        """Return a constant view of the same values, cut from the tape."""
        return Tensor(self.data, name=self.name)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def set_requires_grad(self, flag: bool) -> None:
        self.requires_grad = flag
        if flag and self.grad is None:
            self.grad = np.zeros_like(self.data)
        elif not flag:
            self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    # Operator sugar delegates to ops; imported lazily to avoid a cycle.
    def __add__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.div(other, self)

    def __neg__(self) -> Tensor:
        from mapu_lab.diffmath import ops

        return ops.neg(self)


@dataclass(frozen=True)
class Node:
    """Handle from an output tensor back to its record on a tape."""

    tape: Tape
    generation: int
    index: int


@dataclass
class Record:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class Tape:
    """Ordered log of recorded operations.

    Records are appended in creation order, which is a topological order.
    ``clear()`` drops every record and bumps the generation, so any node
    handed out before the clear is rejected by ``backward``.
    """

    records: list[Record] = field(default_factory=list)
    generation: int = 0
    _counter: itertools.count[int] = field(default_factory=itertools.count, repr=False)
    _token: Any = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.records)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> Node:
        index = next(self._counter)
        self.records.append(Record(inputs, output, backward))
        return Node(self, self.generation, index)

    def clear(self) -> None:
        self.records = []
        self.generation += 1
        self._counter = itertools.count()

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _active_tape.reset(self._token)
        self._token = None
        self.clear()


def current_tape() -> Tape:
    """The tape new operations record onto, created on first use per context."""
    tape = _active_tape.get()
    if tape is None:
        tape = Tape()
        _active_tape.set(tape)
    return tape


def grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Generator[None, None, None]:
    """Evaluate without recording; outputs never require gradients."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def as_tensor(value: Tensor | ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def emit(data: FloatArray, inputs: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
    """Wrap an op result, check it is finite, and record it when needed."""
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite output from {op}")
    requires = grad_enabled() and any(t.requires_grad for t in inputs)
    # op results are freshly allocated and never alias an input
    out = Tensor(data, requires_grad=requires, copy=False)
    if requires:
        out.node = current_tape().record(inputs, out, backward)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor that requires it."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ShapeError("loss does not depend on any tensor that requires gradients")
    seed = np.ones_like(loss.data)
    if loss.node is None:
        assert loss.grad is not None
        loss.grad += seed
        return

    node = loss.node
    tape = node.tape
    if node.generation != tape.generation:
        raise StaleTapeError("loss was recorded on a tape that has been cleared")

    pending: dict[int, FloatArray] = {id(loss): seed}
    for rec in reversed(tape.records[: node.index + 1]):
        grad_out = pending.pop(id(rec.output), None)
        if grad_out is None:
            continue
        assert rec.output.grad is not None
        rec.output.grad += grad_out
        for tensor, grad_in in zip(rec.inputs, rec.backward(grad_out), strict=True):
            if grad_in is None or not tensor.requires_grad:
                continue
            if tensor.node is None:
                assert tensor.grad is not None
                tensor.grad += grad_in
            else:
                key = id(tensor)
                pending[key] = pending[key] + grad_in if key in pending else grad_in

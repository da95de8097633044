"""
Tensor type, the reverse-mode tape and the elementary differentiable ops.

A Tensor wraps a numpy array. Every op is a Function subclass with a
forward over arrays and a backward that maps the output gradient to input
gradients. Calling ``Function.apply`` records the function as the node that
produced its output; ``Tensor.backward`` orders those nodes into a Tape and
walks it once in reverse.
"""

import contextlib
import logging
import threading
from typing import Any, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core import NumericalError, ShapeError

logger = logging.getLogger(__name__)

_local = threading.local()


def _settings() -> threading.local:
    if not hasattr(_local, "grad_enabled"):
        _local.grad_enabled = True
        _local.dtype = np.dtype(np.float32)
    return _local


def get_default_dtype() -> np.dtype:
    """Return the floating dtype used for newly created tensors."""
    return _settings().dtype


def set_default_dtype(dtype: Any) -> None:
    """
    Set the floating dtype used for newly created tensors.

    Args:
        dtype: np.float32 or np.float64 (or their string names)
    """
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported tensor dtype: {dtype}")
    _settings().dtype = dtype


@contextlib.contextmanager
def default_dtype(dtype: Any) -> Iterator[None]:
    """Temporarily switch the default dtype (e.g. 64-bit verification mode)."""
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def is_grad_enabled() -> bool:
    return _settings().grad_enabled


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block."""
    settings = _settings()
    previous = settings.grad_enabled
    settings.grad_enabled = False
    try:
        yield
    finally:
        settings.grad_enabled = previous


class Tensor:
    """n-dimensional array with optional participation in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Any = None,
                 name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype.kind == "f":
                dtype = data.dtype
            else:
                dtype = get_default_dtype()
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._node: Optional["Function"] = None
        self.name = name

    # -- basic properties ---------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Return a tensor sharing data but cut off from the tape."""
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0)

    def backward(self) -> None:
        """Populate ``grad`` of every requires_grad leaf this scalar depends on."""
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __truediv__(self, other: Any) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("Division is only defined by a python scalar")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return Index.apply(self, index=index)

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def abs(self) -> "Tensor":
        return Abs.apply(self)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def flatten(self, start: int = 1) -> "Tensor":
        return flatten(self, start)

    def dot(self, other: "Tensor") -> "Tensor":
        return dot(self, other)


def _as_tensor(value: Any, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


class Function:
    """A differentiable operation; one instance is one node on the tape."""

    def __init__(self, inputs: Sequence[Optional[Tensor]]):
        self.inputs = tuple(inputs)
        self.needs_input_grad = tuple(
            t is not None and t.requires_grad for t in self.inputs
        )
        self.saved: Tuple[Any, ...] = ()

    def save_for_backward(self, *values: Any) -> None:
        self.saved = values

    def forward(self, *arrays: Any, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Optional[Tensor], **kwargs: Any) -> Tensor:
        fn = cls(inputs)
        arrays = [t.data if t is not None else None for t in inputs]
        out = fn.forward(*arrays, **kwargs)
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"{cls.__name__} produced non-finite values")
        result = Tensor(out, dtype=out.dtype)
        if is_grad_enabled() and any(fn.needs_input_grad):
            result.requires_grad = True
            result._node = fn
        return result


class Tape:
    """
    Operations behind one output, in topological order.

    Every entry is an output tensor whose inputs appear before it.
    """

    def __init__(self, entries: List[Tensor]):
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def record(cls, root: Tensor) -> "Tape":
        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in seen or tensor._node is None:
                continue
            seen.add(id(tensor))
            stack.append((tensor, True))
            for parent in tensor._node.inputs:
                if parent is not None and parent._node is not None and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def backward(self, root: Tensor, seed: np.ndarray) -> None:
        pending = {id(root): seed}
        for tensor in reversed(self.entries):
            grad = pending.pop(id(tensor), None)
            if grad is None:
                continue
            fn = tensor._node
            input_grads = fn.backward(grad)
            for inp, g, needed in zip(fn.inputs, input_grads, fn.needs_input_grad):
                if not needed or g is None:
                    continue
                if inp._node is None:
                    inp.grad += g.astype(inp.dtype, copy=False)
                elif id(inp) in pending:
                    pending[id(inp)] = pending[id(inp)] + g
                else:
                    pending[id(inp)] = g


def backward(loss: Tensor) -> None:
    """
    Reverse-mode sweep from a scalar loss.

    Gradients accumulate into leaf ``grad`` buffers until zeroed explicitly.

    Raises:
        ShapeError: If the loss is not a scalar
    """
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    if loss._node is None:
        if loss.requires_grad:
            loss.grad += seed
        return
    Tape.record(loss).backward(loss, seed)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        self.save_for_backward(a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self.saved
        return _unbroadcast(grad, sa), _unbroadcast(grad, sb)


class Sub(Function):
    def forward(self, a, b):
        self.save_for_backward(a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self.saved
        return _unbroadcast(grad, sa), _unbroadcast(-grad, sb)


class Mul(Function):
    def forward(self, a, b):
        self.save_for_backward(a, b)
        return a * b

    def backward(self, grad):
        a, b = self.saved
        ga = _unbroadcast(grad * b, a.shape) if self.needs_input_grad[0] else None
        gb = _unbroadcast(grad * a, b.shape) if self.needs_input_grad[1] else None
        return ga, gb


class Scale(Function):
    def forward(self, a, factor):
        self.save_for_backward(factor)
        return a * np.asarray(factor, dtype=a.dtype)

    def backward(self, grad):
        (factor,) = self.saved
        return (grad * np.asarray(factor, dtype=grad.dtype),)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        self.save_for_backward(a, b)
        return a @ b

    def backward(self, grad):
        a, b = self.saved
        ga = grad @ b.T if self.needs_input_grad[0] else None
        gb = a.T @ grad if self.needs_input_grad[1] else None
        return ga, gb


class Dot(Function):
    def forward(self, a, b):
        if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
            raise ShapeError(f"dot needs equal-length vectors, got {a.shape} and {b.shape}")
        self.save_for_backward(a, b)
        return np.asarray(np.dot(a, b), dtype=a.dtype)

    def backward(self, grad):
        a, b = self.saved
        return grad * b, grad * a


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.save_for_backward(a.shape, axis, keepdims)
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        shape, axis, keepdims = self.saved
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, shape).copy(),)


class Abs(Function):
    def forward(self, a):
        self.save_for_backward(np.sign(a))
        return np.abs(a)

    def backward(self, grad):
        (sign,) = self.saved
        return (grad * sign,)


class Reshape(Function):
    def forward(self, a, shape):
        self.save_for_backward(a.shape)
        try:
            return a.reshape(shape)
        except ValueError as e:
            raise ShapeError(f"Cannot reshape {a.shape} to {shape}: {e}")

    def backward(self, grad):
        (shape,) = self.saved
        return (grad.reshape(shape),)


class Index(Function):
    def forward(self, a, index):
        self.save_for_backward(a.shape, index)
        return np.array(a[index])

    def backward(self, grad):
        shape, index = self.saved
        full = np.zeros(shape, dtype=grad.dtype)
        np.add.at(full, index, grad)
        return (full,)


def add(a: Tensor, b: Any) -> Tensor:
    return Add.apply(a, _as_tensor(b, a))


def sub(a: Tensor, b: Any) -> Tensor:
    return Sub.apply(a, _as_tensor(b, a))


def mul(a: Tensor, b: Any) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return scale(a, float(b))
    return Mul.apply(a, _as_tensor(b, a))


def scale(a: Tensor, factor: float) -> Tensor:
    return Scale.apply(a, factor=float(factor))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def dot(a: Tensor, b: Tensor) -> Tensor:
    return Dot.apply(a, b)


def tsum(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def tabs(a: Tensor) -> Tensor:
    return Abs.apply(a)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def flatten(a: Tensor, start: int = 1) -> Tensor:
    """Collapse every axis from ``start`` on; ``start=0`` gives a vector."""
    return reshape(a, a.shape[:start] + (-1,))


def tensor(data: Any, requires_grad: bool = False, dtype: Any = None) -> Tensor:
    """Create a tensor in the default dtype unless one is given."""
    return Tensor(np.asarray(data), requires_grad=requires_grad,
                  dtype=dtype if dtype is not None else get_default_dtype())



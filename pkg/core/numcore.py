#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dense Numerical Kernel
النواة العددية الكثيفة

Float64 tensors, a reverse-mode gradient tape and a finite-difference
gradient checker. The model and the losses are written only with the
primitives in this module.

A tape is recorded by the thread that opened it; tensors themselves are
never modified after creation and can be shared read-only between threads.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import GradCheckError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

VjpFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def _active_tape() -> Optional["GradTape"]:
    return getattr(_state, "tape", None)


class Tensor:
    """A float64 array that can take part in gradient recording."""

    # make ndarray <op> Tensor dispatch to the Tensor reflected operators
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.array(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, value: np.ndarray) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor.value = value
        tensor.requires_grad = False
        tensor.name = None
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


TensorLike = Union[Tensor, np.ndarray, float, int]


def as_tensor(value: TensorLike) -> Tensor:
    """Wrap constants; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class _Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: VjpFn


class GradTape:
    """Ordered record of primitive operations for reverse-mode gradients.

    Used as a context manager: every operation executed inside the block
    whose inputs require gradients is appended to the tape. Tapes nest; the
    innermost one records.
    """

    def __init__(self):
        self._nodes: List[_Node] = []
        self._previous: Optional[GradTape] = None

    def __enter__(self) -> "GradTape":
        self._previous = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = self._previous
        self._previous = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def operations(self) -> List[str]:
        return [node.op for node in self._nodes]

    def record(self, node: _Node):
        self._nodes.append(node)

    def gradient(self, target: Tensor, sources):
        """Back-propagate from a scalar target to the given sources.

        `sources` may be a ParameterSet (returns name → gradient), a mapping
        of names to tensors (same) or a sequence of tensors (returns a list).
        Sources never reached by the tape get an all-zero gradient.
        """
        if target.value.size != 1:
            raise ShapeError(f"gradient target must be a scalar, got shape {target.shape}")
        grads: Dict[int, np.ndarray] = {id(target): np.ones_like(target.value)}
        for node in reversed(self._nodes):
            upstream = grads.get(id(node.output))
            if upstream is None:
                continue
            for tensor, grad in zip(node.inputs, node.vjp(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad

        def lookup(tensor: Tensor) -> np.ndarray:
            grad = grads.get(id(tensor))
            if grad is None:
                return np.zeros_like(tensor.value)
            return np.array(grad, dtype=np.float64).reshape(tensor.shape)

        if isinstance(sources, ParameterSet):
            return {name: lookup(tensor) for name, tensor in sources.items()}
        if isinstance(sources, Mapping):
            return {name: lookup(tensor) for name, tensor in sources.items()}
        return [lookup(tensor) for tensor in sources]


def _check_finite(op: str, value: np.ndarray):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced non-finite values")


def _record(op: str, inputs: Sequence[Tensor], value: np.ndarray, vjp: VjpFn) -> Tensor:
    _check_finite(op, value)
    out = Tensor._wrap(value)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(_Node(op, tuple(inputs), out, vjp))
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# elementwise

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _record("add", (a, b), a.value + b.value,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _record("sub", (a, b), a.value - b.value,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _record("mul", (a, b), a.value * b.value,
                   lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.value / b.value
    return _record("div", (a, b), out,
                   lambda g: (_unbroadcast(g / b.value, a.shape),
                              _unbroadcast(-g * out / b.value, b.shape)))


def neg(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _record("neg", (a,), -a.value, lambda g: (-g,))


def relu(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _record("relu", (a,), np.where(mask, a.value, 0.0), lambda g: (g * mask,))


def sigmoid(a: TensorLike) -> Tensor:
    """Logistic function, kept strictly inside (0, 1)."""
    a = as_tensor(a)
    e = np.exp(-np.abs(a.value))
    out = np.where(a.value >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = np.clip(out, np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).epsneg)
    return _record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def log(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.value)
    return _record("log", (a,), out, lambda g: (g / a.value,))


def clip(a: TensorLike, low: float, high: float) -> Tensor:
    """Clamp values; gradient passes only where the input is inside the range."""
    a = as_tensor(a)
    inside = (a.value >= low) & (a.value <= high)
    return _record("clip", (a,), np.clip(a.value, low, high), lambda g: (g * inside,))


# reductions and layout

def sum(a: TensorLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record("sum", (a,), np.asarray(out, dtype=np.float64), vjp)


def mean(a: TensorLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.shape[axis]
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def transpose(a: TensorLike) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 axes, got shape {a.shape}")
    return _record("transpose", (a,), np.swapaxes(a.value, -1, -2),
                   lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a: TensorLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return _record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}") from None
    offsets = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _record("concat", parts, out, lambda g: tuple(np.split(g, offsets, axis=axis)))


def stack(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([p.value for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[p.shape for p in parts]}") from None
    return _record("stack", parts, out,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(parts))))


# linear algebra and normalisation

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Matrix product over the last two axes; leading batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _record("matmul", (a, b), np.matmul(a.value, b.value),
                   lambda g: (_unbroadcast(np.matmul(g, np.swapaxes(b.value, -1, -2)), a.shape),
                              _unbroadcast(np.matmul(np.swapaxes(a.value, -1, -2), g), b.shape)))


def softmax_rows(m: TensorLike) -> Tensor:
    """Softmax along the last axis with per-row max subtraction."""
    m = as_tensor(m)
    if m.ndim == 0 or m.shape[-1] < 1:
        raise ShapeError(f"softmax_rows needs at least one column, got shape {m.shape}")
    shifted = m.value - np.max(m.value, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=-1, keepdims=True)
    return _record("softmax_rows", (m,), out,
                   lambda g: (out * (g - np.sum(g * out, axis=-1, keepdims=True)),))


def layer_norm(x: TensorLike, gain: TensorLike, bias: TensorLike, eps: float = 1e-5) -> Tensor:
    """Normalise every row (last axis) to zero mean, unit variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise ShapeError(f"layer_norm needs rows of length >= 2, got shape {x.shape}")
    d = x.shape[-1]
    if gain.shape[-1] != d or bias.shape[-1] != d:
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match width {d}")
    mu = np.mean(x.value, axis=-1, keepdims=True)
    centered = x.value - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = gain.value * xhat + bias.value

    def vjp(g):
        dxhat = g * gain.value
        dx = inv * (dxhat
                    - np.mean(dxhat, axis=-1, keepdims=True)
                    - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
        return dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _record("layer_norm", (x, gain, bias), out, vjp)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    """Uniform draw in ±sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class ParameterSet:
    """Named collection of trainable tensors with a stable name order."""

    def __init__(self, arrays: Optional[Mapping[str, np.ndarray]] = None):
        self._tensors: Dict[str, Tensor] = {}
        for name, value in (arrays or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"Parameter {name!r} already defined")
        tensor = Tensor(value, requires_grad=True, name=name)
        self._tensors[name] = tensor
        return tensor

    def assign(self, name: str, value):
        """Replace a parameter's value (tensors stay immutable)."""
        current = self._tensors[name]
        value = np.array(value, dtype=np.float64)
        if value.shape != current.shape:
            raise ShapeError(f"Parameter {name!r}: expected shape {current.shape}, got {value.shape}")
        self._tensors[name] = Tensor(value, requires_grad=True, name=name)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self._tensors.items()}

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._tensors.items()}

    def size(self) -> int:
        return int(np.sum([t.value.size for t in self._tensors.values()]))

    def copy(self) -> "ParameterSet":
        clone = type(self).__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone._tensors = {name: Tensor(t.value, requires_grad=True, name=name)
                          for name, t in self._tensors.items()}
        return clone


@dataclass
class ParameterCheck:
    name: str
    max_relative_error: float
    passed: bool
    worst_index: Tuple[int, ...] = ()


@dataclass
class GradCheckReport:
    tolerance: float
    eps: float
    checks: List[ParameterCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def max_error(self) -> float:
        return max((c.max_relative_error for c in self.checks), default=0.0)

    def to_dict(self) -> Dict:
        return {
            "tolerance": self.tolerance,
            "eps": self.eps,
            "passed": self.passed,
            "parameters": [
                {"name": c.name, "max_relative_error": c.max_relative_error, "passed": c.passed}
                for c in self.checks
            ],
        }


def _scalar(loss: Tensor) -> float:
    value = float(np.asarray(loss.value).reshape(-1)[0])
    if not np.isfinite(value):
        raise NonFiniteError(f"loss evaluated to {value}")
    return value


def grad_check(loss_fn: Callable[[ParameterSet], Tensor], params: ParameterSet,
               eps: float = 1e-5, tol: float = 1e-4,
               analytic: Optional[Mapping[str, np.ndarray]] = None,
               floor: float = 1e-5) -> GradCheckReport:
    """Compare tape gradients with central finite differences, parameter by parameter.

    The relative error of one element is |a - n| / max(|a|, |n|, floor).
    Pass `analytic` to check a precomputed gradient instead of the tape's.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise GradCheckError(f"eps must lie in [1e-7, 1e-3], got {eps}")

    if analytic is None:
        with GradTape() as tape:
            loss = loss_fn(params)
        _scalar(loss)
        analytic = tape.gradient(loss, params)

    report = GradCheckReport(tolerance=tol, eps=eps)
    for name in params.names():
        base = params[name].value.copy()
        numeric = np.zeros_like(base)
        for index in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[index] = base[index] + eps
            params.assign(name, shifted)
            f_plus = _scalar(loss_fn(params))
            shifted[index] = base[index] - eps
            params.assign(name, shifted)
            f_minus = _scalar(loss_fn(params))
            numeric[index] = (f_plus - f_minus) / (2.0 * eps)
        params.assign(name, base)

        exact = np.asarray(analytic[name], dtype=np.float64).reshape(base.shape)
        denom = np.maximum(np.maximum(np.abs(exact), np.abs(numeric)), floor)
        errors = np.abs(exact - numeric) / denom
        worst = np.unravel_index(int(np.argmax(errors)), errors.shape) if errors.size else ()
        max_error = float(errors.max()) if errors.size else 0.0
        report.checks.append(ParameterCheck(name, max_error, max_error <= tol, tuple(int(i) for i in worst)))

    if report.passed:
        logger.info(f"Gradient check passed for {len(report.checks)} parameters "
                    f"(max relative error {report.max_error():.3e})")
    else:
        logger.warning(f"Gradient check failed for: {', '.join(report.failures)}")
    return report

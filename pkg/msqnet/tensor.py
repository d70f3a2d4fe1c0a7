"""
Dense float64 tensors with reverse-mode automatic differentiation.

Operations executed while a :class:`Tape` is active, on inputs that require
gradients, are recorded on that tape; ``tape.backward(loss)`` replays them in
reverse execution order. Outside a tape nothing is recorded, which is how
evaluation and finite differencing run.

Broadcasting is limited to the trailing-dimension rule: the smaller operand's
shape must equal the trailing part of the larger one (bias vectors, positional
tables). Anything wider goes through :func:`broadcast_to` explicitly.
"""
import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

_local = threading.local()
_check_finite = False


def set_check_finite(enabled):
    """Toggle the debug-mode NaN/Inf check run after every forward op."""
    global _check_finite
    _check_finite = bool(enabled)


class Tape:
    """Ordered record of executed operations; single-threaded by construction."""

    def __init__(self):
        self.entries = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False

    @staticmethod
    def current():
        stack = _stack()
        return stack[-1] if stack else None

    def record(self, op, output, backward):
        output._tape = self
        self.entries.append(_Entry(op, output, backward))

    def backward(self, root, seed=None):
        """Propagate gradients from ``root`` to every tensor recorded before it."""
        if root._tape is not self:
            raise ValueError('backward() root was not recorded on this tape')
        if seed is None:
            if root.data.size != 1:
                raise ShapeError('backward (implicit seed needs a scalar)', root.shape)
            seed = np.ones_like(root.data)
        root._accumulate(np.asarray(seed, dtype=np.float64))
        for entry in reversed(self.entries):
            if entry.output._touched:
                entry.backward(entry.output.grad)
                entry.output._touched = False


@dataclass
class _Entry:
    op: str
    output: 'Tensor'
    backward: object


def _stack():
    if not hasattr(_local, 'stack'):
        _local.stack = []
    return _local.stack


class Tensor:
    """N-dimensional float64 array; ``grad`` is present iff ``requires_grad``."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.name = name
        self._tape = None
        self._touched = False

    @classmethod
    def _wrap(cls, data, requires_grad):
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = requires_grad
        out.grad = np.zeros_like(out.data) if requires_grad else None
        out.name = None
        out._tape = None
        out._touched = False
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self, seed=None):
        if self._tape is None:
            raise ValueError('tensor was not produced under an active Tape')
        self._tape.backward(self, seed)

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        self.grad += g
        self._touched = True

    def __repr__(self):
        label = f' name={self.name!r}' if self.name else ''
        return f'Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})'

    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else shift(self, -other)

    def __rsub__(self, other):
        return shift(scale(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError('division is only defined by a scalar')
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(op, data, parents, backward):
    tape = Tape.current()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, needs_grad)
    if needs_grad:
        tape.record(op, out, backward)
    if _check_finite and not np.all(np.isfinite(out.data)):
        raise NumericalError(f'{op} produced non-finite values')
    return out


def _trailing_match(big, small):
    return small == big[len(big) - len(small):] if len(small) <= len(big) else False


def _reduce_to(g, shape):
    """Sum a gradient over leading axes so it matches a trailing-broadcast operand."""
    if g.shape == shape:
        return g
    return g.reshape((-1,) + tuple(shape)).sum(axis=0)


def _binary_shapes(op, a, b):
    if a.shape == b.shape or _trailing_match(a.shape, b.shape) or _trailing_match(b.shape, a.shape):
        return
    raise ShapeError(op, a.shape, b.shape)


def add(a, b):
    _binary_shapes('add', a, b)

    def backward(g):
        a._accumulate(_reduce_to(g, a.shape))
        b._accumulate(_reduce_to(g, b.shape))

    return _result('add', a.data + b.data, (a, b), backward)


def sub(a, b):
    _binary_shapes('sub', a, b)

    def backward(g):
        a._accumulate(_reduce_to(g, a.shape))
        b._accumulate(-_reduce_to(g, b.shape))

    return _result('sub', a.data - b.data, (a, b), backward)


def mul(a, b):
    _binary_shapes('mul', a, b)

    def backward(g):
        a._accumulate(_reduce_to(g * b.data, a.shape))
        b._accumulate(_reduce_to(g * a.data, b.shape))

    return _result('mul', a.data * b.data, (a, b), backward)


def scale(a, c):
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return _result('scale', a.data * c, (a,), backward)


def shift(a, c):
    c = float(c)

    def backward(g):
        a._accumulate(g)

    return _result('shift', a.data + c, (a,), backward)


def matmul(a, b):
    """``a[..., m, k] @ b[k, n]``, or a batched product when both share leading dims."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul', a.shape, b.shape)
    if b.ndim == 2:
        k, n = b.shape

        def backward(g):
            a._accumulate(g @ b.data.T)
            b._accumulate(a.data.reshape(-1, k).T @ g.reshape(-1, n))
    elif a.shape[:-2] == b.shape[:-2]:
        def backward(g):
            a._accumulate(g @ np.swapaxes(b.data, -1, -2))
            b._accumulate(np.swapaxes(a.data, -1, -2) @ g)
    else:
        raise ShapeError('matmul', a.shape, b.shape)
    return _result('matmul', a.data @ b.data, (a, b), backward)


def transpose(a, axes=None):
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(np.transpose(g, inverse))

    return _result('transpose', np.transpose(a.data, axes), (a,), backward)


def swapaxes(a, first, second):
    axes = list(range(a.ndim))
    axes[first], axes[second] = axes[second], axes[first]
    return transpose(a, axes)


def reshape(a, shape):
    shape = tuple(shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError('reshape', a.shape, shape) from None

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result('reshape', data, (a,), backward)


def broadcast_to(a, shape):
    """Numpy-style broadcast of ``a`` to ``shape``; gradients are summed back."""
    shape = tuple(shape)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError('broadcast_to', a.shape, shape) from None
    lead = len(shape) - a.ndim
    axes = tuple(range(lead)) + tuple(
        lead + i for i, extent in enumerate(a.shape) if extent == 1 and shape[lead + i] != 1
    )

    def backward(g):
        a._accumulate(g.sum(axis=axes).reshape(a.shape) if axes else g)

    return _result('broadcast_to', np.array(data), (a,), backward)


def concat(tensors, axis=0):
    tensors = list(tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError('concat', *(t.shape for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            t._accumulate(piece)

    return _result('concat', data, tensors, backward)


def take(a, index):
    data = a.data[index]
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        a._accumulate(full)

    return _result('take', np.array(data), (a,), backward)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result('sum', data, (a,), backward)


def mean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def exp(a):
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _result('exp', data, (a,), backward)


def log(a):
    def backward(g):
        a._accumulate(g / a.data)

    return _result('log', np.log(a.data), (a,), backward)


def tanh(a):
    data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - data * data))

    return _result('tanh', data, (a,), backward)


def sigmoid(a):
    data = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * data * (1.0 - data))

    return _result('sigmoid', data, (a,), backward)


def softplus(a):
    """``log(1 + e^x)`` in the overflow-free ``max(x, 0) + log1p(e^-|x|)`` form."""
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        a._accumulate(g * _sigmoid(x))

    return _result('softplus', data, (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a):
    """GELU, tanh form; smooth everywhere so gradient checks stay tight."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        a._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner))

    return _result('gelu', data, (a,), backward)


def softmax(x, axis=-1):
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        x._accumulate(data * (g - np.sum(g * data, axis=axis, keepdims=True)))

    return _result('softmax', data, (x,), backward)


def log_softmax(x, axis=-1):
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    data = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))

    def backward(g):
        x._accumulate(g - np.exp(data) * np.sum(g, axis=axis, keepdims=True))

    return _result('log_softmax', data, (x,), backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """Standardise each trailing vector, then apply ``gain`` and ``bias``."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError('layer_norm', x.shape, gain.shape, bias.shape)
    if eps <= 0:
        raise ValueError('layer_norm eps must be positive')
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std
    data = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        x._accumulate(inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        ))
        gain._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        bias._accumulate(g.reshape(-1, d).sum(axis=0))

    return _result('layer_norm', data, (x, gain, bias), backward)


def _is_basic_index(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(p is None or p is Ellipsis or isinstance(p, (int, np.integer, slice)) for p in parts)


def _sigmoid(x):
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    e = np.exp(x[~positive])
    out[~positive] = e / (1.0 + e)
    return out


@dataclass
class Nudge:
    """
    The tensor a finite-difference evaluation is currently nudging, and a memo
    shared by every evaluation of one :func:`grad_check` call. Modules that do
    not hold the nudged tensor may answer from the memo when their inputs are
    unchanged.
    """
    tensor: 'Tensor'
    memo: dict


def current_nudge():
    return getattr(_local, 'nudge', None)


@dataclass
class GradCheckFailure:
    parameter: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tol: float
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


def grad_check(f, params, h=1e-5, tol=1e-4, max_coords=None, seed=0, atol=1e-5):
    """
    Compare tape gradients of the scalar ``f()`` with central differences.

    ``params`` maps names to tensors (a plain sequence is numbered). With
    ``max_coords`` set, that many seeded random coordinates are checked per
    tensor instead of all of them. The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, atol)``; coordinates above ``tol`` are reported,
    never raised.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError('grad_check step h must lie in [1e-6, 1e-4]')
    if not hasattr(params, 'items'):
        params = {f'param{i}': p for i, p in enumerate(params)}
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        out = f()
        if out.size != 1:
            raise ShapeError('grad_check (f must return a scalar)', out.shape)
        if out._tape is tape:
            tape.backward(out)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0, n_checked=0, tol=tol)
    memo = {}
    try:
        for name, p in params.items():
            coords = list(np.ndindex(p.shape))
            if max_coords is not None and len(coords) > max_coords:
                chosen = rng.choice(len(coords), size=max_coords, replace=False)
                coords = [coords[i] for i in sorted(chosen)]
            _local.nudge = Nudge(tensor=p, memo=memo)
            for index in coords:
                original = p.data[index]
                p.data[index] = original + h
                f_plus = f().item()
                p.data[index] = original - h
                f_minus = f().item()
                p.data[index] = original
                numeric = (f_plus - f_minus) / (2.0 * h)
                a = float(analytic[name][index])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), atol)
                report.n_checked += 1
                report.max_rel_error = max(report.max_rel_error, rel)
                if rel > tol:
                    report.failures.append(GradCheckFailure(name, index, a, numeric, rel))
    finally:
        _local.nudge = None
    logger.debug('grad_check: %d coordinates, max rel error %.3e', report.n_checked, report.max_rel_error)
    return report

"""Parameter containers and Transformer building blocks on top of ``msqnet.tensor``."""
import math
from dataclasses import fields, is_dataclass

import numpy as np

from . import tensor as tn
from .exceptions import CheckpointError, ConfigurationError, ShapeError
from .tensor import Tensor


def normal(rng, shape, std):
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def xavier(rng, fan_out, fan_in):
    return normal(rng, (fan_out, fan_in), math.sqrt(2.0 / (fan_in + fan_out)))


def zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape):
    return Tensor(np.ones(shape), requires_grad=True)


def _same(a, b):
    if isinstance(a, Tensor) or isinstance(b, Tensor):
        return isinstance(a, Tensor) and isinstance(b, Tensor) and np.array_equal(a.data, b.data)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.shape(a) == np.shape(b) and np.array_equal(a, b)
    if isinstance(a, (list, tuple)):
        return type(a) is type(b) and len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, dict):
        return isinstance(b, dict) and a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)
    if is_dataclass(a):
        return type(a) is type(b) and all(_same(getattr(a, f.name), getattr(b, f.name)) for f in fields(a))
    return a is b or a == b


def _mentions(value, tensor):
    if value is tensor:
        return True
    if isinstance(value, (list, tuple)):
        return any(_mentions(item, tensor) for item in value)
    if isinstance(value, dict):
        return any(_mentions(item, tensor) for item in value.values())
    if is_dataclass(value) and not isinstance(value, type):
        return any(_mentions(getattr(value, f.name), tensor) for f in fields(value))
    return False


class Module:
    """
    Base class for anything holding tensors.

    Tensors, sub-modules and lists of sub-modules assigned as attributes are
    discovered in assignment order and named by their attribute path, e.g.
    ``decoder.layers.1.cross_attn.q_proj.weight``.
    """

    # tensors reported first when a checkpoint does not fit
    checkpoint_priority = ()

    def named_tensors(self, prefix=''):
        for key, value in vars(self).items():
            if key.startswith('_'):
                continue
            name = f'{prefix}{key}'
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_tensors(f'{name}.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_tensors(f'{name}.{i}.')

    def named_parameters(self):
        """Trainable tensors only; frozen ones are skipped."""
        return [(name, t) for name, t in self.named_tensors() if t.requires_grad]

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def freeze(self):
        for _, t in self.named_tensors():
            t.requires_grad = False
            t.grad = None

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def load_state_dict(self, state):
        """Validate every name and shape first, then assign; nothing changes on error."""
        tensors = dict(self.named_tensors())
        missing = sorted(set(tensors) - set(state))
        if missing:
            raise CheckpointError(f'checkpoint lacks tensor {missing[0]!r}', tensor=missing[0])
        unexpected = sorted(set(state) - set(tensors))
        if unexpected:
            raise CheckpointError(f'checkpoint has unknown tensor {unexpected[0]!r}', tensor=unexpected[0])
        mismatched = [name for name, t in tensors.items() if tuple(np.shape(state[name])) != t.shape]
        if mismatched:
            ranked = [name for name in self.checkpoint_priority if name in mismatched]
            name = (ranked or mismatched)[0]
            others = [other for other in mismatched if other != name]
            also = f' (also mismatched: {", ".join(others)})' if others else ''
            raise CheckpointError(
                f'shape mismatch for {name!r}: checkpoint {tuple(np.shape(state[name]))}, '
                f'model {tensors[name].shape}{also}',
                tensor=name,
            )
        for name, t in tensors.items():
            t.data[...] = state[name]

    def __call__(self, *args, **kwargs):
        nudge = tn.current_nudge()
        if nudge is None:
            return self.forward(*args, **kwargs)
        return self._memoized(nudge, args, kwargs)

    def _memoized(self, nudge, args, kwargs):
        """Reuse the last output while the nudged tensor lies outside this module and the inputs repeat."""
        key = id(self)
        entry = nudge.memo.get(key)
        if entry is None:
            entry = nudge.memo[key] = {'own': {id(t) for _, t in self.named_tensors()}}
        inputs = (args, kwargs)
        if id(nudge.tensor) in entry['own'] or _mentions(inputs, nudge.tensor):
            # the nudged tensor changes in place, so neither reuse nor keep this result
            entry.pop('inputs', None)
            return self.forward(*args, **kwargs)
        if 'inputs' in entry and _same(entry['inputs'], inputs):
            return entry['output']
        entry['inputs'] = inputs
        entry['output'] = self.forward(*args, **kwargs)
        return entry['output']


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True):
        self.weight = xavier(rng, out_features, in_features)
        self.bias = zeros((out_features,)) if bias else None

    def forward(self, x):
        y = tn.matmul(x, tn.transpose(self.weight))
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        self.gain = ones((d,))
        self.bias = zeros((d,))
        self._eps = eps

    def forward(self, x):
        return tn.layer_norm(x, self.gain, self.bias, self._eps)


class FeedForward(Module):
    def __init__(self, d, hidden, rng):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)

    def forward(self, x):
        return self.fc2(tn.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    """Scaled dot-product attention over inputs shaped (groups, length, d)."""

    def __init__(self, d, heads, rng):
        if d % heads:
            raise ConfigurationError(f'width {d} is not divisible by {heads} heads')
        self._heads = heads
        self.q_proj = Linear(d, d, rng)
        self.k_proj = Linear(d, d, rng)
        self.v_proj = Linear(d, d, rng)
        self.out_proj = Linear(d, d, rng)

    def _split(self, x):
        g, length, d = x.shape
        x = tn.reshape(x, (g, length, self._heads, d // self._heads))
        return tn.transpose(x, (0, 2, 1, 3))

    def forward(self, q_in, k_in, v_in, zero_values=False):
        """Returns ``(output, weights)``; ``weights`` is (groups, heads, Lq, Lk)."""
        if q_in.ndim != 3 or k_in.shape != v_in.shape or q_in.shape[0] != k_in.shape[0]:
            raise ShapeError('attention', q_in.shape, k_in.shape, v_in.shape)
        g, length, d = q_in.shape
        if zero_values:
            v_in = tn.scale(v_in, 0.0)
        q = self._split(self.q_proj(q_in))
        k = self._split(self.k_proj(k_in))
        v = self._split(self.v_proj(v_in))
        scores = tn.scale(tn.matmul(q, tn.swapaxes(k, -1, -2)), 1.0 / math.sqrt(d // self._heads))
        weights = tn.softmax(scores, axis=-1)
        mixed = tn.transpose(tn.matmul(weights, v), (0, 2, 1, 3))
        return self.out_proj(tn.reshape(mixed, (g, length, d))), weights


class TransformerBlock(Module):
    """Pre-norm joint self-attention block."""

    def __init__(self, d, heads, hidden, rng):
        self.norm1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads, rng)
        self.norm2 = LayerNorm(d)
        self.ffn = FeedForward(d, hidden, rng)

    def forward(self, x):
        h = self.norm1(x)
        attended, weights = self.attn(h, h, h)
        x = x + attended
        return x + self.ffn(self.norm2(x)), weights

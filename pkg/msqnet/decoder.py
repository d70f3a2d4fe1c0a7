"""
Multi-modal Transformer decoder, per-class feature projection and the
training objective.

Each decoder layer updates the label queries with self-attention over
position-encoded queries, cross-attention from position-encoded queries to the
position-encoded memory (values stay raw), and a feed-forward network, each
wrapped in a pre-norm residual.
"""
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .choices import TaskMode
from .exceptions import ConfigurationError, ContractViolation, ShapeError
from .layers import FeedForward, LayerNorm, Module, MultiHeadAttention, xavier, zeros
from .tensor import Tensor


@dataclass(frozen=True)
class DecoderConfig:
    layers: int = 2
    heads: int = 2
    d_model: int = 32
    ffn_width: int = 128
    task_mode: str = TaskMode.MULTI_LABEL

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigurationError('decoder needs at least one layer')
        if self.heads < 1 or self.d_model % self.heads:
            raise ConfigurationError(f'd_model {self.d_model} is not divisible by {self.heads} heads')
        if self.task_mode not in TaskMode.values:
            raise ConfigurationError(f'unknown task mode {self.task_mode!r}')


@dataclass
class DecoderTrace:
    """Query states ``Q_0 ... Q_L`` and per-layer cross-attention maps (B, heads, K, T+1)."""
    states: list = field(default_factory=list)
    attentions: list = field(default_factory=list)

    @property
    def final(self):
        return self.states[-1]


class ClassificationHead(Module):
    """
    ``logit_k = W_k · Q_L[k] + b_k``. With ``shared`` every class uses the same
    ``W_k`` and ``b_k``, so the head can score classes it never saw.
    """

    def __init__(self, num_classes, d, rng, shared=False):
        rows = 1 if shared else num_classes
        self._shared = shared
        self.W = xavier(rng, rows, d)
        self.b = zeros((rows,))

    @property
    def shared(self):
        return self._shared

    def logits(self, Q_L):
        *lead, k, d = Q_L.shape
        if self._shared:
            W = tn.broadcast_to(self.W, (k, d))
            b = tn.broadcast_to(self.b, (k,))
        else:
            if self.W.shape != (k, d):
                raise ShapeError('classify', Q_L.shape, self.W.shape)
            W, b = self.W, self.b
        return tn.sum(Q_L * W, axis=-1) + b


class DecoderLayer(Module):
    def __init__(self, d, heads, ffn_width, rng, zero_cross_values=False):
        self._zero_cross_values = zero_cross_values
        self.norm_self = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, heads, rng)
        self.norm_cross = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, heads, rng)
        self.norm_ffn = LayerNorm(d)
        self.ffn = FeedForward(d, ffn_width, rng)

    def forward(self, Q_prev, memory, query_pos=None):
        return decoder_layer(Q_prev, memory, query_pos, self)


def _with_position(x, pos):
    return x if pos is None else x + pos


def decoder_layer(Q_prev, memory, query_pos, params):
    """
    One decoder update. ``Q_prev`` is (K, D) or (B, K, D); ``memory`` an
    :class:`~msqnet.encoder.EncodedVideo` with (T+1, D) or (B, T+1, D) rows.
    Returns the new queries and the cross-attention weights (B, heads, K, T+1).
    """
    F = memory.memory
    unbatched = Q_prev.ndim == 2
    if unbatched:
        Q_prev = tn.reshape(Q_prev, (1,) + Q_prev.shape)
    if F.ndim == 2:
        F = tn.broadcast_to(F, (Q_prev.shape[0],) + F.shape)
    if F.shape[0] != Q_prev.shape[0] or F.shape[-1] != Q_prev.shape[-1]:
        raise ShapeError('decoder_layer', Q_prev.shape, F.shape)

    h = params.norm_self(Q_prev)
    h_pos = _with_position(h, query_pos)
    attended, _ = params.self_attn(h_pos, h_pos, h)
    Q1 = Q_prev + attended

    h = params.norm_cross(Q1)
    keys = _with_position(F, memory.mem_pos)
    attended, weights = params.cross_attn(
        _with_position(h, query_pos), keys, F, zero_values=params._zero_cross_values
    )
    Q2 = Q1 + attended

    Q3 = Q2 + params.ffn(params.norm_ffn(Q2))
    if unbatched:
        Q3 = tn.reshape(Q3, Q3.shape[1:])
    return Q3, weights.data.copy()


class TransformerDecoder(Module):
    def __init__(self, cfg, rng, zero_cross_values=False):
        self._cfg = cfg
        self.layers = [
            DecoderLayer(cfg.d_model, cfg.heads, cfg.ffn_width, rng, zero_cross_values)
            for _ in range(cfg.layers)
        ]
        self.final_norm = LayerNorm(cfg.d_model)

    def forward(self, Q_0, memory, query_pos=None):
        return decode(Q_0, memory, self.layers, query_pos)


def decode(Q_0, memory, layers, query_pos=None):
    """Run the decoder layers, keeping every intermediate state and attention map."""
    trace = DecoderTrace(states=[Q_0])
    Q = Q_0
    for layer in layers:
        Q, weights = decoder_layer(Q, memory, query_pos, layer)
        trace.states.append(Q)
        trace.attentions.append(weights)
    return trace


def activate(logits, task_mode):
    if task_mode == TaskMode.SINGLE_LABEL:
        return tn.softmax(logits, axis=-1)
    return tn.sigmoid(logits)


def classify(Q_L, head, task_mode):
    """Class probabilities: softmax over classes (single-label) or per-class sigmoid."""
    return activate(head.logits(Q_L), task_mode)


def loss(logits, y, task_mode):
    """
    Mean cross-entropy computed from logits. Single-label: ``-log softmax`` at the
    true class, averaged over samples. Multi-label: binary cross-entropy averaged
    over samples and classes, in the stable ``softplus(x) - x·y`` form.
    """
    y = np.asarray(getattr(y, 'data', y), dtype=np.float64)
    if y.shape != logits.shape or logits.ndim != 2:
        raise ShapeError('loss', logits.shape, y.shape)
    if not np.all((y == 0) | (y == 1)):
        raise ContractViolation('targets must be multi-hot 0/1 vectors')
    target = Tensor(y)
    if task_mode == TaskMode.SINGLE_LABEL:
        if not np.all(y.sum(axis=1) == 1):
            raise ContractViolation('single-label loss needs exactly one positive per row')
        picked = tn.sum(tn.log_softmax(logits, axis=-1) * target, axis=-1)
        return tn.scale(tn.mean(picked), -1.0)
    return tn.mean(tn.softplus(logits) - logits * target)

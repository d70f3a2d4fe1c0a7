"""
Multi-modal query encoder: text-initialised label embeddings ``Q_l``, a per-video
embedding ``Q_v`` pooled from per-frame features, and their fusion
``Q_0 = W_que [Q_l, Q_v]``.
"""
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as tn
from .choices import TextEmbedderMode
from .encoder import patchify
from .exceptions import ConfigurationError, ShapeError
from .layers import Module, TransformerBlock, normal, xavier
from .tensor import Tensor

logger = logging.getLogger(__name__)

TOKEN_SEPARATOR = '+'


@dataclass
class LabelQuerySet:
    Q_l: Tensor
    class_names: tuple

    def __post_init__(self):
        if not self.class_names or self.Q_l.shape[0] != len(self.class_names):
            raise ConfigurationError('label queries need one row per class name')


@dataclass
class VideoEmbedding:
    Q_v: Tensor


@dataclass(frozen=True)
class TextEmbedder:
    """Deterministic stand-in for a pretrained text tower."""
    mode: str = TextEmbedderMode.COMPOSITIONAL
    dimension: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.mode not in TextEmbedderMode.values:
            raise ConfigurationError(f'unknown text embedder mode {self.mode!r}')
        if self.dimension < 1:
            raise ConfigurationError('text embedding dimension must be positive')

    def token_vector(self, token):
        """Seeded pseudo-random unit vector for one token."""
        digest = hashlib.blake2b(f'{self.seed}\x1f{token}'.encode('utf-8'), digest_size=8).digest()
        v = np.random.default_rng(int.from_bytes(digest, 'little')).standard_normal(self.dimension)
        return v / np.linalg.norm(v)

    def embed(self, name):
        if self.mode == TextEmbedderMode.HASHED:
            return self.token_vector(name)
        tokens = [token.strip() for token in name.split(TOKEN_SEPARATOR) if token.strip()]
        if not tokens:
            raise ConfigurationError(f'class name {name!r} has no tokens to embed')
        total = np.sum([self.token_vector(token) for token in tokens], axis=0)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            raise ConfigurationError(f'the tokens of {name!r} cancel out')
        return total / norm


def text_embed(names, embedder):
    """One unit-norm D-vector per class name, as a K×D constant tensor."""
    names = list(names)
    if not names:
        raise ConfigurationError('text_embed needs at least one class name')
    if len(set(names)) != len(names):
        duplicates = sorted({n for n in names if names.count(n) > 1})
        raise ConfigurationError(f'duplicate class names: {", ".join(duplicates)}')
    return Tensor(np.stack([embedder.embed(name) for name in names]))


def read_vocabulary(path):
    """One class name per line; blank lines and ``#`` comments are ignored."""
    names = []
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        line = line.strip()
        if line and not line.startswith('#'):
            names.append(line)
    if len(set(names)) != len(names):
        raise ConfigurationError(f'vocabulary file {path} repeats a class name')
    if not names:
        raise ConfigurationError(f'vocabulary file {path} is empty')
    return names


def write_vocabulary(names, path):
    Path(path).write_text(''.join(f'{name}\n' for name in names), encoding='utf-8')


class FrameEmbedder(Module):
    """
    Small per-frame image encoder: linear patch projection, one Transformer
    block, mean pool over patches. Frames never see each other.
    """

    def __init__(self, encoder_cfg, dimension, heads, rng, frozen=False):
        self._cfg = encoder_cfg
        self.W_patch = xavier(rng, dimension, encoder_cfg.patch_dim)
        self.pos = normal(rng, (encoder_cfg.num_patches, dimension), 0.02)
        self.block = TransformerBlock(dimension, heads, 4 * dimension, rng)
        if frozen:
            self.freeze()

    def forward(self, videos):
        """(B, T, 3, H, W) pixels -> (B, T, D″) frame features."""
        patches = patchify(videos, self._cfg)
        b, frames, n, f = patches.shape
        x = tn.matmul(tn.reshape(patches, (b * frames, n, f)), tn.transpose(self.W_patch)) + self.pos
        x, _ = self.block(x)
        return tn.reshape(tn.mean(x, axis=1), (b, frames, self.W_patch.shape[0]))


def frame_embed(video, embedder):
    """Per-frame features of a single (T, 3, H, W) video as a T×D″ tensor."""
    video = np.asarray(getattr(video, 'data', video))
    feats = embedder(video[None])
    return tn.reshape(feats, feats.shape[1:])


def video_embed(frame_feats):
    """``Q_v`` = mean of the frame features over the frame axis."""
    if frame_feats.ndim < 2 or frame_feats.shape[-2] < 1:
        raise ShapeError('video_embed', frame_feats.shape)
    return VideoEmbedding(Q_v=tn.mean(frame_feats, axis=-2))


def fuse(Q_l, Q_v, W_que):
    """
    ``Q_0[k] = W_que · concat(Q_l[k], Q_v)``; the video embedding is appended to
    every class row. A batched ``Q_v`` of shape (B, D″) yields (B, K, D).
    """
    q_v = Q_v.Q_v if isinstance(Q_v, VideoEmbedding) else Q_v
    k, d = Q_l.shape
    d2 = q_v.shape[-1]
    if W_que.shape != (d, d + d2):
        raise ShapeError('fuse', Q_l.shape, q_v.shape, W_que.shape)
    lead = q_v.shape[:-1]
    rows_v = tn.broadcast_to(tn.reshape(q_v, lead + (1, d2)), lead + (k, d2))
    rows_l = tn.broadcast_to(Q_l, lead + (k, d)) if lead else Q_l
    return tn.matmul(tn.concat([rows_l, rows_v], axis=-1), tn.transpose(W_que))


def unimodal_queries(Q_l):
    """The learnable-query-only path: ``Q_l`` unchanged, no video cue."""
    return Q_l

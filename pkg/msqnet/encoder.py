"""
Spatio-temporal video encoder.

Frames are cut into P×P patches, embedded with a learnable spatio-temporal
position table behind a global token, passed through ``layers`` pre-norm
Transformer layers (joint or divided space-time attention), and reduced to the
decoder memory ``[global token, v_1, ..., v_T]`` by per-frame average pooling
followed by the ``W_out`` projection.
"""
import logging
from dataclasses import dataclass

import numpy as np
from einops import rearrange

from . import tensor as tn
from .choices import AttentionMode
from .exceptions import ConfigurationError, ShapeError
from .layers import FeedForward, LayerNorm, Module, MultiHeadAttention, TransformerBlock, normal, xavier
from .tensor import Tensor

logger = logging.getLogger(__name__)

POSITION_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    """
    Geometry and width of the video encoder.

    ``frames`` is T, ``height``/``width`` are H and W in pixels, ``patch_size``
    is P, ``d_model`` is the encoder width D′, ``layers`` is L_v and ``d_out``
    is the memory width D.
    """
    frames: int = 8
    height: int = 16
    width: int = 16
    patch_size: int = 4
    d_model: int = 32
    layers: int = 2
    heads: int = 2
    attention_mode: str = AttentionMode.DIVIDED
    d_out: int = 32
    ffn_ratio: int = 4

    def __post_init__(self):
        if self.frames < 1 or self.layers < 1:
            raise ConfigurationError('encoder needs at least one frame and one layer')
        if self.patch_size < 1 or self.height % self.patch_size or self.width % self.patch_size:
            raise ConfigurationError(
                f'{self.height}x{self.width} frames cannot be cut into {self.patch_size}x{self.patch_size} patches'
            )
        if self.heads < 1 or self.d_model % self.heads:
            raise ConfigurationError(f'd_model {self.d_model} is not divisible by {self.heads} heads')
        if self.attention_mode not in AttentionMode.values:
            raise ConfigurationError(f'unknown attention mode {self.attention_mode!r}')

    @property
    def num_patches(self):
        """N = HW / P²."""
        return (self.height * self.width) // (self.patch_size ** 2)

    @property
    def patch_dim(self):
        return 3 * self.patch_size ** 2

    @property
    def num_tokens(self):
        return self.frames * self.num_patches + 1

    @property
    def grid(self):
        return self.height // self.patch_size, self.width // self.patch_size


@dataclass
class EncodedVideo:
    """Decoder memory ``F``: row 0 is the projected global token, rows 1..T the frames."""
    memory: Tensor
    mem_pos: Tensor = None


def patchify(video, cfg):
    """Cut (..., T, 3, H, W) pixels into (..., T, N, 3P²) row-major patch vectors."""
    video = np.asarray(getattr(video, 'data', video), dtype=np.float64)
    expected = (cfg.frames, 3, cfg.height, cfg.width)
    if video.shape[-4:] != expected:
        raise ShapeError('patchify', video.shape, expected)
    patches = rearrange(
        video, '... t c (h p1) (w p2) -> ... t (h w) (c p1 p2)', p1=cfg.patch_size, p2=cfg.patch_size
    )
    return Tensor(patches)


def embed_patches(patches, W_emb, e_pos, global_token):
    """
    ``z_(p,t) = W_emb x_(p,t) + e_pos_(p,t)`` in t-major, p-minor order behind
    the global token, which takes position row 0.
    """
    *lead, frames, n, f = patches.shape
    d = W_emb.shape[0]
    if W_emb.shape != (d, f) or e_pos.shape != (frames * n + 1, d) or global_token.shape != (d,):
        raise ShapeError('embed_patches', patches.shape, W_emb.shape, e_pos.shape, global_token.shape)
    lead = tuple(lead)
    x = tn.reshape(patches, lead + (frames * n, f))
    x = tn.matmul(x, tn.transpose(W_emb))
    g = tn.broadcast_to(tn.reshape(global_token, (1, d)), lead + (1, d))
    return tn.concat([g, x], axis=-2) + e_pos


class DividedBlock(Module):
    """
    Pre-norm layer with temporal attention (tokens sharing a patch index attend
    across frames), then spatial attention (tokens sharing a frame attend across
    patches), then one FFN. The global token is prepended to every group and
    its outputs are averaged over the groups.
    """

    def __init__(self, d, heads, hidden, frames, patches, rng):
        self._frames = frames
        self._patches = patches
        self.norm_time = LayerNorm(d)
        self.time_attn = MultiHeadAttention(d, heads, rng)
        self.norm_space = LayerNorm(d)
        self.space_attn = MultiHeadAttention(d, heads, rng)
        self.norm_ffn = LayerNorm(d)
        self.ffn = FeedForward(d, hidden, rng)

    def _grouped(self, attn, x, temporal):
        b, _, d = x.shape
        frames, n = self._frames, self._patches
        groups, length = (n, frames) if temporal else (frames, n)
        z = tn.reshape(x[:, 1:, :], (b, frames, n, d))
        if temporal:
            z = tn.transpose(z, (0, 2, 1, 3))
        z = tn.reshape(z, (b * groups, length, d))
        g = tn.broadcast_to(tn.reshape(x[:, :1, :], (b, 1, 1, d)), (b, groups, 1, d))
        seq = tn.concat([tn.reshape(g, (b * groups, 1, d)), z], axis=1)
        out, weights = attn(seq, seq, seq)
        g_out = tn.mean(tn.reshape(out[:, :1, :], (b, groups, d)), axis=1, keepdims=True)
        z_out = tn.reshape(out[:, 1:, :], (b, groups, length, d))
        if temporal:
            z_out = tn.transpose(z_out, (0, 2, 1, 3))
        z_out = tn.reshape(z_out, (b, frames * n, d))
        weights = tn.reshape(weights, (b, groups) + weights.shape[1:])
        return tn.concat([g_out, z_out], axis=1), weights

    def forward(self, x):
        attended, time_weights = self._grouped(self.time_attn, self.norm_time(x), temporal=True)
        x = x + attended
        attended, space_weights = self._grouped(self.space_attn, self.norm_space(x), temporal=False)
        x = x + attended
        return x + self.ffn(self.norm_ffn(x)), {'time': time_weights, 'space': space_weights}


def build_layers(cfg, rng):
    hidden = cfg.ffn_ratio * cfg.d_model
    if cfg.attention_mode == AttentionMode.JOINT:
        return [TransformerBlock(cfg.d_model, cfg.heads, hidden, rng) for _ in range(cfg.layers)]
    return [
        DividedBlock(cfg.d_model, cfg.heads, hidden, cfg.frames, cfg.num_patches, rng)
        for _ in range(cfg.layers)
    ]


def encode(tokens, cfg, layers, keep_attention=False):
    """
    Apply the encoder layers to (S, D′) or (B, S, D′) tokens.

    Returns the encoded tokens and, with ``keep_attention``, one head-weight
    record per layer as numpy arrays: (B, heads, S, S) in joint mode, a dict of
    ``time`` (B, N, heads, T+1, T+1) and ``space`` (B, T, heads, N+1, N+1) in
    divided mode.
    """
    if tokens.shape[-2:] != (cfg.num_tokens, cfg.d_model):
        raise ShapeError('encode', tokens.shape, (cfg.num_tokens, cfg.d_model))
    unbatched = tokens.ndim == 2
    x = tn.reshape(tokens, (1,) + tokens.shape) if unbatched else tokens
    attentions = []
    for layer in layers:
        x, weights = layer(x)
        if keep_attention:
            if isinstance(weights, dict):
                attentions.append({key: w.data.copy() for key, w in weights.items()})
            else:
                attentions.append(weights.data.copy())
    if unbatched:
        x = tn.reshape(x, tokens.shape)
    return x, attentions


def pool_project(encoded, W_out, cfg, mem_pos=None):
    """``v_t = W_out · mean_p z_(p,t)``; the global token is projected by the same ``W_out``."""
    *lead, s, d = encoded.shape
    if s != cfg.num_tokens or W_out.shape != (cfg.d_out, d):
        raise ShapeError('pool_project', encoded.shape, W_out.shape)
    lead = tuple(lead)
    patches = tn.reshape(encoded[..., 1:, :], lead + (cfg.frames, cfg.num_patches, d))
    frames = tn.mean(patches, axis=-2)
    rows = tn.concat([encoded[..., :1, :], frames], axis=-2)
    return EncodedVideo(memory=tn.matmul(rows, tn.transpose(W_out)), mem_pos=mem_pos)


class VideoEncoder(Module):
    def __init__(self, cfg, rng):
        self._cfg = cfg
        self.W_emb = xavier(rng, cfg.d_model, cfg.patch_dim)
        self.e_pos = normal(rng, (cfg.num_tokens, cfg.d_model), POSITION_STD)
        self.global_token = normal(rng, (cfg.d_model,), POSITION_STD)
        self.layers = build_layers(cfg, rng)
        self.W_out = xavier(rng, cfg.d_out, cfg.d_model)
        self.mem_pos = normal(rng, (cfg.frames + 1, cfg.d_out), POSITION_STD)
        logger.debug('video encoder: N=%d patches, %d tokens, %s attention',
                     cfg.num_patches, cfg.num_tokens, cfg.attention_mode)

    @property
    def config(self):
        return self._cfg

    def forward(self, videos, keep_attention=False):
        tokens = embed_patches(patchify(videos, self._cfg), self.W_emb, self.e_pos, self.global_token)
        encoded, attentions = encode(tokens, self._cfg, self.layers, keep_attention)
        return pool_project(encoded, self.W_out, self._cfg, self.mem_pos), attentions

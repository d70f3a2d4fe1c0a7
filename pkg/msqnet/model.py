"""MSQNet: video encoder, multi-modal query encoder, decoder and classification head."""
import hashlib
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as tn
from .choices import AttentionMode, HeadMode, TaskMode, TextEmbedderMode
from .decoder import ClassificationHead, DecoderConfig, TransformerDecoder, activate
from .encoder import EncoderConfig, VideoEncoder
from .exceptions import ConfigurationError
from .layers import Module, normal, xavier
from .query import (
    FrameEmbedder,
    LabelQuerySet,
    TextEmbedder,
    VideoEmbedding,
    fuse,
    text_embed,
    unimodal_queries,
    video_embed,
)
from .tensor import Tensor

logger = logging.getLogger(__name__)

# Independent random streams so that toggling one component leaves the others' initial weights untouched.
_STREAMS = {'encoder': 1, 'queries': 2, 'decoder': 3, 'head': 4, 'frame_embedder': 5, 'fusion': 6}


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 8
    height: int = 16
    width: int = 16
    patch_size: int = 4
    d_model: int = 32
    encoder_layers: int = 2
    encoder_heads: int = 2
    attention_mode: str = AttentionMode.DIVIDED
    d_out: int = 32
    frame_dim: int = None
    frame_heads: int = 1
    decoder_layers: int = 2
    decoder_heads: int = 2
    ffn_width: int = 128
    task_mode: str = TaskMode.MULTI_LABEL
    text_mode: str = TextEmbedderMode.COMPOSITIONAL
    text_seed: int = 0
    text_init_enabled: bool = True
    mmq_enabled: bool = True
    freeze_frame_embedder: bool = False
    head_mode: str = HeadMode.PER_CLASS
    zero_cross_values: bool = False
    init_seed: int = 0

    def __post_init__(self):
        if self.frame_dim is None:
            object.__setattr__(self, 'frame_dim', max(1, self.d_out // 2))
        if self.head_mode not in HeadMode.values:
            raise ConfigurationError(f'unknown head mode {self.head_mode!r}')
        if self.frame_heads < 1 or self.frame_dim % self.frame_heads:
            raise ConfigurationError(f'frame_dim {self.frame_dim} is not divisible by {self.frame_heads} heads')
        # geometry and width invariants are enforced by the component configs
        self.encoder
        self.decoder
        self.text_embedder

    @property
    def encoder(self):
        return EncoderConfig(
            frames=self.frames, height=self.height, width=self.width, patch_size=self.patch_size,
            d_model=self.d_model, layers=self.encoder_layers, heads=self.encoder_heads,
            attention_mode=self.attention_mode, d_out=self.d_out,
        )

    @property
    def decoder(self):
        return DecoderConfig(
            layers=self.decoder_layers, heads=self.decoder_heads, d_model=self.d_out,
            ffn_width=self.ffn_width, task_mode=self.task_mode,
        )

    @property
    def text_embedder(self):
        return TextEmbedder(mode=self.text_mode, dimension=self.d_out, seed=self.text_seed)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class ModelOutput:
    logits: Tensor
    probs: Tensor
    trace: object
    encoded: object
    video_embedding: object
    queries: Tensor
    encoder_attentions: list


def _stream(seed, name):
    return np.random.default_rng([seed, _STREAMS[name]])


def _random_queries(names, dimension, seed):
    """Seeded per-name Gaussian rows for label queries without text initialisation."""
    rows = []
    for name in names:
        digest = hashlib.blake2b(f'random-query\x1f{seed}\x1f{name}'.encode('utf-8'), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, 'little'))
        rows.append(rng.normal(0.0, 1.0 / np.sqrt(dimension), dimension))
    return np.stack(rows)


class MSQNet(Module):
    # named first in a shape-mismatch error
    checkpoint_priority = ('W_que', 'Q_l')

    def __init__(self, cfg, class_names):
        class_names = tuple(class_names)
        if not class_names:
            raise ConfigurationError('MSQNet needs a non-empty class vocabulary')
        self._cfg = cfg
        self._class_names = class_names
        seed = cfg.init_seed
        d = cfg.d_out

        self.encoder = VideoEncoder(cfg.encoder, _stream(seed, 'encoder'))
        if cfg.text_init_enabled:
            initial = text_embed(class_names, cfg.text_embedder).data
        else:
            initial = _random_queries(class_names, d, seed)
        self.Q_l = Tensor(initial, requires_grad=True)
        queries_rng = _stream(seed, 'queries')
        self.query_pos = (
            normal(queries_rng, (len(class_names), d), 0.02) if cfg.head_mode == HeadMode.PER_CLASS else None
        )
        self.decoder = TransformerDecoder(cfg.decoder, _stream(seed, 'decoder'), cfg.zero_cross_values)
        self.head = ClassificationHead(
            len(class_names), d, _stream(seed, 'head'), shared=cfg.head_mode == HeadMode.SHARED
        )
        if cfg.mmq_enabled:
            self.frame_embedder = FrameEmbedder(
                cfg.encoder, cfg.frame_dim, cfg.frame_heads, _stream(seed, 'frame_embedder'),
                frozen=cfg.freeze_frame_embedder,
            )
            self.W_que = xavier(_stream(seed, 'fusion'), d, d + cfg.frame_dim)
        logger.debug('MSQNet: %d classes, %d trainable tensors', len(class_names), len(self.parameters()))

    @property
    def config(self):
        return self._cfg

    @property
    def class_names(self):
        return self._class_names

    @property
    def label_query_set(self):
        return LabelQuerySet(Q_l=self.Q_l, class_names=self._class_names)

    def label_queries(self, class_names=None):
        """
        ``Q_l`` rows for ``class_names``. Trained rows are reused for known names;
        unknown names get text embeddings, or seeded random rows when text
        initialisation is disabled.
        """
        if class_names is None or tuple(class_names) == self._class_names:
            return self.Q_l
        if not self.head.shared:
            raise ConfigurationError('scoring classes outside the training vocabulary needs head_mode="shared"')
        class_names = list(class_names)
        known = {name: i for i, name in enumerate(self._class_names)}
        unknown = [name for name in class_names if name not in known]
        if unknown:
            if self._cfg.text_init_enabled:
                fresh = dict(zip(unknown, text_embed(unknown, self._cfg.text_embedder).data))
            else:
                fresh = dict(zip(unknown, _random_queries(unknown, self._cfg.d_out, self._cfg.init_seed)))
        rows = [
            self.Q_l[known[name]:known[name] + 1] if name in known else Tensor(fresh[name][None])
            for name in class_names
        ]
        return tn.concat(rows, axis=0)

    def forward(self, videos, class_names=None, keep_attention=False):
        videos = np.asarray(videos, dtype=np.float64)
        if videos.ndim == 4:
            videos = videos[None]
        b = videos.shape[0]
        encoded, encoder_attentions = self.encoder(videos, keep_attention)
        Q_l = self.label_queries(class_names)
        k, d = Q_l.shape
        embedding = None
        if self._cfg.mmq_enabled and self._cfg.zero_cross_values:
            # label-marginal baseline: the video reaches neither the memory values nor Q_v
            embedding = VideoEmbedding(Q_v=Tensor(np.zeros((b, self._cfg.frame_dim))))
            Q_0 = fuse(Q_l, embedding, self.W_que)
        elif self._cfg.mmq_enabled:
            embedding = video_embed(self.frame_embedder(videos))
            Q_0 = fuse(Q_l, embedding, self.W_que)
        else:
            Q_0 = tn.broadcast_to(unimodal_queries(Q_l), (b, k, d))
        query_pos = self.query_pos if class_names is None or tuple(class_names) == self._class_names else None
        trace = self.decoder(Q_0, encoded, query_pos)
        Q_L = self.decoder.final_norm(trace.final)
        logits = self.head.logits(Q_L)
        return ModelOutput(
            logits=logits,
            probs=activate(logits, self._cfg.task_mode),
            trace=trace,
            encoded=encoded,
            video_embedding=embedding,
            queries=Q_L,
            encoder_attentions=encoder_attentions,
        )

    def parameter_groups(self):
        """Parameter names grouped by model component."""
        prefixes = {
            'W_emb': 'encoder.W_emb',
            'e_pos': 'encoder.e_pos',
            'global_token': 'encoder.global_token',
            'encoder_layers': 'encoder.layers.',
            'W_out': 'encoder.W_out',
            'mem_pos': 'encoder.mem_pos',
            'Q_l': 'Q_l',
            'query_pos': 'query_pos',
            'decoder_layers': 'decoder.',
            'head': 'head.',
            'frame_embedder': 'frame_embedder.',
            'W_que': 'W_que',
        }
        groups = {}
        names = [name for name, _ in self.named_parameters()]
        for group, prefix in prefixes.items():
            members = [n for n in names if n == prefix or (prefix.endswith('.') and n.startswith(prefix))]
            if members:
                groups[group] = members
        return groups

    def checksum(self):
        digest = hashlib.sha256()
        for name, data in sorted(self.state_dict().items()):
            digest.update(name.encode('utf-8'))
            digest.update(np.ascontiguousarray(data, dtype='<f8').tobytes())
        return digest.hexdigest()

"""
Synthetic multi-label "moving pattern" videos and the supervised / zero-shot
split protocols.

Every class is a temporal pattern: a single frame never determines the label.
A video is a noisy background plus the additive rendering of one to three
classes, clamped to [0, 1]. Everything is a pure function of the seeds.
"""
import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .choices import SplitMode
from .exceptions import ConfigurationError
from .query import TOKEN_SEPARATOR, read_vocabulary, write_vocabulary

logger = logging.getLogger(__name__)

MANIFEST_HEADER = '# msqnet-manifest v1'
EVAL_SEED_OFFSET = 1_000_000
SEED_BLOCK = 2_000_000
ZERO_SHOT_FRACTIONS = (0.5, 0.75)

_BACKGROUND_STREAM = 0
_LABEL_STREAM = 1


@dataclass(frozen=True)
class DataConfig:
    frames: int = 8
    height: int = 16
    width: int = 16
    noise_std: float = 0.05
    amplitude: float = 0.8
    background: float = 0.2
    label_size_weights: tuple = (1.0, 1.0, 1.0)
    oscillation_period: int = 8
    sprite_size: int = 4

    def __post_init__(self):
        object.__setattr__(self, 'label_size_weights', tuple(float(w) for w in self.label_size_weights))
        if self.frames < 1 or self.height < 4 or self.width < 4:
            raise ConfigurationError('videos need at least one frame of at least 4x4 pixels')
        if self.noise_std < 0 or self.amplitude < 0:
            raise ConfigurationError('noise_std and amplitude must be non-negative')
        if not 0.0 <= self.background <= 1.0:
            raise ConfigurationError('background must lie in [0, 1]')
        weights = self.label_size_weights
        if len(weights) != 3 or min(weights) < 0 or sum(weights) <= 0:
            raise ConfigurationError('label_size_weights needs three non-negative weights for sizes 1, 2, 3')
        if self.oscillation_period < 2:
            raise ConfigurationError('oscillation_period must be at least 2')
        if not 1 <= self.sprite_size <= min(self.height, self.width) // 2:
            raise ConfigurationError(f'sprite_size {self.sprite_size} does not fit a {self.height}x{self.width} frame')

    @property
    def shape(self):
        return self.frames, 3, self.height, self.width


def _name_key(name):
    return int.from_bytes(hashlib.blake2b(name.encode('utf-8'), digest_size=4).digest(), 'little')


def _progress(t, cfg):
    return t / (cfg.frames - 1) if cfg.frames > 1 else 0.5


def _square(cfg, top, left, size):
    mask = np.zeros((cfg.height, cfg.width))
    rows = (int(top) + np.arange(size)) % cfg.height
    cols = (int(left) + np.arange(size)) % cfg.width
    mask[np.ix_(rows, cols)] = 1.0
    return mask


@dataclass(frozen=True)
class ActionPrimitive:
    """
    A named temporal pattern. ``render(seed, t, cfg)`` is pure: the sprite's
    start state is drawn from a generator keyed by ``(seed, name)``.
    """
    name: str
    kind: str
    params: tuple = ()

    @property
    def is_colour(self):
        return self.kind == 'colour'

    def _mask(self, rng, t, cfg):
        s = cfg.sprite_size
        top, left = rng.integers(0, cfg.height), rng.integers(0, cfg.width)
        if self.kind == 'translate':
            dy, dx = self.params
            return _square(cfg, top + dy * t, left + dx * t, s)
        if self.kind == 'scale':
            (growing,) = self.params
            frac = _progress(t, cfg)
            size = 1 + round((2 * s - 1) * (frac if growing else 1.0 - frac))
            return _square(cfg, top - size // 2, left - size // 2, size)
        if self.kind == 'blink':
            return _square(cfg, top, left, s) if t % 2 == 0 else np.zeros((cfg.height, cfg.width))
        if self.kind == 'rotate':
            half_h, half_w = cfg.height // 2, cfg.width // 2
            quadrant = (int(rng.integers(0, 4)) + t) % 4
            offset_y, offset_x = rng.integers(0, half_h - s + 1), rng.integers(0, half_w - s + 1)
            qy, qx = ((0, 0), (0, 1), (1, 1), (1, 0))[quadrant]
            return _square(cfg, qy * half_h + offset_y, qx * half_w + offset_x, s)
        if self.kind == 'oscillate':
            swing = cfg.width // 4
            shift = round(swing * math.sin(2.0 * math.pi * t / cfg.oscillation_period))
            return _square(cfg, top, left + shift, s)
        # colour primitives: a static sprite
        return _square(cfg, top, left, s)

    def render(self, seed, t, cfg, channel=None):
        """Additive (3, H, W) pattern of frame ``t``; ``channel`` restricts the sprite to one colour plane."""
        rng = np.random.default_rng([seed, _name_key(self.name)])
        mask = self._mask(rng, t, cfg) * cfg.amplitude
        pattern = np.zeros((3, cfg.height, cfg.width))
        if self.is_colour:
            # white at t=0; the other channels fade until only the target is left
            (target,) = self.params
            fade = 1.0 - _progress(t, cfg) if cfg.frames > 1 else 1.0
            for c in range(3):
                pattern[c] = mask * (1.0 if c == target else fade)
        elif channel is None:
            pattern[:] = mask
        else:
            pattern[channel] = mask
        return pattern


PRIMITIVES = (
    ActionPrimitive('translate-left', 'translate', (0, -1)),
    ActionPrimitive('translate-right', 'translate', (0, 1)),
    ActionPrimitive('translate-up', 'translate', (-1, 0)),
    ActionPrimitive('translate-down', 'translate', (1, 0)),
    ActionPrimitive('grow', 'scale', (True,)),
    ActionPrimitive('shrink', 'scale', (False,)),
    ActionPrimitive('blink', 'blink'),
    ActionPrimitive('rotate-quadrant', 'rotate'),
    ActionPrimitive('color-shift-r', 'colour', (0,)),
    ActionPrimitive('color-shift-g', 'colour', (1,)),
    ActionPrimitive('color-shift-b', 'colour', (2,)),
    ActionPrimitive('oscillate', 'oscillate'),
)
PRIMITIVES_BY_NAME = {p.name: p for p in PRIMITIVES}
MOTIONS = tuple(p for p in PRIMITIVES if not p.is_colour)
COLOURS = tuple(p for p in PRIMITIVES if p.is_colour)


def parse_class(name):
    """``(motion_or_colour primitive, channel or None)`` for a class name, or a configuration error."""
    tokens = [token.strip() for token in name.split(TOKEN_SEPARATOR)]
    try:
        primitives = [PRIMITIVES_BY_NAME[token] for token in tokens]
    except KeyError as exc:
        raise ConfigurationError(f'unknown class {name!r}: no primitive named {exc.args[0]!r}') from None
    if len(primitives) == 1:
        return primitives[0], None
    if len(primitives) == 2 and not primitives[0].is_colour and primitives[1].is_colour:
        return primitives[0], primitives[1].params[0]
    raise ConfigurationError(f'unknown class {name!r}: compositions are "<motion>+<color-shift-c>"')


def primitive_vocabulary(k):
    if not 1 <= k <= len(PRIMITIVES):
        raise ConfigurationError(f'primitive vocabularies hold 1..{len(PRIMITIVES)} classes, got {k}')
    return [p.name for p in PRIMITIVES[:k]]


def compositional_vocabulary(k):
    names = [f'{m.name}{TOKEN_SEPARATOR}{c.name}' for m, c in itertools.product(MOTIONS, COLOURS)]
    if not 1 <= k <= len(names):
        raise ConfigurationError(f'compositional vocabularies hold 1..{len(names)} classes, got {k}')
    return names[:k]


@dataclass
class SyntheticVideo:
    pixels: np.ndarray
    labels: np.ndarray
    seed: int

    def __post_init__(self):
        positives = int(self.labels.sum())
        if not 1 <= positives <= 3:
            raise ConfigurationError(f'a video carries 1 to 3 labels, got {positives}')

    @property
    def label_indices(self):
        return tuple(int(i) for i in np.flatnonzero(self.labels))


def render_background(seed, cfg):
    rng = np.random.default_rng([seed, _BACKGROUND_STREAM])
    return cfg.background + cfg.noise_std * rng.standard_normal(cfg.shape)


def generate_video(label_set, seed, cfg, vocabulary):
    """Render the classes in ``label_set`` (names from ``vocabulary``) onto a noisy background."""
    vocabulary = list(vocabulary)
    label_set = list(label_set)
    if not 1 <= len(label_set) <= 3 or len(set(label_set)) != len(label_set):
        raise ConfigurationError(f'a video needs 1 to 3 distinct labels, got {label_set}')
    labels = np.zeros(len(vocabulary))
    pixels = render_background(seed, cfg)
    for name in label_set:
        if name not in vocabulary:
            raise ConfigurationError(f'unknown class {name!r}')
        labels[vocabulary.index(name)] = 1.0
        primitive, channel = parse_class(name)
        for t in range(cfg.frames):
            pixels[t] += primitive.render(seed, t, cfg, channel)
    return SyntheticVideo(pixels=np.clip(pixels, 0.0, 1.0), labels=labels, seed=int(seed))


def sample_label_set(seed, vocabulary, cfg):
    """Seeded label set: size from ``label_size_weights`` (capped at the vocabulary), classes uniform."""
    rng = np.random.default_rng([seed, _LABEL_STREAM])
    weights = np.array(cfg.label_size_weights[:len(vocabulary)])
    size = 1 + int(rng.choice(len(weights), p=weights / weights.sum()))
    picks = rng.choice(len(vocabulary), size=size, replace=False)
    return [vocabulary[i] for i in sorted(picks)]


@dataclass(frozen=True)
class SplitSpec:
    mode: str
    seen_fraction: float
    split_seed: int
    seen_classes: frozenset
    unseen_classes: frozenset
    num_classes: int

    def __post_init__(self):
        everything = frozenset(range(self.num_classes))
        if self.seen_classes & self.unseen_classes:
            raise ConfigurationError('seen and unseen classes overlap')
        if self.seen_classes | self.unseen_classes != everything:
            raise ConfigurationError('seen and unseen classes must cover the vocabulary')
        if len(self.seen_classes) != round(self.seen_fraction * self.num_classes):
            raise ConfigurationError('seen class count does not match seen_fraction')

    @classmethod
    def supervised(cls, num_classes, split_seed=0):
        return cls(SplitMode.SUPERVISED, 1.0, split_seed, frozenset(range(num_classes)), frozenset(), num_classes)

    @property
    def seen(self):
        return sorted(self.seen_classes)

    @property
    def unseen(self):
        return sorted(self.unseen_classes)


def make_zero_shot_splits(num_classes, seen_fraction, n_splits=10, master_seed=0):
    """``n_splits`` distinct seeded seen/unseen partitions of ``range(num_classes)``."""
    if seen_fraction not in ZERO_SHOT_FRACTIONS:
        raise ConfigurationError(f'seen_fraction must be one of {ZERO_SHOT_FRACTIONS}, got {seen_fraction}')
    n_seen = round(seen_fraction * num_classes)
    if n_seen in (0, num_classes):
        raise ConfigurationError(f'degenerate split: {seen_fraction} of {num_classes} classes leaves a side empty')
    if num_classes < 4:
        raise ConfigurationError('zero-shot splits need at least 4 classes')
    if n_splits < 1:
        raise ConfigurationError('n_splits must be at least 1')
    if math.comb(num_classes, n_seen) < n_splits:
        raise ConfigurationError(f'only {math.comb(num_classes, n_seen)} distinct partitions exist')

    master = np.random.default_rng(master_seed)
    splits, partitions = [], set()
    while len(splits) < n_splits:
        split_seed = int(master.integers(0, 2**31 - 1))
        order = np.random.default_rng(split_seed).permutation(num_classes)
        seen = frozenset(int(i) for i in order[:n_seen])
        if seen in partitions:
            continue
        partitions.add(seen)
        splits.append(SplitSpec(
            SplitMode.ZERO_SHOT, seen_fraction, split_seed, seen, frozenset(range(num_classes)) - seen, num_classes
        ))
    return splits


@dataclass
class VideoDataset:
    class_names: tuple
    videos: list = field(default_factory=list)

    def __len__(self):
        return len(self.videos)

    def __iter__(self):
        return iter(self.videos)

    @property
    def pixels(self):
        return np.stack([v.pixels for v in self.videos])

    @property
    def labels(self):
        if not self.videos:
            return np.zeros((0, len(self.class_names)))
        return np.stack([v.labels for v in self.videos])

    @property
    def seeds(self):
        return [v.seed for v in self.videos]

    def batches(self, batch_size, order=None):
        """Yield ``(pixels, labels, seeds)`` minibatches in ``order`` (default: stored order)."""
        order = np.arange(len(self)) if order is None else np.asarray(order)
        for start in range(0, len(order), batch_size):
            picked = [self.videos[i] for i in order[start:start + batch_size]]
            yield (
                np.stack([v.pixels for v in picked]),
                np.stack([v.labels for v in picked]),
                [v.seed for v in picked],
            )


def _generate(vocabulary, seeds, cfg):
    videos = [generate_video(sample_label_set(seed, vocabulary, cfg), seed, cfg, vocabulary) for seed in seeds]
    return VideoDataset(class_names=tuple(vocabulary), videos=videos)


def build_dataset(split, n_train, n_eval, cfg, vocabulary, data_seed=0):
    """
    ``(train, eval)`` datasets. Supervised: both over the whole vocabulary.
    Zero-shot: train over the seen classes, eval over the unseen ones with
    labels in the unseen vocabulary. Train and eval seeds never collide.
    """
    vocabulary = list(vocabulary)
    if len(vocabulary) != split.num_classes:
        raise ConfigurationError(f'split covers {split.num_classes} classes, vocabulary has {len(vocabulary)}')
    if max(n_train, n_eval) >= EVAL_SEED_OFFSET or min(n_train, n_eval) < 0:
        raise ConfigurationError(f'dataset sizes must lie in [0, {EVAL_SEED_OFFSET})')
    for name in vocabulary:
        parse_class(name)
    if split.mode == SplitMode.ZERO_SHOT:
        train_vocab = [vocabulary[i] for i in split.seen]
        eval_vocab = [vocabulary[i] for i in split.unseen]
        if len(eval_vocab) < 2:
            raise ConfigurationError('zero-shot evaluation needs at least two unseen classes')
    else:
        train_vocab = eval_vocab = vocabulary
    base = data_seed * SEED_BLOCK
    train = _generate(train_vocab, range(base, base + n_train), cfg)
    evaluation = _generate(eval_vocab, range(base + EVAL_SEED_OFFSET, base + EVAL_SEED_OFFSET + n_eval), cfg)
    logger.info('built %s dataset: %d train videos over %d classes, %d eval videos over %d classes',
                split.mode, len(train), len(train_vocab), len(evaluation), len(eval_vocab))
    return train, evaluation


def export_dataset(dataset, directory):
    """One checkpoint file per video (single tensor ``pixels``), ``classes.txt`` and ``manifest.txt``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_vocabulary(dataset.class_names, directory / 'classes.txt')
    lines = [MANIFEST_HEADER, 'filename,seed,labels']
    for i, video in enumerate(dataset.videos):
        filename = f'video_{i:06d}.msqk'
        save_checkpoint(directory / filename, {'pixels': video.pixels})
        bits = ''.join('1' if v else '0' for v in video.labels)
        lines.append(f'{filename},{video.seed},{bits}')
    (directory / 'manifest.txt').write_text('\n'.join(lines) + '\n', encoding='utf-8')


def import_dataset(directory):
    directory = Path(directory)
    class_names = read_vocabulary(directory / 'classes.txt')
    lines = (directory / 'manifest.txt').read_text(encoding='utf-8').splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        raise ConfigurationError(f'{directory / "manifest.txt"} is not a {MANIFEST_HEADER!r} file')
    videos = []
    for line in lines[2:]:
        if not line.strip():
            continue
        filename, seed, bits = line.split(',')
        if len(bits) != len(class_names) or set(bits) - {'0', '1'}:
            raise ConfigurationError(f'bad label bits {bits!r} for {filename}')
        pixels = load_checkpoint(directory / filename)['pixels']
        labels = np.array([float(b) for b in bits])
        videos.append(SyntheticVideo(pixels=pixels, labels=labels, seed=int(seed)))
    return VideoDataset(class_names=tuple(class_names), videos=videos)

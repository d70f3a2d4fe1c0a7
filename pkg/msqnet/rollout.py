"""
Attention rollout heatmaps.

Decoder cross-attention rows share one memory axis, so layers are combined by
averaging their head-averaged rows. Encoder self-attention layers are chained
with the product of ``normalize(0.5·A + 0.5·I)``; the result spreads each
class's frame-level heat over the patches that fed that frame.
"""
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, ContractViolation

logger = logging.getLogger(__name__)

INDEX_HEADER = '# msqnet-heatmap v1'


@dataclass
class RolloutMap:
    """
    ``temporal`` is (K, T+1) heat over memory rows (global token first);
    ``spatial`` is (K, T, N) patch heat, present when encoder attentions were kept.
    """
    class_names: tuple
    temporal: np.ndarray
    grid: tuple
    spatial: np.ndarray = None

    @property
    def frames(self):
        return self.temporal.shape[1] - 1


def normalize_map(values):
    """Min-max scale to [0, 1]; a constant map becomes all ones."""
    values = np.asarray(values, dtype=np.float64)
    low, high = values.min(), values.max()
    if high - low <= 0:
        return np.ones_like(values)
    return (values - low) / (high - low)


def _residual_chain(maps):
    """``∏ normalize_rows(0.5·A + 0.5·I)`` with later layers on the left."""
    size = maps[0].shape[-1]
    result = np.eye(size)
    for attention in maps:
        mixed = 0.5 * attention + 0.5 * np.eye(size)
        mixed = mixed / mixed.sum(axis=-1, keepdims=True)
        result = mixed @ result
    return result


def encoder_rollout(encoder_attentions, sample=0):
    """
    Joint attention: one (S, S) matrix. Divided attention: (T, N+1, N+1), the
    per-frame chain of spatial maps.
    """
    if not encoder_attentions:
        raise ContractViolation('no encoder attention maps: rerun the forward pass with keep_attention=True')
    if isinstance(encoder_attentions[0], dict):
        per_layer = [layer['space'][sample].mean(axis=1) for layer in encoder_attentions]
        frames = per_layer[0].shape[0]
        return np.stack([_residual_chain([layer[t] for layer in per_layer]) for t in range(frames)])
    return _residual_chain([layer[sample].mean(axis=0) for layer in encoder_attentions])


def _spatial_heat(heat, rollout, frames, patches):
    """Spread (K, T+1) memory heat over (K, T, N) patches."""
    k = heat.shape[0]
    if rollout.ndim == 3:
        per_frame = rollout[:, 1:, 1:].mean(axis=1)
        from_global = rollout[:, 0, 1:]
        return heat[:, 1:, None] * per_frame[None] + heat[:, :1, None] * from_global[None]
    tokens = rollout[:, 1:]
    rows = tokens[1:].reshape(frames, patches, -1).mean(axis=1)
    relevance = heat[:, :1] * tokens[:1] + heat[:, 1:] @ rows
    return relevance.reshape(k, frames, patches)


def attention_rollout(trace, encoder_attentions=None, grid=None, sample=0, class_names=None):
    """
    Per-class heat for one video of a batch. ``grid`` is the (rows, cols) patch
    grid; it is needed to shape spatial maps.
    """
    if not trace.attentions:
        raise ContractViolation('the decoder trace holds no attention maps: rerun with attention retention enabled')
    rows = [np.asarray(layer)[sample].mean(axis=0) for layer in trace.attentions]
    heat = np.mean(rows, axis=0)
    k, memory = heat.shape
    names = tuple(class_names) if class_names is not None else tuple(f'class{i}' for i in range(k))
    frames = memory - 1
    spatial = None
    if encoder_attentions:
        if grid is None:
            raise ConfigurationError('spatial rollout needs the patch grid')
        patches = grid[0] * grid[1]
        spatial = _spatial_heat(heat, encoder_rollout(encoder_attentions, sample), frames, patches)
        spatial = np.stack([normalize_map(m) for m in spatial])
    temporal = np.stack([normalize_map(row) for row in heat])
    return RolloutMap(class_names=names, temporal=temporal, grid=tuple(grid) if grid else (1, 1), spatial=spatial)


def write_pgm(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    Path(path).write_bytes(f'P5\n{width} {height}\n255\n'.encode('ascii') + pixels.tobytes())


def read_pgm(path):
    payload = Path(path).read_bytes()
    header = re.match(rb'P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s', payload)
    if header is None:
        raise ConfigurationError(f'{path} is not a binary PGM file')
    width, height, maxval = (int(v) for v in header.groups())
    if maxval != 255:
        raise ConfigurationError(f'{path}: only 8-bit PGM files are supported')
    body = payload[header.end():]
    if len(body) != width * height:
        raise ConfigurationError(f'{path}: expected {width * height} pixels, found {len(body)}')
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def export_heatmap(rollout, directory):
    """One PGM per class per frame, pixel = round(255·heat), plus ``index.txt``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f'cannot write heatmaps to {directory}: {exc.strerror}') from exc
    rows, cols = rollout.grid
    lines = [INDEX_HEADER, 'class,frame,file,temporal_heat']
    written = []
    for k, name in enumerate(rollout.class_names):
        for t in range(rollout.frames):
            if rollout.spatial is not None:
                heat = rollout.spatial[k, t].reshape(rows, cols)
            else:
                heat = np.full((rows, cols), rollout.temporal[k, t + 1])
            filename = f'class{k:03d}_frame{t:03d}.pgm'
            write_pgm(directory / filename, np.rint(255.0 * heat))
            lines.append(f'{name},{t},{filename},{rollout.temporal[k, t + 1]:.6f}')
            written.append(directory / filename)
    (directory / 'index.txt').write_text('\n'.join(lines) + '\n', encoding='utf-8')
    logger.info('wrote %d heatmaps to %s', len(written), directory)
    return written

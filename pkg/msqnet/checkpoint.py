"""
``MSQK`` binary checkpoints.

Layout (little-endian): magic ``MSQK``, u32 format version, u32 tensor count,
then per tensor: u32 name length, UTF-8 name, u32 ndim, ndim × u32 dims and
the float64 payload in row-major order.
"""
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b'MSQK'
VERSION = 1

_U32 = struct.Struct('<I')
_HEADER = struct.Struct('<4sII')


def encode_checkpoint(tensors):
    parts = [_HEADER.pack(MAGIC, VERSION, len(tensors))]
    for name, value in tensors.items():
        data = np.ascontiguousarray(getattr(value, 'data', value), dtype='<f8')
        encoded = name.encode('utf-8')
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(data.ndim))
        parts.extend(_U32.pack(extent) for extent in data.shape)
        parts.append(data.tobytes())
    return b''.join(parts)


class _Reader:
    def __init__(self, payload):
        self._payload = payload
        self._offset = 0

    def take(self, count, what):
        end = self._offset + count
        if end > len(self._payload):
            raise CheckpointError(f'truncated checkpoint while reading {what}', tensor=what)
        chunk = self._payload[self._offset:end]
        self._offset = end
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(_U32.size, what))[0]

    @property
    def exhausted(self):
        return self._offset == len(self._payload)


def decode_checkpoint(payload):
    if len(payload) < _HEADER.size:
        raise CheckpointError('truncated checkpoint header')
    magic, version, count = _HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise CheckpointError(f'not an MSQK checkpoint (magic {magic!r})')
    if version != VERSION:
        raise CheckpointError(f'unsupported checkpoint version {version}')
    reader = _Reader(payload)
    reader.take(_HEADER.size, 'header')
    tensors = {}
    for i in range(count):
        length = reader.u32(f'name of tensor {i}')
        try:
            name = reader.take(length, f'name of tensor {i}').decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError(f'tensor {i} has a corrupt name') from None
        if name in tensors:
            raise CheckpointError(f'duplicate tensor {name!r}', tensor=name)
        ndim = reader.u32(name)
        shape = tuple(reader.u32(name) for _ in range(ndim))
        raw = reader.take(8 * int(np.prod(shape, dtype=np.int64)), name)
        tensors[name] = np.frombuffer(raw, dtype='<f8').reshape(shape).astype(np.float64)
    if not reader.exhausted:
        raise CheckpointError('trailing bytes after the last tensor')
    return tensors


def save_checkpoint(path, tensors):
    """Write ``tensors`` (name -> array or Tensor) atomically via a temporary file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_checkpoint(tensors)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.debug('saved %d tensors to %s', len(tensors), path)


def load_checkpoint(path):
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f'cannot read checkpoint {path}: {exc.strerror}') from exc
    return decode_checkpoint(payload)


def save_model(model, path):
    save_checkpoint(path, model.state_dict())


def load_model(model, path):
    """Load ``path`` into ``model``; every tensor is validated before any is assigned."""
    model.load_state_dict(load_checkpoint(path))
    return model

"""CSV export of video embeddings before and after the decoder, for offline visualisation."""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError

EMBEDDINGS_HEADER = '# msqnet-embeddings v1'
POOLED = 'pooled'
QUERY = 'query'


@dataclass
class EmbeddingRow:
    kind: str
    video_id: int
    class_name: str
    label_bits: str
    values: np.ndarray


def export_embeddings(model, dataset, path, batch_size=8):
    """
    One ``pooled`` row per video (mean of the decoder memory rows) and one
    ``query`` row per (video, positive class) holding that class's final query
    state. Returns the number of rows written.
    """
    names = tuple(dataset.class_names)
    scored = None if names == model.class_names else names
    d = model.config.d_out
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open('w', encoding='utf-8', newline='') as handle:
        handle.write(EMBEDDINGS_HEADER + '\n')
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['kind', 'video_id', 'class', 'labels'] + [f'e{i}' for i in range(d)])
        video_id = 0
        for pixels, labels, _ in dataset.batches(batch_size):
            out = model(pixels, class_names=scored)
            pooled = out.encoded.memory.data.mean(axis=-2)
            queries = out.queries.data
            for b in range(len(labels)):
                bits = ''.join('1' if v else '0' for v in labels[b])
                writer.writerow([POOLED, video_id, '', bits] + [repr(float(v)) for v in pooled[b]])
                count += 1
                for k in np.flatnonzero(labels[b]):
                    writer.writerow([QUERY, video_id, names[k], bits] + [repr(float(v)) for v in queries[b, k]])
                    count += 1
                video_id += 1
    return count


def read_embeddings(path):
    lines = Path(path).read_text(encoding='utf-8').splitlines()
    if not lines or lines[0] != EMBEDDINGS_HEADER:
        raise ConfigurationError(f'{path} is not an embeddings export')
    reader = csv.reader(lines[1:])
    header = next(reader)
    rows = []
    for record in reader:
        if len(record) != len(header):
            raise ConfigurationError(f'{path}: row has {len(record)} fields, header has {len(header)}')
        kind, video_id, class_name, bits, *values = record
        rows.append(EmbeddingRow(kind, int(video_id), class_name, bits, np.array([float(v) for v in values])))
    return header, rows

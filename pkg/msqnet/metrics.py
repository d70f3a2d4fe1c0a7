"""Evaluation metrics: mean average precision, top-1 accuracy and multilabel accuracy."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .choices import TaskMode
from .exceptions import ContractViolation, EvaluationError, ShapeError

REPORT_HEADER = '# msqnet-metrics v1'


def _array(value):
    return np.asarray(getattr(value, 'data', value), dtype=np.float64)


@dataclass
class EvalBatch:
    scores: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        self.scores = _array(self.scores)
        self.truth = _array(self.truth)
        if self.scores.shape != self.truth.shape or self.scores.ndim != 2:
            raise ShapeError('EvalBatch', self.scores.shape, self.truth.shape)
        if not np.all((self.truth == 0) | (self.truth == 1)):
            raise ContractViolation('truth entries must be 0 or 1')


def average_precision(scores, truth):
    """
    Non-interpolated AP of one class. Items are ranked by descending score,
    ties by ascending index. Returns None when ``truth`` has no positive.
    """
    scores, truth = _array(scores), _array(truth)
    if scores.shape != truth.shape or scores.ndim != 1:
        raise ShapeError('average_precision', scores.shape, truth.shape)
    if not truth.any():
        return None
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = truth[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.cumsum(hits)[ranks - 1] / ranks))


def per_class_ap(batch):
    return [average_precision(batch.scores[:, k], batch.truth[:, k]) for k in range(batch.truth.shape[1])]


def mean_ap(batch):
    """Unweighted mean AP over classes with at least one positive."""
    defined = [ap for ap in per_class_ap(batch) if ap is not None]
    if not defined:
        raise EvaluationError('mAP is undefined: no class has a positive example')
    return float(np.mean(defined))


def top1_accuracy(batch):
    if not np.all(batch.truth.sum(axis=1) == 1):
        raise ContractViolation('top-1 accuracy needs exactly one positive per row')
    predicted = np.argmax(batch.scores, axis=1)
    return float(np.mean(batch.truth[np.arange(len(predicted)), predicted] == 1))


def multilabel_accuracy(batch, threshold=0.5, subset=False):
    """Per-label thresholded accuracy; with ``subset`` a row counts only if every label matches."""
    correct = (batch.scores >= threshold) == (batch.truth == 1)
    if subset:
        return float(np.mean(np.all(correct, axis=1)))
    return float(np.mean(correct))


def summarize(probs, truth, task_mode=TaskMode.MULTI_LABEL, subset=False):
    batch = EvalBatch(probs, truth)
    metrics = {'mAP': mean_ap(batch), 'multilabel_accuracy': multilabel_accuracy(batch, subset=subset)}
    if task_mode == TaskMode.SINGLE_LABEL:
        metrics['top1_accuracy'] = top1_accuracy(batch)
    return metrics


def format_report(metrics):
    rows = [REPORT_HEADER, 'metric,value']
    rows.extend(f'{name},{value:.6f}' for name, value in metrics.items())
    return '\n'.join(rows) + '\n'


def write_report(metrics, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(metrics), encoding='utf-8')


def read_report(path):
    lines = Path(path).read_text(encoding='utf-8').splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise EvaluationError(f'{path} is not a metrics report')
    return {name: float(value) for name, value in (line.split(',') for line in lines[2:] if line)}

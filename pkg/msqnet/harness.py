"""
Training and evaluation engine: Adam with cosine decay, the experiment
runner, the ablation grid, the zero-shot protocol and the label-permutation
null used to judge zero-shot results.
"""
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import decoder
from .choices import HeadMode, TaskMode, ZeroShotVariant
from .data import (
    DataConfig,
    SplitSpec,
    build_dataset,
    compositional_vocabulary,
    make_zero_shot_splits,
    primitive_vocabulary,
)
from .exceptions import ConfigurationError, NumericalError
from .metrics import EvalBatch, mean_ap, summarize
from .model import MSQNet, ModelConfig
from .query import read_vocabulary
from .tensor import Tape

logger = logging.getLogger(__name__)

RUNLOG_HEADER = '# msqnet-runlog v1'
ABLATION_HEADER = '# msqnet-ablation v1'
ZEROSHOT_HEADER = '# msqnet-zeroshot v1'

ZERO_SHOT_VARIANTS = {
    ZeroShotVariant.VANILLA: {'text_init_enabled': False, 'mmq_enabled': False},
    ZeroShotVariant.TEXT_INIT: {'text_init_enabled': True, 'mmq_enabled': False},
    ZeroShotVariant.FULL: {'text_init_enabled': True, 'mmq_enabled': True},
}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr0: float = 1e-3
    batch_size: int = 8
    grad_clip: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1
    subset_accuracy: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError('epochs must be non-negative')
        if self.lr0 < 0:
            raise ConfigurationError('lr0 must be non-negative')
        if self.batch_size < 1 or self.eval_every < 1:
            raise ConfigurationError('batch_size and eval_every must be at least 1')
        if self.grad_clip <= 0:
            raise ConfigurationError('grad_clip must be positive')
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigurationError('Adam needs betas in [0, 1) and a positive eps')


@dataclass
class EpochResult:
    epoch: int
    loss: float
    metrics: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    config_lines: list
    seed: int
    initial_metrics: dict = field(default_factory=dict)
    epochs: list = field(default_factory=list)
    wall_clock: float = 0.0
    checksum: str = ''
    aborted: bool = False

    @property
    def config_hash(self):
        return config_hash(self.config_lines)

    @property
    def losses(self):
        return [e.loss for e in self.epochs]

    @property
    def final_metrics(self):
        for result in reversed(self.epochs):
            if result.metrics:
                return result.metrics
        return self.initial_metrics

    def to_log(self):
        lines = [RUNLOG_HEADER]
        lines.extend(f'# {line}' for line in self.config_lines)
        lines.append(f'# config_hash={self.config_hash}')
        if self.initial_metrics:
            lines.append('0,,' + _metric_fields(self.initial_metrics))
        for result in self.epochs:
            row = f'{result.epoch},{result.loss:.6f}'
            if result.metrics:
                row += ',' + _metric_fields(result.metrics)
            lines.append(row)
        lines.append(f'# wall_clock={self.wall_clock:.3f}')
        lines.append(f'# checksum={self.checksum}')
        return '\n'.join(lines) + '\n'


def _metric_fields(metrics):
    return ','.join(f'{name}={value:.6f}' for name, value in metrics.items())


def canonical_lines(sections):
    """Flatten ``{section: {key: value}}`` into sorted ``section.key=value`` lines."""
    lines = []
    for section, values in sections.items():
        for key, value in values.items():
            name = f'{section}.{key}' if section else key
            lines.append(f'{name}={json.dumps(value, sort_keys=True)}')
    return sorted(lines)


def config_hash(lines):
    return hashlib.sha256('\n'.join(sorted(lines)).encode('utf-8')).hexdigest()


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr_t, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    Bias-corrected Adam update of ``params`` (name -> Tensor) in place.
    All gradients are checked before anything moves.
    """
    for name, param in params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ConfigurationError(f'gradient for {name!r} has shape {g.shape}, parameter {param.shape}')
        if not np.all(np.isfinite(g)):
            raise NumericalError(f'non-finite gradient for parameter {name!r}', parameter=name)
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        param.data -= lr_t * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


def cosine_lr(step, total_steps, lr0):
    if not 0 <= step <= total_steps:
        raise ConfigurationError(f'step {step} outside [0, {total_steps}]')
    if total_steps == 0:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the original norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


@dataclass
class Evaluation:
    metrics: dict
    scores: np.ndarray
    truth: np.ndarray


def predict(model, dataset, batch_size=8, class_names=None):
    """Class probabilities for every video of ``dataset``, without recording a tape."""
    names = None if class_names is None else tuple(class_names)
    chunks = [
        model(pixels, class_names=names).probs.data
        for pixels, _, _ in dataset.batches(batch_size)
    ]
    return np.concatenate(chunks) if chunks else np.zeros((0, len(dataset.class_names)))


def evaluate(model, dataset, batch_size=8, subset=False):
    """Metrics on ``dataset``, scoring its own vocabulary (unseen classes in zero-shot runs)."""
    names = dataset.class_names if tuple(dataset.class_names) != model.class_names else None
    scores = predict(model, dataset, batch_size, names)
    truth = dataset.labels
    metrics = summarize(scores, truth, model.config.task_mode, subset=subset)
    return Evaluation(metrics=metrics, scores=scores, truth=truth)


def train(model, train_set, eval_set, cfg, config_lines=(), seed=0):
    """
    Minibatch Adam with a cosine schedule over ``cfg.epochs`` epochs; evaluates
    before training and every ``cfg.eval_every`` epochs. Shuffling is seeded by
    ``seed``.
    """
    if tuple(train_set.class_names) != model.class_names:
        raise ConfigurationError('the training set vocabulary does not match the model')
    if cfg.epochs and not len(train_set):
        raise ConfigurationError('cannot train on an empty dataset')
    task_mode = model.config.task_mode
    record = RunRecord(config_lines=list(config_lines), seed=seed)
    started = time.perf_counter()

    if len(eval_set):
        record.initial_metrics = evaluate(model, eval_set, cfg.batch_size, cfg.subset_accuracy).metrics
    batches_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    params = dict(model.named_parameters())
    state = AdamState()
    rng = np.random.default_rng([seed, 7])
    step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(train_set))
            total = 0.0
            for pixels, labels, seeds in train_set.batches(cfg.batch_size, order):
                model.zero_grad()
                with Tape() as tape:
                    out = model(pixels)
                    value = decoder.loss(out.logits, labels, task_mode)
                    if not np.isfinite(value.item()):
                        raise NumericalError(f'non-finite loss in epoch {epoch}', batch_seeds=seeds)
                    tape.backward(value)
                grads = {name: p.grad for name, p in params.items()}
                clip_grad_norm(grads, cfg.grad_clip)
                adam_step(params, grads, state, cosine_lr(step, total_steps, cfg.lr0), cfg.beta1, cfg.beta2, cfg.eps)
                step += 1
                total += value.item() * len(seeds)
            result = EpochResult(epoch=epoch, loss=total / len(train_set))
            if len(eval_set) and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
                result.metrics = evaluate(model, eval_set, cfg.batch_size, cfg.subset_accuracy).metrics
            record.epochs.append(result)
            logger.info('epoch %d/%d loss=%.6f %s', epoch, cfg.epochs, result.loss, _metric_fields(result.metrics))
    except NumericalError as exc:
        record.aborted = True
        record.wall_clock = time.perf_counter() - started
        record.checksum = model.checksum()
        exc.record = record
        logger.error('training aborted: %s (batch seeds %s)', exc, exc.batch_seeds)
        raise
    record.wall_clock = time.perf_counter() - started
    record.checksum = model.checksum()
    return record


def resolve_vocabulary(spec):
    """``primitives:K``, ``compositional:K`` or a path to a vocabulary file."""
    for prefix, builder in (('primitives:', primitive_vocabulary), ('compositional:', compositional_vocabulary)):
        if spec.startswith(prefix):
            try:
                k = int(spec[len(prefix):])
            except ValueError:
                raise ConfigurationError(f'bad vocabulary size in {spec!r}') from None
            return builder(k)
    try:
        return read_vocabulary(spec)
    except OSError as exc:
        raise ConfigurationError(f'cannot read vocabulary file {spec!r}: {exc.strerror}') from exc


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    vocabulary: str = 'primitives:8'
    n_train: int = 256
    n_eval: int = 64
    seed: int = 0
    seen_fraction: float = 0.75
    n_splits: int = 10
    ablation_seeds: int = 1
    frame_grid: tuple = (8, 10, 16)
    null_resamples: int = 200

    def __post_init__(self):
        object.__setattr__(self, 'frame_grid', tuple(int(t) for t in self.frame_grid))
        geometry = {'frames': self.data.frames, 'height': self.data.height, 'width': self.data.width}
        if any(getattr(self.model, key) != value for key, value in geometry.items()) or (
            self.model.init_seed != self.seed
        ):
            object.__setattr__(self, 'model', self.model.replace(init_seed=self.seed, **geometry))
        if self.model.task_mode == TaskMode.SINGLE_LABEL and any(self.data.label_size_weights[1:]):
            raise ConfigurationError('single-label runs need label_size_weights of the form [w, 0, 0]')
        if self.n_train < 0 or self.n_eval < 0:
            raise ConfigurationError('n_train and n_eval must be non-negative')
        if self.ablation_seeds < 1 or self.null_resamples < 1 or not self.frame_grid:
            raise ConfigurationError('ablation_seeds, null_resamples and frame_grid must be non-empty')

    @classmethod
    def tiny(cls, **overrides):
        """The gradient-check geometry: T=4, 16x16 px, P=8, D'=D=16, D''=8, two layers and heads, K=4."""
        base = cls(
            data=DataConfig(frames=4, height=16, width=16),
            model=ModelConfig(
                frames=4, patch_size=8, d_model=16, d_out=16, frame_dim=8, frame_heads=2,
                encoder_layers=2, encoder_heads=2, decoder_layers=2, decoder_heads=2, ffn_width=32,
            ),
            train=TrainConfig(epochs=1, batch_size=4),
            vocabulary='primitives:4',
            n_train=8,
            n_eval=8,
        )
        return base.replace(**overrides) if overrides else base

    def replace(self, **changes):
        return replace(self, **changes)

    def with_seed(self, seed):
        return replace(self, seed=seed)

    def with_frames(self, frames):
        return replace(self, data=replace(self.data, frames=frames), model=self.model.replace(frames=frames))

    def with_model(self, **changes):
        return replace(self, model=self.model.replace(**changes))

    def as_sections(self):
        top = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ('data', 'model', 'train')}
        top['frame_grid'] = list(self.frame_grid)
        data = asdict(self.data)
        data['label_size_weights'] = list(self.data.label_size_weights)
        return {'data': data, 'model': asdict(self.model), 'train': asdict(self.train), '': top}

    @property
    def canonical(self):
        return canonical_lines(self.as_sections())

    @property
    def hash(self):
        return config_hash(self.canonical)


def prepare_experiment(cfg, split=None, class_names=None):
    """Datasets for ``split`` (supervised by default) and a fresh MSQNet on the training vocabulary."""
    vocabulary = list(class_names) if class_names is not None else resolve_vocabulary(cfg.vocabulary)
    split = split or SplitSpec.supervised(len(vocabulary))
    train_set, eval_set = build_dataset(split, cfg.n_train, cfg.n_eval, cfg.data, vocabulary, data_seed=cfg.seed)
    return MSQNet(cfg.model, train_set.class_names), train_set, eval_set


def run_experiment(cfg, split=None, class_names=None):
    """Prepare and train; returns ``(model, record, eval_set)``."""
    model, train_set, eval_set = prepare_experiment(cfg, split, class_names)
    record = train(model, train_set, eval_set, cfg.train, cfg.canonical, seed=cfg.seed)
    return model, record, eval_set


@dataclass
class NullDistribution:
    values: np.ndarray
    observed: float

    @property
    def percentile_95(self):
        return float(np.percentile(self.values, 95))

    @property
    def above_chance(self):
        return self.observed > self.percentile_95


def permutation_null(scores, truth, n_resamples=200, seed=0):
    """mAP under ``n_resamples`` shuffles of the truth rows across samples."""
    batch = EvalBatch(scores, truth)
    rng = np.random.default_rng(seed)
    values = np.array([
        mean_ap(EvalBatch(batch.scores, batch.truth[rng.permutation(len(batch.truth))]))
        for _ in range(n_resamples)
    ])
    return NullDistribution(values=values, observed=mean_ap(batch))


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std())


@dataclass
class CellResult:
    cell: str
    seed: int
    metrics: dict
    record: RunRecord = None


@dataclass
class AblationReport:
    results: list = field(default_factory=list)

    @property
    def cells(self):
        return list(dict.fromkeys(r.cell for r in self.results))

    def summary(self):
        """``{cell: {metric: (mean, std)}}`` over seeds."""
        out = {}
        for cell in self.cells:
            rows = [r.metrics for r in self.results if r.cell == cell]
            out[cell] = {name: _mean_std([row[name] for row in rows]) for name in rows[0]}
        return out

    def format(self):
        lines = [ABLATION_HEADER, 'cell,seed,metrics']
        lines.extend(f'{r.cell},{r.seed},{_metric_fields(r.metrics)}' for r in self.results)
        for cell, stats in self.summary().items():
            lines.append(f'{cell},mean±std,' + ','.join(
                f'{name}={mean:.6f}±{std:.6f}' for name, (mean, std) in stats.items()
            ))
        return '\n'.join(lines) + '\n'


def ablation_grid(cfg):
    """Named config variants: the MMQ × text-init factorial and the frame-count sweep."""
    cells = []
    for mmq in (True, False):
        for text_init in (True, False):
            name = f'mmq={"on" if mmq else "off"};text_init={"on" if text_init else "off"}'
            cells.append((name, cfg.with_model(mmq_enabled=mmq, text_init_enabled=text_init)))
    for frames in cfg.frame_grid:
        cells.append((f'frames={frames}', cfg.with_frames(frames)))
    return cells


def ablation_suite(cfg, seeds=None):
    seeds = list(range(cfg.seed, cfg.seed + cfg.ablation_seeds)) if seeds is None else list(seeds)
    report = AblationReport()
    for seed in seeds:
        for name, variant in ablation_grid(cfg.with_seed(seed)):
            logger.info('ablation cell %s, seed %d', name, seed)
            _, record, _ = run_experiment(variant)
            report.results.append(CellResult(cell=name, seed=seed, metrics=record.final_metrics, record=record))
    return report


@dataclass
class SplitOutcome:
    variant: str
    split_index: int
    split: SplitSpec
    metrics: dict
    null_p95: float
    record: RunRecord = None

    @property
    def above_chance(self):
        return self.metrics['mAP'] > self.null_p95


@dataclass
class ZeroShotReport:
    seen_fraction: float
    outcomes: list = field(default_factory=list)

    def for_variant(self, variant):
        return [o for o in self.outcomes if o.variant == variant]

    def summary(self):
        out = {}
        for variant in dict.fromkeys(o.variant for o in self.outcomes):
            rows = self.for_variant(variant)
            out[variant] = {
                'mAP': _mean_std([o.metrics['mAP'] for o in rows]),
                'above_chance': sum(o.above_chance for o in rows),
                'splits': len(rows),
            }
        return out

    def format(self):
        lines = [ZEROSHOT_HEADER, f'# seen_fraction={self.seen_fraction}', 'variant,mAP_mean,mAP_std,above_chance']
        for variant, stats in self.summary().items():
            mean, std = stats['mAP']
            lines.append(f'{variant},{mean:.6f},{std:.6f},{stats["above_chance"]}/{stats["splits"]}')
        return '\n'.join(lines) + '\n'


def zero_shot_config(cfg, variant):
    """Zero-shot runs score unseen classes with the shared head and no per-class positions."""
    return cfg.with_model(head_mode=HeadMode.SHARED, **ZERO_SHOT_VARIANTS[variant])


def zero_shot_suite(cfg, variants=None, seen_fraction=None, n_splits=None):
    seen_fraction = cfg.seen_fraction if seen_fraction is None else seen_fraction
    n_splits = cfg.n_splits if n_splits is None else n_splits
    variants = list(ZERO_SHOT_VARIANTS) if variants is None else list(variants)
    vocabulary = resolve_vocabulary(cfg.vocabulary)
    splits = make_zero_shot_splits(len(vocabulary), seen_fraction, n_splits, master_seed=cfg.seed)
    report = ZeroShotReport(seen_fraction=seen_fraction)
    for variant in variants:
        variant_cfg = zero_shot_config(cfg, variant)
        for index, split in enumerate(splits):
            logger.info('zero-shot %s, split %d/%d', variant, index + 1, len(splits))
            model, record, eval_set = run_experiment(variant_cfg, split, vocabulary)
            outcome = evaluate(model, eval_set, cfg.train.batch_size, cfg.train.subset_accuracy)
            null = permutation_null(outcome.scores, outcome.truth, cfg.null_resamples, seed=split.split_seed)
            report.outcomes.append(SplitOutcome(
                variant=variant, split_index=index, split=split, metrics=outcome.metrics,
                null_p95=null.percentile_95, record=record,
            ))
    return report

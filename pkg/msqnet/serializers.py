# msqnet/serializers.py
"""JSON experiment configuration, validated with strict DRF serializers."""
import json
from pathlib import Path

from rest_framework import serializers

from .choices import AttentionMode, HeadMode, TaskMode, TextEmbedderMode
from .data import ZERO_SHOT_FRACTIONS, DataConfig
from .exceptions import ConfigurationError
from .harness import ExperimentConfig, TrainConfig
from .model import ModelConfig

SECTIONS = ('data', 'model', 'train')


class StrictSerializer(serializers.Serializer):
    """Rejects keys it does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


class DataSectionSerializer(StrictSerializer):
    frames = serializers.IntegerField(min_value=1, default=8)
    height = serializers.IntegerField(min_value=4, default=16)
    width = serializers.IntegerField(min_value=4, default=16)
    noise_std = serializers.FloatField(min_value=0.0, default=0.05)
    amplitude = serializers.FloatField(min_value=0.0, default=0.8)
    background = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.2)
    label_size_weights = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), min_length=3, max_length=3, default=[1.0, 1.0, 1.0]
    )
    oscillation_period = serializers.IntegerField(min_value=2, default=8)
    sprite_size = serializers.IntegerField(min_value=1, default=4)


class ModelSectionSerializer(StrictSerializer):
    patch_size = serializers.IntegerField(min_value=1, default=4)
    d_model = serializers.IntegerField(min_value=1, default=32)
    encoder_layers = serializers.IntegerField(min_value=1, default=2)
    encoder_heads = serializers.IntegerField(min_value=1, default=2)
    attention_mode = serializers.ChoiceField(choices=AttentionMode.choices, default=AttentionMode.DIVIDED)
    d_out = serializers.IntegerField(min_value=1, default=32)
    frame_dim = serializers.IntegerField(min_value=1, allow_null=True, default=None)
    frame_heads = serializers.IntegerField(min_value=1, default=1)
    decoder_layers = serializers.IntegerField(min_value=1, default=2)
    decoder_heads = serializers.IntegerField(min_value=1, default=2)
    ffn_width = serializers.IntegerField(min_value=1, default=128)
    task_mode = serializers.ChoiceField(choices=TaskMode.choices, default=TaskMode.MULTI_LABEL)
    text_mode = serializers.ChoiceField(choices=TextEmbedderMode.choices, default=TextEmbedderMode.COMPOSITIONAL)
    text_seed = serializers.IntegerField(min_value=0, default=0)
    text_init_enabled = serializers.BooleanField(default=True)
    mmq_enabled = serializers.BooleanField(default=True)
    freeze_frame_embedder = serializers.BooleanField(default=False)
    head_mode = serializers.ChoiceField(choices=HeadMode.choices, default=HeadMode.PER_CLASS)
    zero_cross_values = serializers.BooleanField(default=False)


class TrainSectionSerializer(StrictSerializer):
    epochs = serializers.IntegerField(min_value=0, default=100)
    lr0 = serializers.FloatField(min_value=0.0, default=1e-3)
    batch_size = serializers.IntegerField(min_value=1, default=8)
    grad_clip = serializers.FloatField(min_value=1e-12, default=1.0)
    beta1 = serializers.FloatField(min_value=0.0, max_value=0.999999, default=0.9)
    beta2 = serializers.FloatField(min_value=0.0, max_value=0.999999, default=0.999)
    eps = serializers.FloatField(min_value=1e-16, default=1e-8)
    eval_every = serializers.IntegerField(min_value=1, default=1)
    subset_accuracy = serializers.BooleanField(default=False)


class ExperimentSerializer(StrictSerializer):
    data = DataSectionSerializer()
    model = ModelSectionSerializer()
    train = TrainSectionSerializer()
    vocabulary = serializers.CharField(default='primitives:8')
    n_train = serializers.IntegerField(min_value=0, default=256)
    n_eval = serializers.IntegerField(min_value=0, default=64)
    seed = serializers.IntegerField(min_value=0, default=0)
    seen_fraction = serializers.FloatField(default=0.75)
    n_splits = serializers.IntegerField(min_value=1, default=10)
    ablation_seeds = serializers.IntegerField(min_value=1, default=1)
    frame_grid = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1, default=[8, 10, 16])
    null_resamples = serializers.IntegerField(min_value=1, default=200)

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = dict(data)
            for section in SECTIONS:
                data.setdefault(section, {})
        return super().to_internal_value(data)

    def validate_seen_fraction(self, value):
        if value not in ZERO_SHOT_FRACTIONS:
            raise serializers.ValidationError(f'Must be one of {list(ZERO_SHOT_FRACTIONS)}.')
        return value

    def validate(self, attrs):
        try:
            attrs['config'] = build_config(attrs)
        except ConfigurationError as exc:
            raise serializers.ValidationError(str(exc)) from exc
        return attrs


def build_config(attrs):
    data = DataConfig(**{**attrs['data'], 'label_size_weights': tuple(attrs['data']['label_size_weights'])})
    model = ModelConfig(frames=data.frames, height=data.height, width=data.width, init_seed=attrs['seed'],
                        **attrs['model'])
    top = {key: value for key, value in attrs.items() if key not in SECTIONS and key != 'config'}
    return ExperimentConfig(data=data, model=model, train=TrainConfig(**attrs['train']), **top)


def _flatten(detail, prefix=''):
    if isinstance(detail, dict):
        for key, value in detail.items():
            yield from _flatten(value, f'{prefix}{key}.' if key != 'non_field_errors' else prefix)
    elif isinstance(detail, list):
        for item in detail:
            yield from _flatten(item, prefix)
    else:
        yield f'{prefix.rstrip(".") or "config"}: {detail}'


def parse_experiment(document, seed=None):
    """Validate a configuration mapping; ``seed`` overrides the document's seed."""
    if not isinstance(document, dict):
        raise ConfigurationError('the experiment configuration must be a JSON object')
    if seed is not None:
        document = {**document, 'seed': seed}
    serializer = ExperimentSerializer(data=document)
    if not serializer.is_valid():
        raise ConfigurationError('; '.join(_flatten(serializer.errors)))
    return serializer.validated_data['config']


def load_experiment(path=None, seed=None):
    """Read and validate a JSON configuration file; no path means all defaults."""
    if path is None:
        return parse_experiment({}, seed)
    try:
        document = json.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as exc:
        raise ConfigurationError(f'cannot read config {path}: {exc.strerror}') from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f'{path} is not valid JSON: {exc.msg} (line {exc.lineno})') from exc
    return parse_experiment(document, seed)


def dump_experiment(cfg):
    """The canonical JSON document for ``cfg``; ``load_experiment`` accepts it back."""
    sections = cfg.as_sections()
    document = dict(sections.pop(''))
    model = dict(sections['model'])
    for key in ('frames', 'height', 'width', 'init_seed'):
        model.pop(key)
    document.update({'data': sections['data'], 'model': model, 'train': sections['train']})
    return json.dumps(document, indent=2, sort_keys=True)

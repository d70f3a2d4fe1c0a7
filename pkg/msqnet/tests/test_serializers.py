# msqnet/tests/test_serializers.py
import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from msqnet.choices import AttentionMode, TaskMode
from msqnet.exceptions import ConfigurationError
from msqnet.harness import ExperimentConfig
from msqnet.serializers import dump_experiment, load_experiment, parse_experiment


class TestExperimentSerializer(SimpleTestCase):
    """JSON experiment configuration"""

    def test_empty_document_gives_defaults(self):
        cfg = parse_experiment({})
        self.assertEqual(cfg, ExperimentConfig())
        self.assertEqual(cfg.model.attention_mode, AttentionMode.DIVIDED)

    def test_sections_are_applied(self):
        cfg = parse_experiment({
            'data': {'frames': 4},
            'model': {'patch_size': 8, 'd_model': 16},
            'train': {'epochs': 3},
            'vocabulary': 'primitives:4',
            'seed': 5,
        })
        self.assertEqual(cfg.data.frames, 4)
        self.assertEqual(cfg.model.frames, 4)
        self.assertEqual(cfg.model.init_seed, 5)
        self.assertEqual(cfg.train.epochs, 3)

    def test_seed_override(self):
        self.assertEqual(parse_experiment({'seed': 1}, seed=7).seed, 7)

    def test_unknown_keys_are_rejected(self):
        for document in ({'epochz': 3}, {'train': {'epochz': 3}}, {'model': {'d_modle': 8}}):
            with self.assertRaises(ConfigurationError) as ctx:
                parse_experiment(document)
            self.assertIn('Unknown field', str(ctx.exception))

    def test_field_errors_are_named(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_experiment({'train': {'batch_size': 0}})
        self.assertIn('train.batch_size', str(ctx.exception))

    def test_cross_field_invariants(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_experiment({'model': {'patch_size': 5}})
        self.assertIn('patches', str(ctx.exception))
        with self.assertRaises(ConfigurationError):
            parse_experiment({'model': {'task_mode': TaskMode.SINGLE_LABEL}})
        cfg = parse_experiment({
            'model': {'task_mode': TaskMode.SINGLE_LABEL},
            'data': {'label_size_weights': [1, 0, 0]},
        })
        self.assertEqual(cfg.data.label_size_weights, (1.0, 0.0, 0.0))

    def test_seen_fraction_choices(self):
        with self.assertRaises(ConfigurationError):
            parse_experiment({'seen_fraction': 0.6})
        self.assertEqual(parse_experiment({'seen_fraction': 0.5}).seen_fraction, 0.5)

    def test_document_must_be_an_object(self):
        with self.assertRaises(ConfigurationError):
            parse_experiment([1, 2])

    def test_dump_and_load(self):
        cfg = ExperimentConfig.tiny(seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'tiny.json'
            path.write_text(dump_experiment(cfg), encoding='utf-8')
            loaded = load_experiment(path)
        self.assertEqual(loaded, cfg)
        self.assertEqual(loaded.hash, cfg.hash)

    def test_file_errors(self):
        with self.assertRaises(ConfigurationError):
            load_experiment('/nonexistent/config.json')
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'broken.json'
            path.write_text('{"seed": ', encoding='utf-8')
            with self.assertRaises(ConfigurationError) as ctx:
                load_experiment(path)
        self.assertIn('not valid JSON', str(ctx.exception))

    def test_dump_is_canonical_json(self):
        document = json.loads(dump_experiment(ExperimentConfig()))
        self.assertEqual(sorted(document), sorted([
            'ablation_seeds', 'data', 'frame_grid', 'model', 'n_eval', 'n_splits', 'n_train',
            'null_resamples', 'seed', 'seen_fraction', 'train', 'vocabulary',
        ]))
        self.assertNotIn('frames', document['model'])

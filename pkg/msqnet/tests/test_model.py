# msqnet/tests/test_model.py
import numpy as np
from django.test import SimpleTestCase

from msqnet import decoder
from msqnet.choices import AttentionMode, HeadMode, TaskMode
from msqnet.exceptions import ConfigurationError
from msqnet.harness import ExperimentConfig
from msqnet.model import MSQNet, ModelConfig
from msqnet.query import text_embed
from msqnet.tensor import Tape, grad_check

CLASSES = ('translate-left', 'grow', 'blink', 'oscillate')


def tiny_model_config(**changes):
    return ExperimentConfig.tiny().model.replace(**changes)


def videos(cfg, batch=2, seed=0):
    return np.random.default_rng(seed).random((batch, cfg.frames, 3, cfg.height, cfg.width))


class TestModelConfig(SimpleTestCase):
    def test_frame_dim_defaults_to_half_width(self):
        self.assertEqual(ModelConfig(d_out=32).frame_dim, 16)

    def test_component_invariants_surface(self):
        with self.assertRaises(ConfigurationError):
            ModelConfig(patch_size=5)
        with self.assertRaises(ConfigurationError):
            ModelConfig(d_out=30, decoder_heads=4)
        with self.assertRaises(ConfigurationError):
            ModelConfig(head_mode='tied')
        with self.assertRaises(ConfigurationError):
            ModelConfig(frame_dim=6, frame_heads=4)


class TestForward(SimpleTestCase):
    """End-to-end forward pass"""

    def setUp(self):
        self.cfg = tiny_model_config()
        self.model = MSQNet(self.cfg, CLASSES)

    def test_output_shapes(self):
        out = self.model(videos(self.cfg))
        self.assertEqual(out.logits.shape, (2, 4))
        self.assertEqual(out.queries.shape, (2, 4, self.cfg.d_out))
        self.assertEqual(out.encoded.memory.shape, (2, self.cfg.frames + 1, self.cfg.d_out))
        self.assertEqual(out.video_embedding.Q_v.shape, (2, self.cfg.frame_dim))
        self.assertEqual(len(out.trace.attentions), self.cfg.decoder_layers)
        self.assertTrue(np.all((out.probs.data > 0) & (out.probs.data < 1)))

    def test_single_video_is_batched(self):
        video = videos(self.cfg, batch=1)[0]
        self.assertEqual(self.model(video).logits.shape, (1, 4))

    def test_single_label_probabilities_sum_to_one(self):
        model = MSQNet(tiny_model_config(task_mode=TaskMode.SINGLE_LABEL), CLASSES)
        probs = model(videos(self.cfg)).probs.data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_queries_start_from_text_embeddings(self):
        expected = text_embed(CLASSES, self.cfg.text_embedder).data
        np.testing.assert_array_equal(self.model.Q_l.data, expected)
        self.assertEqual(self.model.label_query_set.class_names, CLASSES)

    def test_random_queries_without_text_init(self):
        model = MSQNet(tiny_model_config(text_init_enabled=False), CLASSES)
        expected = text_embed(CLASSES, self.cfg.text_embedder).data
        self.assertFalse(np.allclose(model.Q_l.data, expected))

    def test_unimodal_path_has_no_fusion_parameters(self):
        model = MSQNet(tiny_model_config(mmq_enabled=False), CLASSES)
        groups = model.parameter_groups()
        self.assertNotIn('W_que', groups)
        self.assertNotIn('frame_embedder', groups)
        self.assertIsNone(model(videos(self.cfg)).video_embedding)

    def test_toggling_fusion_keeps_other_initial_weights(self):
        fused = MSQNet(self.cfg, CLASSES).state_dict()
        plain = MSQNet(tiny_model_config(mmq_enabled=False), CLASSES).state_dict()
        for name, value in plain.items():
            np.testing.assert_array_equal(fused[name], value, err_msg=name)

    def test_zeroed_cross_values_make_probabilities_video_independent(self):
        for mmq in (True, False):
            model = MSQNet(tiny_model_config(mmq_enabled=mmq, zero_cross_values=True), CLASSES)
            a = model(videos(self.cfg, seed=1)).probs.data
            b = model(videos(self.cfg, seed=2)).probs.data
            np.testing.assert_allclose(a, b, atol=1e-12, err_msg=f'mmq={mmq}')

    def test_default_model_depends_on_the_video(self):
        model = MSQNet(self.cfg, CLASSES)
        a = model(videos(self.cfg, seed=1)).probs.data
        b = model(videos(self.cfg, seed=2)).probs.data
        self.assertFalse(np.allclose(a, b, atol=1e-9))

    def test_joint_attention_model(self):
        model = MSQNet(tiny_model_config(attention_mode=AttentionMode.JOINT), CLASSES)
        out = model(videos(self.cfg), keep_attention=True)
        tokens = self.cfg.encoder.num_tokens
        self.assertEqual(out.encoder_attentions[0].shape, (2, self.cfg.encoder_heads, tokens, tokens))


class TestZeroShotScoring(SimpleTestCase):
    """Scoring class names outside the training vocabulary"""

    def test_per_class_head_cannot_score_new_names(self):
        cfg = tiny_model_config()
        model = MSQNet(cfg, CLASSES)
        with self.assertRaises(ConfigurationError):
            model(videos(cfg), class_names=['shrink', 'rotate-quadrant'])

    def test_shared_head_scores_new_names(self):
        cfg = tiny_model_config(head_mode=HeadMode.SHARED)
        model = MSQNet(cfg, CLASSES)
        self.assertIsNone(model.query_pos)
        out = model(videos(cfg), class_names=['shrink', 'grow', 'rotate-quadrant'])
        self.assertEqual(out.logits.shape, (2, 3))
        rows = model.label_queries(['shrink', 'grow']).data
        np.testing.assert_array_equal(rows[1], model.Q_l.data[1])
        np.testing.assert_array_equal(rows[0], text_embed(['shrink'], cfg.text_embedder).data[0])


class TestTraining(SimpleTestCase):
    """Gradients, groups and checksums"""

    def test_every_parameter_group_receives_gradient(self):
        cfg = tiny_model_config()
        model = MSQNet(cfg, CLASSES)
        y = np.array([[1, 0, 1, 0], [0, 1, 0, 0]], dtype=float)
        with Tape() as tape:
            tape.backward(decoder.loss(model(videos(cfg)).logits, y, cfg.task_mode))
        params = dict(model.named_parameters())
        groups = model.parameter_groups()
        self.assertEqual(set(groups), {
            'W_emb', 'e_pos', 'global_token', 'encoder_layers', 'W_out', 'mem_pos', 'Q_l', 'query_pos',
            'decoder_layers', 'head', 'frame_embedder', 'W_que',
        })
        for group, names in groups.items():
            reached = sum(float(np.abs(params[name].grad).sum()) for name in names)
            self.assertGreater(reached, 0.0, group)

    def test_frozen_frame_embedder(self):
        model = MSQNet(tiny_model_config(freeze_frame_embedder=True), CLASSES)
        self.assertNotIn('frame_embedder', model.parameter_groups())
        self.assertTrue(any(name.startswith('frame_embedder.') for name in model.state_dict()))

    def test_checksum_depends_only_on_seed(self):
        a = MSQNet(tiny_model_config(init_seed=3), CLASSES).checksum()
        b = MSQNet(tiny_model_config(init_seed=3), CLASSES).checksum()
        c = MSQNet(tiny_model_config(init_seed=4), CLASSES).checksum()
        self.assertEqual(a, b)
        self.assertNotEqual(a, c)

    def test_sampled_gradient_check_of_full_loss(self):
        cfg = tiny_model_config()
        model = MSQNet(cfg, CLASSES)
        pixels = videos(cfg)
        y = np.array([[1, 0, 0, 1], [0, 0, 1, 0]], dtype=float)

        def objective():
            return decoder.loss(model(pixels).logits, y, cfg.task_mode)

        report = grad_check(objective, dict(model.named_parameters()), max_coords=2)
        self.assertTrue(report.passed, report.failures[:3])

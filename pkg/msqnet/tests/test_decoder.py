# msqnet/tests/test_decoder.py
import numpy as np
from django.test import SimpleTestCase

from msqnet import decoder
from msqnet import tensor as tn
from msqnet.choices import TaskMode
from msqnet.decoder import ClassificationHead, DecoderConfig, DecoderLayer, TransformerDecoder, decode
from msqnet.encoder import EncodedVideo
from msqnet.exceptions import ConfigurationError, ContractViolation, ShapeError
from msqnet.tensor import Tensor, grad_check
from msqnet.tests import reference


class DecoderTestCase(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.cfg = DecoderConfig(layers=2, heads=2, d_model=8, ffn_width=16)
        self.decoder = TransformerDecoder(self.cfg, np.random.default_rng(8))

    def memory(self, batch=2, frames=4):
        return EncodedVideo(
            memory=Tensor(self.rng.standard_normal((batch, frames + 1, 8))),
            mem_pos=Tensor(self.rng.normal(0.0, 0.1, (frames + 1, 8))),
        )


class TestDecoderLayer(DecoderTestCase):
    """Single decoder updates"""

    def test_config_checks(self):
        with self.assertRaises(ConfigurationError):
            DecoderConfig(d_model=10, heads=4)
        with self.assertRaises(ConfigurationError):
            DecoderConfig(task_mode='regression')

    def test_shapes_and_attention_rows(self):
        Q_0 = Tensor(self.rng.standard_normal((2, 3, 8)))
        trace = self.decoder(Q_0, self.memory())
        self.assertEqual(len(trace.states), 3)
        self.assertEqual(trace.final.shape, (2, 3, 8))
        self.assertEqual(trace.attentions[0].shape, (2, 2, 3, 5))
        np.testing.assert_allclose(trace.attentions[1].sum(axis=-1), 1.0, atol=1e-9)

    def test_identical_memory_rows_collapse_cross_attention(self):
        row = self.rng.standard_normal(8)
        F = Tensor(np.tile(row, (1, 5, 1)))
        mem_pos = Tensor(self.rng.normal(0.0, 0.5, (5, 8)))
        attn = self.decoder.layers[0].cross_attn
        queries = Tensor(self.rng.standard_normal((1, 3, 8)))
        attended, weights = attn(queries, F + mem_pos, F)
        # keys still differ through mem_pos, so only the values are uniform
        self.assertFalse(np.allclose(weights.data, 0.2))
        expected = attn.out_proj(attn.v_proj(Tensor(row[None, None]))).data
        np.testing.assert_allclose(attended.data, np.broadcast_to(expected, (1, 3, 8)), atol=1e-10)

    def test_layer_matches_numpy_reference(self):
        layer = self.decoder.layers[0]
        Q = self.rng.standard_normal((2, 3, 8))
        pos = self.rng.normal(0.0, 0.1, (3, 8))
        memory = self.memory()
        out, _ = layer(Tensor(Q), memory, Tensor(pos))
        expected = reference.decoder_layer(Q, memory.memory.data, memory.mem_pos.data, pos, layer, heads=2)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_unbatched_queries_broadcast_over_memory(self):
        Q_0 = Tensor(self.rng.standard_normal((3, 8)))
        memory = EncodedVideo(memory=Tensor(self.rng.standard_normal((5, 8))))
        Q_1, weights = self.decoder.layers[0](Q_0, memory)
        self.assertEqual(Q_1.shape, (3, 8))
        self.assertEqual(weights.shape, (1, 2, 3, 5))

    def test_width_mismatch_is_rejected(self):
        memory = EncodedVideo(memory=Tensor(np.zeros((1, 5, 6))))
        with self.assertRaises(ShapeError):
            self.decoder.layers[0](Tensor(np.zeros((1, 3, 8))), memory)

    def test_class_permutation_equivariance(self):
        Q_0 = self.rng.standard_normal((2, 4, 8))
        pos = self.rng.standard_normal((4, 8))
        memory = self.memory()
        perm = np.array([2, 0, 3, 1])
        out = self.decoder(Tensor(Q_0), memory, Tensor(pos)).final.data
        permuted = self.decoder(Tensor(Q_0[:, perm]), memory, Tensor(pos[perm])).final.data
        np.testing.assert_allclose(permuted, out[:, perm], atol=1e-12)

    def test_zeroed_values_make_queries_ignore_memory(self):
        blind = TransformerDecoder(self.cfg, np.random.default_rng(8), zero_cross_values=True)
        Q_0 = Tensor(self.rng.standard_normal((1, 3, 8)))
        a = blind(Q_0, self.memory(batch=1)).final.data
        b = blind(Q_0, self.memory(batch=1)).final.data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_decode_matches_layer_loop(self):
        Q_0 = Tensor(self.rng.standard_normal((2, 3, 8)))
        memory = self.memory()
        trace = decode(Q_0, memory, self.decoder.layers)
        Q = Q_0
        for layer in self.decoder.layers:
            Q, _ = layer(Q, memory)
        np.testing.assert_array_equal(trace.final.data, Q.data)

    def test_decoder_gradients(self):
        Q_0 = Tensor(self.rng.standard_normal((1, 3, 8)), requires_grad=True)
        pos = Tensor(self.rng.normal(0.0, 0.1, (3, 8)), requires_grad=True)
        memory = EncodedVideo(
            memory=Tensor(self.rng.standard_normal((1, 5, 8)), requires_grad=True),
            mem_pos=Tensor(self.rng.normal(0.0, 0.1, (5, 8)), requires_grad=True),
        )
        single = TransformerDecoder(DecoderConfig(layers=1, heads=2, d_model=8, ffn_width=16),
                                    np.random.default_rng(9))

        def f():
            return tn.mean(tn.tanh(single(Q_0, memory, pos).final))

        params = {'Q_0': Q_0, 'query_pos': pos, 'memory': memory.memory, 'mem_pos': memory.mem_pos,
                  **dict(single.named_parameters())}
        report = grad_check(f, params, max_coords=5)
        self.assertTrue(report.passed, report.failures[:3])


class TestHeadAndLoss(SimpleTestCase):
    """Classification head and objectives"""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_per_class_head(self):
        head = ClassificationHead(3, 4, self.rng)
        Q_L = Tensor(self.rng.standard_normal((2, 3, 4)))
        logits = head.logits(Q_L).data
        expected = np.einsum('bkd,kd->bk', Q_L.data, head.W.data) + head.b.data
        np.testing.assert_allclose(logits, expected)

    def test_shared_head_scores_any_number_of_classes(self):
        head = ClassificationHead(3, 4, self.rng, shared=True)
        self.assertEqual(head.W.shape, (1, 4))
        logits = head.logits(Tensor(self.rng.standard_normal((2, 7, 4))))
        self.assertEqual(logits.shape, (2, 7))

    def test_per_class_head_rejects_other_class_counts(self):
        head = ClassificationHead(3, 4, self.rng)
        with self.assertRaises(ShapeError):
            head.logits(Tensor(np.zeros((2, 5, 4))))

    def test_multi_label_probabilities_are_independent_per_class(self):
        head = ClassificationHead(4, 6, self.rng)
        Q_L = Tensor(self.rng.standard_normal((3, 4, 6)))
        before = decoder.classify(Q_L, head, TaskMode.MULTI_LABEL).data
        head.W.data[1] += 0.7
        head.b.data[1] -= 1.3
        after = decoder.classify(Q_L, head, TaskMode.MULTI_LABEL).data
        others = [0, 2, 3]
        np.testing.assert_array_equal(after[:, others], before[:, others])
        self.assertTrue(np.all(after[:, 1] != before[:, 1]))
        single = decoder.classify(Q_L, head, TaskMode.SINGLE_LABEL).data
        head.b.data[1] += 1.3
        shifted = decoder.classify(Q_L, head, TaskMode.SINGLE_LABEL).data
        self.assertFalse(np.allclose(shifted[:, others], single[:, others]))

    def test_activation_per_task_mode(self):
        logits = Tensor(self.rng.standard_normal((2, 4)))
        np.testing.assert_allclose(decoder.activate(logits, TaskMode.SINGLE_LABEL).data.sum(axis=1), 1.0)
        multi = decoder.activate(logits, TaskMode.MULTI_LABEL).data
        np.testing.assert_allclose(multi, 1.0 / (1.0 + np.exp(-logits.data)))

    def test_binary_cross_entropy_at_zero_logits(self):
        value = decoder.loss(Tensor(np.zeros((2, 3))), np.array([[1, 0, 0], [0, 1, 1]]), TaskMode.MULTI_LABEL)
        self.assertAlmostEqual(value.item(), np.log(2.0), places=12)

    def test_binary_cross_entropy_matches_direct_formula(self):
        x = self.rng.standard_normal((4, 3))
        y = (self.rng.random((4, 3)) > 0.5).astype(float)
        p = 1.0 / (1.0 + np.exp(-x))
        expected = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        self.assertAlmostEqual(decoder.loss(Tensor(x), y, TaskMode.MULTI_LABEL).item(), expected, places=12)

    def test_categorical_cross_entropy(self):
        x = self.rng.standard_normal((3, 4))
        y = np.eye(4)[[0, 2, 3]]
        p = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
        expected = -np.mean(np.log(p[np.arange(3), [0, 2, 3]]))
        self.assertAlmostEqual(decoder.loss(Tensor(x), y, TaskMode.SINGLE_LABEL).item(), expected, places=12)

    def test_loss_contracts(self):
        with self.assertRaises(ContractViolation):
            decoder.loss(Tensor(np.zeros((1, 3))), np.array([[1, 1, 0]]), TaskMode.SINGLE_LABEL)
        with self.assertRaises(ContractViolation):
            decoder.loss(Tensor(np.zeros((1, 3))), np.array([[0.5, 0, 0]]), TaskMode.MULTI_LABEL)
        with self.assertRaises(ShapeError):
            decoder.loss(Tensor(np.zeros((1, 3))), np.zeros((1, 4)), TaskMode.MULTI_LABEL)

    def test_loss_gradients(self):
        logits = Tensor(self.rng.standard_normal((3, 4)), requires_grad=True)
        y = np.eye(4)[[1, 0, 3]]
        for mode in TaskMode.values:
            report = grad_check(lambda: decoder.loss(logits, y, mode), {'logits': logits})
            self.assertTrue(report.passed, (mode, report.failures))

    def test_decoder_layer_module(self):
        layer = DecoderLayer(8, 2, 16, self.rng)
        self.assertEqual(len(layer.named_parameters()), 3 * 2 + 2 * 4 * 2 + 2 * 2)

# msqnet/tests/test_tensor.py
import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from msqnet import tensor as tn
from msqnet.exceptions import NumericalError, ShapeError
from msqnet.tensor import Tape, Tensor, grad_check


def _param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestTape(SimpleTestCase):
    """Recording and replay of operations"""

    def test_nothing_recorded_outside_a_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = tn.exp(x)
        self.assertIsNone(y._tape)
        self.assertFalse(y.requires_grad)

    def test_constants_are_not_recorded(self):
        with Tape() as tape:
            tn.exp(Tensor(np.ones(3)))
        self.assertEqual(tape.entries, [])

    def test_backward_of_simple_product(self):
        a = Tensor([2.0, 3.0], requires_grad=True)
        b = Tensor([5.0, 7.0], requires_grad=True)
        with Tape() as tape:
            out = tn.sum(a * b)
            tape.backward(out)
        np.testing.assert_array_equal(a.grad, [5.0, 7.0])
        np.testing.assert_array_equal(b.grad, [2.0, 3.0])

    def test_gradients_accumulate_over_reuse(self):
        x = Tensor([1.5], requires_grad=True)
        with Tape() as tape:
            out = tn.sum(x * x + x)
            tape.backward(out)
        np.testing.assert_allclose(x.grad, [4.0])

    def test_non_scalar_root_needs_a_seed(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = tn.exp(x)
            with self.assertRaises(ShapeError):
                tape.backward(y)

    def test_root_from_another_tape_is_rejected(self):
        x = Tensor(np.ones(1), requires_grad=True)
        with Tape():
            y = tn.sum(tn.exp(x))
        with Tape() as other:
            with self.assertRaises(ValueError):
                other.backward(y)


class TestOps(SimpleTestCase):
    """Forward values and shape rules"""

    def test_trailing_broadcast_is_allowed(self):
        out = Tensor(np.zeros((2, 3))) + Tensor(np.arange(3.0))
        np.testing.assert_array_equal(out.data, [[0, 1, 2], [0, 1, 2]])

    def test_mismatched_shapes_raise_naming_both(self):
        with self.assertRaises(ShapeError) as ctx:
            Tensor(np.zeros((2, 3))) + Tensor(np.zeros(2))
        self.assertIn('(2, 3)', str(ctx.exception))
        self.assertIn('(2,)', str(ctx.exception))

    def test_matmul_inner_dimension_checked(self):
        with self.assertRaises(ShapeError):
            tn.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_matmul_matches_a_triple_loop(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        expected = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(tn.matmul(Tensor(a), Tensor(b)).data, expected, rtol=0, atol=1e-12)

    def test_matmul_is_bilinear(self):
        rng = np.random.default_rng(5)
        a, a2, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        alpha = 2.5
        np.testing.assert_allclose(
            tn.matmul(Tensor(alpha * a), Tensor(b)).data, alpha * tn.matmul(Tensor(a), Tensor(b)).data, atol=1e-12,
        )
        np.testing.assert_allclose(
            tn.matmul(Tensor(a + a2), Tensor(b)).data,
            tn.matmul(Tensor(a), Tensor(b)).data + tn.matmul(Tensor(a2), Tensor(b)).data,
            atol=1e-12,
        )

    def test_softplus_is_stable_for_large_inputs(self):
        out = tn.softplus(Tensor([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(out.data, [0.0, np.log(2.0), 1000.0])

    def test_sigmoid_is_stable_for_large_inputs(self):
        out = tn.sigmoid(Tensor([-1000.0, 1000.0]))
        np.testing.assert_array_equal(out.data, [0.0, 1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=1, max_value=6), st.integers(0, 2**31))
    def test_softmax_rows_sum_to_one(self, rows, cols, seed):
        x = Tensor(np.random.default_rng(seed).normal(0.0, 30.0, (rows, cols)))
        out = tn.softmax(x, axis=-1)
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)
        self.assertTrue(np.all(out.data >= 0))

    def test_log_softmax_matches_log_of_softmax(self):
        x = Tensor(np.random.default_rng(0).standard_normal((3, 5)))
        np.testing.assert_allclose(tn.log_softmax(x).data, np.log(tn.softmax(x).data), atol=1e-12)

    def test_layer_norm_standardises(self):
        x = Tensor(np.random.default_rng(1).normal(3.0, 2.0, (4, 8)))
        out = tn.layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8)))
        np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.data.std(axis=-1), 1.0, atol=1e-4)

    def test_check_finite_flags_overflow(self):
        tn.set_check_finite(True)
        try:
            with self.assertRaises(NumericalError):
                tn.exp(Tensor([1e4]))
        finally:
            tn.set_check_finite(False)


class TestGradCheck(SimpleTestCase):
    """Tape gradients against central differences"""

    def setUp(self):
        self.rng = np.random.default_rng(42)

    def test_dense_layer_with_nonlinearities(self):
        x = Tensor(self.rng.standard_normal((4, 5)))
        W = _param(self.rng, 3, 5)
        b = _param(self.rng, 3)

        def f():
            h = tn.gelu(tn.matmul(x, tn.transpose(W)) + b)
            return tn.mean(tn.tanh(h) * tn.sigmoid(h))

        report = grad_check(f, {'W': W, 'b': b})
        self.assertTrue(report.passed, report.failures)
        self.assertEqual(report.n_checked, 18)

    def test_attention_style_composition(self):
        q = _param(self.rng, 2, 3, 4)
        k = _param(self.rng, 2, 5, 4)
        gain = _param(self.rng, 4)
        bias = _param(self.rng, 4)

        def f():
            scores = tn.matmul(q, tn.swapaxes(k, -1, -2))
            mixed = tn.matmul(tn.softmax(scores, axis=-1), k)
            normed = tn.layer_norm(mixed, gain, bias)
            return tn.sum(tn.log_softmax(normed, axis=-1)[:, 0, :])

        report = grad_check(f, [q, k, gain, bias])
        self.assertTrue(report.passed, report.failures)

    def test_reshape_broadcast_concat_and_softplus(self):
        a = _param(self.rng, 1, 3)
        b = _param(self.rng, 2, 3)

        def f():
            wide = tn.broadcast_to(a, (2, 3))
            joined = tn.concat([wide, b], axis=0)
            return tn.mean(tn.softplus(tn.reshape(joined, (3, 4))))

        self.assertTrue(grad_check(f, {'a': a, 'b': b}).passed)

    def test_coordinate_sampling(self):
        W = _param(self.rng, 10, 10)

        def f():
            return tn.sum(tn.tanh(W))

        report = grad_check(f, {'W': W}, max_coords=7)
        self.assertEqual(report.n_checked, 7)

    def test_wrong_gradient_is_reported(self):
        x = _param(self.rng, 3)

        def backward_breaks(g):
            x._accumulate(2.0 * g)

        def f():
            # a hand-built op whose backward pass is off by a factor of two
            return tn.sum(tn._result('bad', x.data.copy(), (x,), backward_breaks))

        report = grad_check(f, {'x': x})
        self.assertFalse(report.passed)
        self.assertEqual(len(report.failures), 3)
        self.assertAlmostEqual(report.max_rel_error, 0.5, places=6)

    def test_step_outside_range_is_rejected(self):
        x = _param(self.rng, 2)
        with self.assertRaises(ValueError):
            grad_check(lambda: tn.sum(x), [x], h=1e-2)

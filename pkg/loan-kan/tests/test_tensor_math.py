# tests/test_tensor_math.py
import unittest
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from utils.errors import ShapeError
from utils.tensor_math import ACTIVATIONS, SeededRng, TensorMath, activation, matmul, rng_normal, rng_uniform


class TestMatmul(unittest.TestCase):

    def test_identity(self):
        out = matmul(np.eye(2), np.array([[3.0], [4.0]]))
        np.testing.assert_array_equal(out, [[3.0], [4.0]])

    def test_row_times_column(self):
        self.assertEqual(matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))[0, 0], 11.0)

    def test_matches_triple_loop(self):
        gen = SeededRng(7).generator
        a, b = gen.normal(size=(5, 7)), gen.normal(size=(7, 3))
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                for k in range(7):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(matmul(a, b), expected, atol=1e-12)

    def test_associativity(self):
        gen = SeededRng(8).generator
        a, b, c = gen.normal(size=(4, 6)), gen.normal(size=(6, 5)), gen.normal(size=(5, 3))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=1e-9)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestActivations(unittest.TestCase):

    def test_fixed_points(self):
        self.assertEqual(activation(0.0, 'sigmoid'), 0.5)
        self.assertEqual(activation(0.0, 'tanh'), 0.0)
        self.assertEqual(activation(-2.0, 'relu'), 0.0)
        self.assertEqual(activation(0.0, 'silu'), 0.0)

    def test_sigmoid_extremes_are_finite(self):
        low = activation(-1000.0, 'sigmoid')
        self.assertTrue(0.0 <= low <= 1e-300)
        self.assertEqual(activation(1000.0, 'sigmoid'), 1.0)
        self.assertTrue(np.all(np.isfinite(activation(np.array([-500.0, 500.0]), 'sigmoid'))))

    def test_sigmoid_symmetry(self):
        x = np.linspace(-30, 30, 61)
        np.testing.assert_allclose(activation(x, 'sigmoid') + activation(-x, 'sigmoid'), 1.0, atol=1e-12)

    def test_monotone(self):
        x = np.linspace(-10, 10, 401)
        for kind in ('sigmoid', 'tanh', 'relu'):
            self.assertTrue(np.all(np.diff(activation(x, kind)) >= 0), kind)

    def test_gradients_match_central_differences(self):
        x = np.array([-2.3, -0.4, 0.7, 1.9])
        h = 1e-6
        for kind in ACTIVATIONS:
            numeric = (activation(x + h, kind) - activation(x - h, kind)) / (2 * h)
            np.testing.assert_allclose(TensorMath.activation_grad(x, kind), numeric, atol=1e-7, err_msg=kind)

    def test_relu_grad_at_zero(self):
        self.assertEqual(TensorMath.activation_grad(0.0, 'relu'), 0.0)

    def test_unknown_kind(self):
        with self.assertRaises(ValueError):
            activation(1.0, 'softplus')


class TestSeededRng(unittest.TestCase):

    def test_zero_std(self):
        np.testing.assert_array_equal(rng_normal(SeededRng(1), 5, 2.5, 0.0), np.full(5, 2.5))

    def test_determinism(self):
        np.testing.assert_array_equal(rng_normal(SeededRng(42), 4), rng_normal(SeededRng(42), 4))

    def test_moments(self):
        draws = rng_normal(SeededRng(3), 100000)
        self.assertAlmostEqual(draws.mean(), 0.0, delta=0.02)
        self.assertAlmostEqual(draws.std(), 1.0, delta=0.02)

    def test_children_are_independent_and_stable(self):
        root = SeededRng(11)
        self.assertEqual(root.child('init').seed, SeededRng(11).child('init').seed)
        self.assertNotEqual(root.child('init').seed, root.child('shuffle').seed)
        first = root.generator.random()
        root.child('dropout')
        second = root.generator.random()
        np.testing.assert_array_equal([first, second], SeededRng(11).generator.random(2))

    def test_invalid_seed(self):
        with self.assertRaises(ValueError):
            SeededRng(-1)

    def test_uniform_range_and_shape(self):
        u = rng_uniform(SeededRng(6), (50, 3), -0.5, 2.0)
        self.assertEqual(u.shape, (50, 3))
        self.assertTrue(np.all((u >= -0.5) & (u < 2.0)))
        np.testing.assert_array_equal(u, rng_uniform(SeededRng(6), (50, 3), -0.5, 2.0))

    def test_glorot_limits(self):
        w = TensorMath.glorot_uniform(SeededRng(5), 4, 6)
        self.assertEqual(w.shape, (4, 6))
        self.assertTrue(np.all(np.abs(w) <= np.sqrt(6.0 / 10.0)))


if __name__ == '__main__':
    unittest.main()

# tests/test_verification.py
import unittest
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from core.model import init_params
from core.training import backward
from core.verification import GradientVerifier, gradient_check
from utils.data_models import CellKind, MaskedBatch
from utils.tensor_math import SeededRng

SEEDS = range(5)


class TestGradientCheck(unittest.TestCase):

    def setUp(self):
        self.verifier = GradientVerifier()

    def test_lstm_kan(self):
        report = self.verifier.gradient_check('lstm_kan', seed=0)
        self.assertLessEqual(report.max_rel_error, 1e-4, report.worst_tensor)
        self.assertTrue(report.passed)

    def test_gru_kan(self):
        report = self.verifier.gradient_check('gru_kan', seed=0)
        self.assertLessEqual(report.max_rel_error, 1e-4, report.worst_tensor)

    def test_kan_scales_across_seeds_and_spline_orders(self):
        for scale in ('lstm_kan', 'gru_kan'):
            for order in (2, 3):
                for seed in SEEDS:
                    with self.subTest(scale=scale, order=order, seed=seed):
                        report = self.verifier.gradient_check(scale, seed, spline_order=order)
                        self.assertEqual(report.spline_order, order)
                        self.assertGreater(report.gradient_norm, 0.0)
                        self.assertLessEqual(report.max_rel_error, 1e-4, report.worst_tensor)
                        self.assertTrue(report.passed)

    def test_plain_cells_across_seeds(self):
        for scale in ('lstm', 'gru'):
            for seed in SEEDS:
                with self.subTest(scale=scale, seed=seed):
                    report = self.verifier.gradient_check(scale, seed)
                    self.assertTrue(report.passed, f"{report.worst_tensor} {report.max_rel_error:.2e}")
                    self.assertFalse(any(name.startswith('kan') for name in report.per_tensor))

    def test_head_gradients_are_live(self):
        # the dense ReLUs must carry gradient into every layer below them
        for seed in SEEDS:
            spec = GradientVerifier.tiny_spec(CellKind.GRU, True)
            rng = SeededRng(seed)
            params = init_params(spec, rng.child('init'))
            GradientVerifier._randomize(params, rng.child('perturb'))
            batch = GradientVerifier.tiny_batch(rng.child('batch'))
            grads = backward(spec, params, batch, np.array([1.0, 0.0]), SeededRng(rng.child('dropout').seed))
            for name in ('head.b', 'dense.W', 'kan0.coeffs', 'rnn1.W_z'):
                self.assertGreater(np.abs(grads[name]).max(), 0.0, f"seed {seed} {name}")

    def test_dense_head(self):
        for seed in SEEDS:
            report = self.verifier.gradient_check('dense_head', seed=seed)
            self.assertLessEqual(report.max_rel_error, 1e-6)
            self.assertEqual(set(report.per_tensor), {'W', 'b'})

    def test_every_trainable_entry_is_checked(self):
        report = gradient_check(scale='gru_kan', seed=3)
        spec = GradientVerifier.tiny_spec(CellKind.GRU, True)
        expected = sum(arr.size for arr in init_params(spec, SeededRng(0)).named_tensors().values())
        self.assertEqual(report.checked, expected)
        self.assertIn('kan0.coeffs', report.per_tensor)
        self.assertIn('bn.gamma', report.per_tensor)

    def test_relative_error_floor(self):
        err = self.verifier._relative_error(np.array([0.0, 1.0]), np.array([1e-12, 1.0 + 1e-9]))
        self.assertLess(err.max(), 1e-3)
        tiny = self.verifier._relative_error(np.array([-6.32e-9]), np.array([-6.317e-9]))
        self.assertLess(tiny.max(), 1e-4)

    def test_zero_gradient_never_passes(self):
        report = self.verifier.gradient_check('gru', seed=0)
        report.gradient_norm = 0.0
        self.assertFalse(report.passed)

    def test_unknown_scale(self):
        with self.assertRaises(ValueError):
            self.verifier.gradient_check('transformer')


class TestMaskedSteps(unittest.TestCase):

    def test_padded_features_do_not_change_gradients(self):
        for cell in (CellKind.LSTM, CellKind.GRU):
            spec = GradientVerifier.tiny_spec(cell, True)
            rng = SeededRng(4)
            params = init_params(spec, rng.child('init'))
            GradientVerifier._randomize(params, rng.child('perturb'))
            batch = GradientVerifier.tiny_batch(rng.child('batch'))
            noisy = MaskedBatch(batch.features.copy(), batch.mask)
            # written after construction: the layers must ignore padded values
            noisy.features[~noisy.mask] = np.array([7.5, -3.0, 12.0, 0.25])
            labels = np.array([1.0, 0.0])
            dropout_seed = rng.child('dropout').seed

            clean = backward(spec, params, batch, labels, SeededRng(dropout_seed))
            padded = backward(spec, params, noisy, labels, SeededRng(dropout_seed))
            for name in clean:
                np.testing.assert_array_equal(clean[name], padded[name], err_msg=f"{cell} {name}")


if __name__ == '__main__':
    unittest.main()

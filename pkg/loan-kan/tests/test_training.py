# tests/test_training.py
import unittest
import sys
import os
import tempfile
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pandas as pd

from config.experiment_schema import TrainConfig
from core.artifact_store import save_params
from core.layers import DenseParams
from core.model import ModelSpec, init_params
from core.training import OptimizerState, Trainer, _batch_indices, backward, bce_loss, optimizer_step, predict
from utils.data_models import CellKind, MaskedBatch, Sample
from utils.errors import SamplingError, ShapeError
from utils.tensor_math import SeededRng


def toy_samples(n=40, length=5, dim=4, seed=0):
    """Class 1 rows drift upward in the first feature; some sequences are shorter"""
    gen = SeededRng(seed).generator
    samples = []
    for i in range(n):
        label = i % 2
        real = length - (i % 3 == 0)
        features = np.zeros((length, dim))
        features[:real] = gen.normal(0.0, 0.3, (real, dim))
        features[:real, 0] += np.linspace(0.0, 1.5, real) * (1 if label else -1)
        mask = np.arange(length) < real
        samples.append(Sample(features, mask, label, f"L{i:03d}", 2019))
    return samples


def small_spec(cell_kind=CellKind.GRU, use_kan=True, dropout_rate=0.0):
    return ModelSpec(cell_kind=cell_kind, input_dim=4, use_kan=use_kan, rnn1_units=4, rnn2_units=3,
                     kan_num_functions=6, dense_units=4, dropout_rate=dropout_rate)


class TestLoss(unittest.TestCase):

    def test_half_probability(self):
        self.assertAlmostEqual(bce_loss([0.5], [1]).value, np.log(2.0), places=12)

    def test_near_perfect(self):
        self.assertAlmostEqual(bce_loss([1 - 1e-12], [1]).value, 1e-12, delta=1e-13)

    def test_scalar_loop(self):
        gen = SeededRng(1).generator
        p, y = gen.uniform(0.01, 0.99, 100), gen.integers(0, 2, 100)
        expected = sum(-(yi * np.log(pi) + (1 - yi) * np.log(1 - pi)) for pi, yi in zip(p, y)) / 100
        loss = bce_loss(p, y)
        self.assertAlmostEqual(loss.value, expected, places=12)
        self.assertEqual(loss.sample_count, 100)

    def test_clipping_keeps_loss_finite(self):
        self.assertTrue(np.isfinite(bce_loss([0.0, 1.0], [1, 0]).value))

    def test_empty_and_mismatch(self):
        with self.assertRaises(ShapeError):
            bce_loss([], [])
        with self.assertRaises(ShapeError):
            bce_loss([0.5, 0.5], [1])


class TestBackward(unittest.TestCase):

    def setUp(self):
        self.spec = small_spec()
        self.params = init_params(self.spec, SeededRng(2))
        self.samples = toy_samples(6)
        self.batch = MaskedBatch(np.stack([s.features for s in self.samples]),
                                 np.stack([s.mask for s in self.samples]))
        self.labels = np.array([s.label for s in self.samples], dtype=float)

    def test_unused_input_column_has_zero_gradient(self):
        features = self.batch.features.copy()
        features[:, :, 2] = 0.0
        grads = backward(self.spec, self.params, MaskedBatch(features, self.batch.mask), self.labels)
        for gate in ('z', 'r', 'h'):
            np.testing.assert_array_equal(grads[f'rnn1.W_{gate}'][:, 2], 0.0)

    def test_duplicated_batch_gives_same_gradient(self):
        single = backward(self.spec, self.params, self.batch, self.labels)
        doubled = MaskedBatch(np.concatenate([self.batch.features] * 2), np.concatenate([self.batch.mask] * 2))
        double = backward(self.spec, self.params, doubled, np.concatenate([self.labels] * 2))
        for name in single:
            np.testing.assert_allclose(double[name], single[name], atol=1e-10, err_msg=name)

    def test_permutation_invariance(self):
        order = np.array([3, 0, 5, 1, 4, 2])
        base = backward(self.spec, self.params, self.batch, self.labels)
        permuted = backward(self.spec, self.params, self.batch.subset(order), self.labels[order])
        for name in base:
            np.testing.assert_allclose(permuted[name], base[name], atol=1e-10, err_msg=name)

    def test_gradient_names_cover_parameters(self):
        grads = backward(self.spec, self.params, self.batch, self.labels)
        self.assertEqual(set(grads), set(self.params.named_tensors()))


class TestOptimizer(unittest.TestCase):

    def _layer(self):
        return DenseParams(np.array([[0.5, -1.0]]), np.array([0.25]))

    def test_zero_gradient_is_fixed_point(self):
        layer = self._layer()
        state = OptimizerState()
        optimizer_step(state, layer, layer.zero_grads())
        np.testing.assert_array_equal(layer.W, [[0.5, -1.0]])
        self.assertEqual(state.step, 1)

    def test_first_step(self):
        layer = self._layer()
        state = OptimizerState(learning_rate=0.01)
        g = {'W': np.array([[0.2, -3.0]]), 'b': np.array([1e-3])}
        optimizer_step(state, layer, g)
        expected = np.array([[0.5, -1.0]]) - 0.01 * g['W'] / (np.abs(g['W']) + state.eps_opt)
        np.testing.assert_allclose(layer.W, expected, atol=1e-14)

    def test_constant_gradient_step_approaches_learning_rate(self):
        layer = self._layer()
        state = OptimizerState(learning_rate=0.01)
        g = {'W': np.array([[0.7, -0.03]]), 'b': np.array([2.0])}
        for _ in range(200):
            before = layer.W.copy()
            optimizer_step(state, layer, g)
        np.testing.assert_allclose(np.abs(layer.W - before), 0.01, rtol=1e-4)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            optimizer_step(OptimizerState(), self._layer(), {'W': np.zeros((2, 2)), 'b': np.zeros(1)})


class TestTrainer(unittest.TestCase):

    def test_batches_never_end_with_a_single_row(self):
        batches = _batch_indices(np.arange(9), 4)
        self.assertEqual([len(b) for b in batches], [4, 5])
        self.assertEqual(sorted(np.concatenate(batches)), list(range(9)))

    def test_every_row_lands_in_exactly_one_batch(self):
        for n, size, lengths in ((5, 4, [5]), (257, 256, [257]), (13, 4, [4, 4, 5]), (8, 4, [4, 4])):
            order = SeededRng(n).generator.permutation(n)
            batches = _batch_indices(order, size)
            self.assertEqual([len(b) for b in batches], lengths, n)
            np.testing.assert_array_equal(np.concatenate(batches), order)

    def test_trailing_single_row_trains(self):
        cfg = TrainConfig(epochs=1, batch_size=4, validation_fraction=0.0, seed=2)
        _, trace = Trainer(cfg).train(small_spec(), toy_samples(5))
        self.assertEqual(trace.epochs, [1])
        self.assertTrue(np.isfinite(trace.train_loss[0]))

    def test_zero_epochs_returns_initialization(self):
        spec = small_spec()
        cfg = TrainConfig(epochs=0, seed=5)
        params, trace = Trainer(cfg).train(spec, toy_samples(10))
        expected = init_params(spec, SeededRng(5).child('init'))
        for name, arr in expected.named_tensors().items():
            np.testing.assert_array_equal(params.named_tensors()[name], arr)
        self.assertEqual(trace.epochs, [])

    def test_single_class_rejected(self):
        samples = [s for s in toy_samples(10) if s.label == 1]
        with self.assertRaises(SamplingError):
            Trainer(TrainConfig(epochs=1)).train(small_spec(), samples)

    def test_loss_decreases_on_separable_windows(self):
        samples = toy_samples(40)
        cfg = TrainConfig(epochs=5, batch_size=40, learning_rate=5e-3, validation_fraction=0.0, seed=3)
        _, trace = Trainer(cfg).train(small_spec(), samples)
        self.assertEqual(len(trace.train_loss), 5)
        self.assertTrue(all(b < a for a, b in zip(trace.train_loss, trace.train_loss[1:])), trace.train_loss)

    def test_same_seed_gives_identical_parameter_files(self):
        cfg = TrainConfig(epochs=3, batch_size=8, validation_fraction=0.2, seed=11)
        spec = small_spec(CellKind.LSTM, dropout_rate=0.3)
        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for run in range(2):
                params, _ = Trainer(cfg).train(spec, toy_samples(30))
                paths.append(save_params(spec, params, os.path.join(tmp, f'run{run}.json')))
            with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
                self.assertEqual(a.read(), b.read())

    def test_trace_file(self):
        cfg = TrainConfig(epochs=2, batch_size=8, seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'trace.csv')
            _, trace = Trainer(cfg).train(small_spec(use_kan=False), toy_samples(20), trace_path=path)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['epoch', 'train_loss', 'val_loss', 'elapsed_ms'])
        self.assertEqual(len(frame), len(trace.epochs))
        self.assertIn(trace.best_epoch, trace.epochs)

    def test_predict_handles_mixed_lengths(self):
        spec = small_spec()
        samples = toy_samples(7)
        params = init_params(spec, SeededRng(0))
        probs = predict(spec, params, samples, batch_size=3)
        self.assertEqual(probs.shape, (7,))
        self.assertTrue(np.all((probs > 0) & (probs < 1)))

    def test_predict_without_samples(self):
        spec = small_spec()
        probs = predict(spec, init_params(spec, SeededRng(0)), [])
        self.assertEqual(probs.shape, (0,))


if __name__ == '__main__':
    unittest.main()

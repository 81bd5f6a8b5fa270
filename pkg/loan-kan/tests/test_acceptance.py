# tests/test_acceptance.py
"""Long-running end-to-end checks. Enable with LOANKAN_SLOW_TESTS=1."""
import unittest
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from config.experiment_schema import load_experiment_config
from config.settings import Config
from core.experiments import ExperimentRunner
from core.layers import KanLayerParams, kan_layer_backward, kan_layer_forward
from core.reports import aggregate_trials
from core.training import OptimizerState, optimizer_step
from utils.tensor_math import SeededRng

SMALL_STACK = {'rnn1_units': 32, 'rnn2_units': 16, 'dense_units': 16}


@unittest.skipUnless(Config.SLOW_TESTS, "set LOANKAN_SLOW_TESTS=1 to run")
class TestAcceptance(unittest.TestCase):

    def test_single_edge_fits_sine(self):
        x = np.linspace(-1.0, 1.0, 201)[:, None]
        y = np.sin(3.0 * x)
        edge = KanLayerParams.initialize(1, 1, SeededRng(0), num_functions=10, grid_lo=-1.0, grid_hi=1.0)
        state = OptimizerState(learning_rate=0.02)
        for _ in range(2000):
            out, cache = kan_layer_forward(edge, x)
            grads = edge.zero_grads()
            kan_layer_backward(edge, 2.0 * (out - y) / len(x), cache, grads)
            optimizer_step(state, edge, grads)
        out, _ = kan_layer_forward(edge, x)
        self.assertLessEqual(float(np.mean((out - y) ** 2)), 1e-3)

    def test_gru_kan_separates_synthetic_defaults(self):
        cfg = load_experiment_config(
            scenario='single', window=[15, 0, 3], models=['GRU-KAN'], trials=1,
            source={'kind': 'synthetic', 'generator': {'n_loans': 6700, 'signal_strength': 1.0}},
            train={'epochs': 50}, architecture=SMALL_STACK)
        runner = ExperimentRunner(cfg)
        data = runner.prepare_point(runner.points()[0])
        result = runner.run_trial(data, 'GRU-KAN', 0)
        self.assertGreaterEqual(result.metrics.auc, 0.90)

    def test_auc_degrades_with_interval(self):
        cfg = load_experiment_config(os.path.join(Config.EXPERIMENTS_DIR, 'interval_sweep.json'),
                                     intervals=[0, 3, 6], trials=5, models=['GRU-KAN'])
        runner = ExperimentRunner(cfg)
        results, _ = runner.run_points(runner.points())
        agg = aggregate_trials(results)
        means = [agg.value(f'g={g}', 'GRU-KAN', 'auc') for g in (0, 3, 6)]
        self.assertTrue(all(b <= a for a, b in zip(means, means[1:])), means)
        self.assertGreaterEqual(means[0] - means[2], 0.02, means)


if __name__ == '__main__':
    unittest.main()

# tests/test_reports.py
import unittest
import sys
import os
import json
import tempfile
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pandas as pd

from core.reports import aggregate_trials, emit_reports, load_trials, summarize, trials_frame
from utils.data_models import METRIC_NAMES, MetricsReport, TrialResult


def result(point, model, trial, auc, order=0):
    metrics = MetricsReport(accuracy=auc - 0.1, precision=0.5, recall=0.5, f1=0.5, auc=auc)
    return TrialResult(point=point, model=model, trial=trial, seed=100 + trial, metrics=metrics,
                       elapsed_ms=10.0 * trial, point_order=order)


def grid():
    """2 points x 2 models x 2 trials"""
    out = []
    for order, point in enumerate(['x=12', 'x=15']):
        for model in ('GRU-KAN', 'LSTM'):
            for trial in range(2):
                out.append(result(point, model, trial, 0.6 + 0.1 * order + 0.05 * trial, order))
    return out


class TestAggregate(unittest.TestCase):

    def test_mean_best_std(self):
        agg = aggregate_trials([result('p', 'GRU', 0, 0.9), result('p', 'GRU', 1, 0.8)])
        self.assertAlmostEqual(agg.value('p', 'GRU', 'auc'), 0.85)
        self.assertAlmostEqual(agg.value('p', 'GRU', 'auc', 'best'), 0.9)
        self.assertAlmostEqual(agg.value('p', 'GRU', 'auc', 'std'), 0.0707106781, places=8)

    def test_single_trial_has_zero_std(self):
        agg = aggregate_trials([result('p', 'GRU', 0, 0.9)])
        self.assertEqual(agg.value('p', 'GRU', 'auc', 'std'), 0.0)

    def test_columns(self):
        agg = aggregate_trials(grid())
        expected = ['point_order', 'point', 'model']
        for metric in METRIC_NAMES:
            expected += [f'{metric}_mean', f'{metric}_best', f'{metric}_std']
        expected.append('trials')
        self.assertEqual(list(agg.table.columns), expected)
        self.assertEqual(len(agg.table), 4)
        self.assertTrue((agg.table['trials'] == 2).all())

    def test_best_is_max_of_trials(self):
        results = grid()
        agg = aggregate_trials(results)
        trials = trials_frame(results)
        for (point, model), group in trials.groupby(['point', 'model']):
            self.assertEqual(agg.value(point, model, 'auc', 'best'), group['auc'].max())

    def test_missing_cell(self):
        with self.assertRaises(KeyError):
            aggregate_trials(grid()).value('x=99', 'GRU', 'auc')

    def test_trials_frame_ordered_by_sweep_position(self):
        frame = trials_frame(list(reversed(grid())))
        self.assertEqual(list(frame['point'][:4]), ['x=12'] * 4)
        self.assertEqual(list(frame['trial'][:2]), [0, 1])

    def test_summary_lists_every_cell(self):
        text = summarize(aggregate_trials(grid()), ['auc'])
        self.assertEqual(len(text.splitlines()), 4)
        self.assertIn('GRU-KAN', text)


class TestEmitReports(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.results = grid()
        self.paths = emit_reports(aggregate_trials(self.results), self.results, self.tmp.name,
                                  axis={'x=12': 15, 'x=15': 18}, axis_name='total_months',
                                  manifest={'base_seed': 1})

    def tearDown(self):
        self.tmp.cleanup()

    def test_trial_rows(self):
        trials = load_trials(self.paths['trials'])
        self.assertEqual(len(trials), 8)
        self.assertEqual(list(trials.columns[:5]), ['point', 'model', 'trial', 'seed', 'accuracy'])

    def test_plot_files(self):
        for metric in METRIC_NAMES:
            plot = pd.read_csv(self.paths[f'plot_{metric}'])
            self.assertEqual(list(plot.columns), ['total_months', 'point', 'GRU-KAN', 'LSTM'])
            self.assertEqual(list(plot['total_months']), [15, 18])
        auc = pd.read_csv(self.paths['plot_auc'])
        self.assertAlmostEqual(auc.loc[1, 'LSTM'], 0.725)

    def test_timings_and_manifest(self):
        timings = pd.read_csv(self.paths['timings'])
        self.assertEqual(list(timings.columns), ['point', 'model', 'trial', 'elapsed_ms'])
        with open(self.paths['manifest'], encoding='utf-8') as f:
            self.assertEqual(json.load(f), {'base_seed': 1})

    def test_unix_line_endings(self):
        with open(self.paths['aggregate'], 'rb') as f:
            self.assertNotIn(b'\r\n', f.read())

    def test_aggregate_file_columns(self):
        aggregate = pd.read_csv(self.paths['aggregate'])
        self.assertEqual(list(aggregate.columns[:3]), ['point', 'model', 'accuracy_mean'])
        self.assertEqual(aggregate.columns[-1], 'trials')


class TestSinglePointReports(unittest.TestCase):

    def test_window_axis(self):
        results = [result('x=9,g=0,y=3', 'GRU-KAN', t, 0.7 + 0.1 * t) for t in range(2)]
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_reports(aggregate_trials(results), results, tmp,
                                 axis={'x=9,g=0,y=3': 'x=9,g=0,y=3'}, axis_name='window')
            plot = pd.read_csv(paths['plot_auc'])
        self.assertEqual(list(plot.columns), ['window', 'point', 'GRU-KAN'])
        self.assertAlmostEqual(plot.loc[0, 'GRU-KAN'], 0.75)

    def test_point_axis_is_not_duplicated(self):
        results = [result('only', 'LSTM', 0, 0.8)]
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_reports(aggregate_trials(results), results, tmp, axis_name='point')
            plot = pd.read_csv(paths['plot_auc'])
            self.assertTrue(os.path.exists(paths['aggregate']))
        self.assertEqual(list(plot.columns), ['point', 'LSTM'])


if __name__ == '__main__':
    unittest.main()

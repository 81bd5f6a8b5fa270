# core/reports.py
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from utils.data_models import METRIC_NAMES, TrialResult

logger = logging.getLogger(__name__)

TRIALS_FILE = 'trials.csv'
TIMINGS_FILE = 'timings.csv'
AGGREGATE_FILE = 'aggregate.csv'
MANIFEST_FILE = 'manifest.json'


@dataclass
class AggregateReport:
    """mean, best (max) and sample std of every metric per (point, model)"""
    table: pd.DataFrame

    def value(self, point: str, model: str, metric: str, stat: str = 'mean') -> float:
        row = self.table[(self.table['point'] == point) & (self.table['model'] == model)]
        if row.empty:
            raise KeyError(f"No aggregate for point {point!r}, model {model!r}")
        return float(row.iloc[0][f'{metric}_{stat}'])


def trials_frame(results: Sequence[TrialResult]) -> pd.DataFrame:
    """One row per (point, model, trial), ordered by sweep position, model and trial"""
    rows = []
    for r in results:
        row = {'point_order': r.point_order, 'point': r.point, 'model': r.model, 'trial': r.trial, 'seed': r.seed}
        row.update(r.metrics.as_dict())
        counts = r.metrics.counts
        if counts is not None:
            row.update({'tp': counts.tp, 'fp': counts.fp, 'tn': counts.tn, 'fn': counts.fn})
        row['precision_defined'] = r.metrics.precision_defined
        row['recall_defined'] = r.metrics.recall_defined
        rows.append(row)
    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    return frame.sort_values(['point_order', 'model', 'trial'], kind='mergesort').reset_index(drop=True)


def aggregate_trials(results: Sequence[TrialResult]) -> AggregateReport:
    """Sample std uses n - 1 and is 0 for a single trial"""
    frame = trials_frame(results)
    grouped = frame.groupby(['point_order', 'point', 'model'], sort=True)[list(METRIC_NAMES)]
    stats = {'mean': grouped.mean(), 'best': grouped.max(), 'std': grouped.std(ddof=1).fillna(0.0)}
    columns = {}
    for metric in METRIC_NAMES:
        for stat in ('mean', 'best', 'std'):
            columns[f'{metric}_{stat}'] = stats[stat][metric]
    table = pd.DataFrame(columns).reset_index()
    table['trials'] = grouped.size().to_numpy()
    return AggregateReport(table)


def emit_reports(agg: AggregateReport, results: Sequence[TrialResult], out_dir: str,
                 axis: Optional[Dict[str, Any]] = None, axis_name: str = 'point',
                 manifest: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
    """
    Write per-trial, timing, aggregate and per-metric plot-data CSVs plus the
    run manifest. `axis` maps each point label to its plot x value; with
    axis_name 'point' the label column doubles as the x column.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    trials = trials_frame(results)
    paths['trials'] = os.path.join(out_dir, TRIALS_FILE)
    trials.drop(columns=['point_order']).to_csv(paths['trials'], index=False, lineterminator='\n')

    timings = pd.DataFrame([{'point': r.point, 'model': r.model, 'trial': r.trial, 'elapsed_ms': r.elapsed_ms}
                            for r in results])
    paths['timings'] = os.path.join(out_dir, TIMINGS_FILE)
    timings.to_csv(paths['timings'], index=False, lineterminator='\n')

    paths['aggregate'] = os.path.join(out_dir, AGGREGATE_FILE)
    agg.table.drop(columns=['point_order']).to_csv(paths['aggregate'], index=False, lineterminator='\n')

    axis = axis or {}
    models = list(dict.fromkeys(agg.table['model']))
    for metric in METRIC_NAMES:
        plot = agg.table.pivot(index=['point_order', 'point'], columns='model', values=f'{metric}_mean')
        plot = plot.reindex(columns=models).reset_index()
        if axis_name != 'point':
            plot.insert(0, axis_name, [axis.get(p, p) for p in plot['point']])
        paths[f'plot_{metric}'] = os.path.join(out_dir, f'plot_{metric}.csv')
        plot.drop(columns=['point_order']).to_csv(paths[f'plot_{metric}'], index=False, lineterminator='\n')

    if manifest is not None:
        paths['manifest'] = os.path.join(out_dir, MANIFEST_FILE)
        with open(paths['manifest'], 'w', encoding='utf-8') as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=str)

    logger.info(f"Reports written to {out_dir}: {len(results)} trial rows, {len(agg.table)} aggregate rows")
    return paths


def load_trials(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def summarize(agg: AggregateReport, metrics: List[str] = None) -> str:
    """Plain-text mean (best, std) table for terminal output"""
    metrics = metrics or list(METRIC_NAMES)
    lines = []
    for _, row in agg.table.iterrows():
        cells = [f"{m} {row[f'{m}_mean']:.4f} ({row[f'{m}_best']:.4f}, {row[f'{m}_std']:.4f})" for m in metrics]
        lines.append(f"{row['point']:>16}  {row['model']:<9} " + "  ".join(cells))
    return "\n".join(lines)

# core/experiments.py
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import metadata
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from config.experiment_schema import ExperimentConfig, FreddieSource
from config.model_config import ModelConfig
from config.settings import Config
from core.artifact_store import fingerprint_file, fingerprint_json, fingerprint_samples
from core.data_pipeline import (FEATURE_DIM, assemble_sequences, build_windows, sample_labels, standardize,
                                take_records, undersample, window_statistics)
from core.loan_simulator import LoanSimulator
from core.metrics import evaluate
from core.model import ModelSpec
from core.performance_parser import PerformanceParser, load_column_map
from core.reports import AggregateReport, aggregate_trials, emit_reports
from core.training import Trainer, predict
from utils.data_models import DatasetSplit, LoanSequence, Sample, Scenario, TrialResult, WindowSpec
from utils.errors import ExperimentError, OOTViolationError
from utils.tensor_math import SeededRng

logger = logging.getLogger(__name__)

AXIS_NAMES = {
    Scenario.WINDOW_SWEEP: 'total_months',
    Scenario.INTERVAL_SWEEP: 'gap',
    Scenario.SAMPLE_SIZE_SWEEP: 'records',
    Scenario.COHORT_GENERALIZATION: 'cohorts',
    Scenario.SINGLE: 'window',
}


@dataclass
class SweepPoint:
    label: str
    order: int
    axis: Any
    window: WindowSpec
    train_year: int
    test_year: int
    budget: Optional[int] = None


@dataclass
class PointData:
    point: SweepPoint
    train: List[Sample]
    test: List[Sample]
    statistics: Dict[str, Dict[str, float]] = field(default_factory=dict)
    fingerprints: Dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentOutcome:
    results: List[TrialResult]
    aggregate: AggregateReport
    paths: Dict[str, str]


class ExperimentRunner:
    """
    Seeded multi-trial comparison of models over the points of one scenario.

    Windows are built once per point. Each trial t uses seed base_seed + t:
    it re-draws the balanced train and test sets, standardizes on train,
    trains every model and scores it on the later cohort.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._sequence_cache: Dict[tuple, List[LoanSequence]] = {}
        self._inputs: Dict[str, str] = {}

    # ------------------------------------------------------------------ points

    def points(self) -> List[SweepPoint]:
        cfg = self.cfg
        train_year, test_year = cfg.source.train_year, cfg.source.test_year
        y = cfg.obs_len
        scenario = cfg.scenario
        if scenario == Scenario.WINDOW_SWEEP:
            return [SweepPoint(f"x={x}", i, x + y, WindowSpec(x, 0, y), train_year, test_year, cfg.max_records)
                    for i, x in enumerate(cfg.window_lengths)]
        if scenario == Scenario.INTERVAL_SWEEP:
            out = []
            for i, g in enumerate(cfg.intervals):
                x = cfg.interval_total - g
                if x < 1:
                    raise ExperimentError(f"Interval g={g} leaves no feature months within {cfg.interval_total}")
                out.append(SweepPoint(f"g={g}", i, g, WindowSpec(x, g, y), train_year, test_year, cfg.max_records))
            return out
        if scenario == Scenario.SAMPLE_SIZE_SWEEP:
            window = WindowSpec(*(cfg.window or ModelConfig.WINDOWS['sample_size']))
            return [SweepPoint(f"records={b}", i, b, window, train_year, test_year, b)
                    for i, b in enumerate(cfg.budgets())]
        if scenario == Scenario.COHORT_GENERALIZATION:
            window = WindowSpec(*(cfg.window or ModelConfig.WINDOWS['cohort']))
            return [SweepPoint(f"{a}→{b}", i, f"{a}→{b}", window, a, b, cfg.cohort_budget())
                    for i, (a, b) in enumerate(cfg.cohort_pairs)]
        window = WindowSpec(*(cfg.window or ModelConfig.WINDOWS['single']))
        label = "x={},g={},y={}".format(*window.as_tuple())
        return [SweepPoint(label, 0, label, window, train_year, test_year, cfg.max_records)]

    # -------------------------------------------------------------------- data

    def _max_budget(self) -> Optional[int]:
        if self.cfg.scenario == Scenario.SAMPLE_SIZE_SWEEP:
            return max(self.cfg.budgets())
        if self.cfg.scenario == Scenario.COHORT_GENERALIZATION:
            return self.cfg.cohort_budget()
        return self.cfg.max_records

    def cohort_sequences(self, year: int, window: WindowSpec, budget: Optional[int]) -> List[LoanSequence]:
        """All sequences of one cohort, limited to the first `budget` records"""
        source = self.cfg.source
        if isinstance(source, FreddieSource):
            key = ('freddie', year, budget)
            if key not in self._sequence_cache:
                self._sequence_cache[key] = self._read_cohort(source, year, budget)
            return self._sequence_cache[key]

        gen = source.generator
        max_budget = self._max_budget()
        n_loans = gen.n_loans if max_budget is None else max(gen.n_loans, math.ceil(max_budget / gen.seq_len_range[0]))
        gen_cfg = gen.model_copy(update={'year': year, 'window': window.as_tuple(), 'n_loans': n_loans})
        key = ('synthetic', year, window.as_tuple(), n_loans)
        if key not in self._sequence_cache:
            self._sequence_cache[key] = LoanSimulator(gen_cfg).generate()
            self._inputs[f'synthetic_{year}_{"_".join(map(str, window.as_tuple()))}'] = fingerprint_json(
                gen_cfg.model_dump(mode='json'))
        seqs = self._sequence_cache[key]
        return take_records(seqs, budget) if budget is not None else seqs

    def _read_cohort(self, source: FreddieSource, year: int, budget: Optional[int]) -> List[LoanSequence]:
        if year not in source.cohorts:
            raise ExperimentError(f"Missing cohort data for {year}; configured cohorts: {sorted(source.cohorts)}")
        parser = PerformanceParser(load_column_map(source.column_map) if source.column_map else None)
        records, remaining = [], budget
        for path in source.cohorts[year]:
            if remaining is not None and remaining <= 0:
                break
            parsed, report = parser.parse_file(path, remaining)
            records.extend(parsed)
            if remaining is not None:
                remaining -= report.lines_read
            self._inputs[path] = fingerprint_file(path)
        return assemble_sequences(records)

    def prepare_point(self, point: SweepPoint) -> PointData:
        if point.train_year == point.test_year:
            raise OOTViolationError(f"{point.label}: training and test cohorts are both {point.train_year}")
        train_seqs = self.cohort_sequences(point.train_year, point.window, point.budget)
        test_seqs = self.cohort_sequences(point.test_year, point.window, point.budget)
        train = build_windows(train_seqs, point.window, min_feature_len=self.cfg.min_feature_len)
        test = build_windows(test_seqs, point.window, min_feature_len=self.cfg.min_feature_len)

        for side, samples in (('train', train), ('test', test)):
            labels = sample_labels(samples)
            n_def = int(labels.sum())
            if n_def == 0 or len(labels) - n_def < n_def:
                raise ExperimentError(f"Insufficient eligible sequences for {point.label} ({side}: "
                                      f"{len(labels)} windows, {n_def} defaults)")
        self._assert_out_of_time(point, train, test)

        data = PointData(point, train, test)
        data.statistics = {'train': window_statistics(train_seqs, train), 'test': window_statistics(test_seqs, test)}
        data.fingerprints = {'train': fingerprint_samples(train), 'test': fingerprint_samples(test)}
        logger.info(f"{point.label}: {len(train)} train windows "
                    f"({data.statistics['train']['window_default_rate']:.3%} default), {len(test)} test windows")
        return data

    @staticmethod
    def _assert_out_of_time(point: SweepPoint, train: List[Sample], test: List[Sample]):
        overlap = {s.cohort_year for s in train} & {s.cohort_year for s in test}
        if overlap:
            raise OOTViolationError(f"{point.label}: train and test share cohort years {sorted(overlap)}")

    # ------------------------------------------------------------------ trials

    def trial_seed(self, trial: int) -> int:
        return self.cfg.base_seed + trial

    def model_spec(self, model: str) -> ModelSpec:
        return ModelSpec.for_model(model, FEATURE_DIM, **self.cfg.architecture.model_dump())

    def run_trial(self, data: PointData, model: str, trial: int) -> TrialResult:
        start = time.perf_counter()
        seed = self.trial_seed(trial)
        rng = SeededRng(seed)
        split = standardize(DatasetSplit(undersample(data.train, rng.child('undersample_train')),
                                         undersample(data.test, rng.child('undersample_test'))))
        spec = self.model_spec(model)
        trainer = Trainer(self.cfg.train.model_copy(update={'seed': seed}))
        params, _ = trainer.train(spec, split.train, init_seed=self.cfg.base_seed if self.cfg.freeze_init else None)
        scores = predict(spec, params, split.test)
        metrics = evaluate(scores, sample_labels(split.test))
        elapsed = (time.perf_counter() - start) * 1000.0
        logger.info(f"{data.point.label} {model} trial {trial}: accuracy {metrics.accuracy:.4f}, "
                    f"auc {metrics.auc:.4f}")
        return TrialResult(data.point.label, model, trial, seed, metrics, elapsed, data.point.order)

    def run_points(self, points: List[SweepPoint]) -> Tuple[List[TrialResult], Dict[str, Any]]:
        results, point_meta = [], {}
        for point in points:
            data = self.prepare_point(point)
            jobs = [(model, t) for model in self.cfg.models for t in range(self.cfg.trials)]
            results.extend(Parallel(n_jobs=self.cfg.threads, batch_size=1, prefer='threads')(
                delayed(self.run_trial)(data, model, t) for model, t in jobs))
            point_meta[point.label] = {
                'window': list(point.window.as_tuple()),
                'train_year': point.train_year,
                'test_year': point.test_year,
                'record_budget': point.budget,
                'statistics': data.statistics,
                'sample_fingerprints': data.fingerprints,
            }
        results.sort(key=lambda r: (r.point_order, r.model, r.trial))
        return results, point_meta

    # --------------------------------------------------------------------- run

    def manifest(self, point_meta: Dict[str, Any]) -> Dict[str, Any]:
        versions = {}
        for package in ('numpy', 'scipy', 'pandas', 'scikit-learn', 'pydantic', 'joblib'):
            try:
                versions[package] = metadata.version(package)
            except metadata.PackageNotFoundError:
                versions[package] = None
        return {
            'version': Config.VERSION,
            'scenario': self.cfg.scenario.value,
            'config': self.cfg.model_dump(mode='json'),
            'base_seed': self.cfg.base_seed,
            'trial_seeds': [self.trial_seed(t) for t in range(self.cfg.trials)],
            'packages': versions,
            'inputs': dict(sorted(self._inputs.items())),
            'points': point_meta,
        }

    def run(self, out_dir: Optional[str] = None) -> ExperimentOutcome:
        points = self.points()
        logger.info(f"Running {self.cfg.scenario.value}: {len(points)} points x {len(self.cfg.models)} models x "
                    f"{self.cfg.trials} trials")
        results, point_meta = self.run_points(points)
        agg = aggregate_trials(results)
        paths = emit_reports(agg, results, out_dir or self.cfg.output_dir,
                             axis={p.label: p.axis for p in points}, axis_name=AXIS_NAMES[self.cfg.scenario],
                             manifest=self.manifest(point_meta))
        return ExperimentOutcome(results, agg, paths)


def _run_scenario(cfg: ExperimentConfig, scenario: Scenario) -> List[TrialResult]:
    runner = ExperimentRunner(cfg.model_copy(update={'scenario': scenario}))
    results, _ = runner.run_points(runner.points())
    return results


def run_window_sweep(cfg: ExperimentConfig) -> List[TrialResult]:
    return _run_scenario(cfg, Scenario.WINDOW_SWEEP)


def run_interval_sweep(cfg: ExperimentConfig) -> List[TrialResult]:
    return _run_scenario(cfg, Scenario.INTERVAL_SWEEP)


def run_sample_size_sweep(cfg: ExperimentConfig) -> List[TrialResult]:
    return _run_scenario(cfg, Scenario.SAMPLE_SIZE_SWEEP)


def run_cohort_generalization(cfg: ExperimentConfig) -> List[TrialResult]:
    return _run_scenario(cfg, Scenario.COHORT_GENERALIZATION)

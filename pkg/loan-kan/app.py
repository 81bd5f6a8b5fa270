# app.py
"""Command-line entry point: experiment sweeps, single-model training, scoring and data tooling."""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from config.experiment_schema import ExperimentConfig, GeneratorConfig, load_experiment_config
from config.settings import Config, setup_logging
from core.artifact_store import load_params, load_samples, save_params, save_samples
from core.data_pipeline import (apply_standardization, assemble_sequences, build_windows, sample_labels, standardize,
                                undersample)
from core.experiments import ExperimentRunner
from core.loan_simulator import LoanSimulator, write_performance_file
from core.metrics import evaluate
from core.performance_parser import PerformanceParser, load_column_map
from core.reports import summarize
from core.training import Trainer, predict
from core.verification import SCALES, GradientVerifier
from utils.data_models import DatasetSplit, Scenario, WindowSpec
from utils.errors import ConfigError, LoanKanError
from utils.tensor_math import SeededRng

logger = logging.getLogger('loan-kan')

SWEEP_COMMANDS = {
    'window-sweep': Scenario.WINDOW_SWEEP,
    'interval-sweep': Scenario.INTERVAL_SWEEP,
    'sample-sweep': Scenario.SAMPLE_SIZE_SWEEP,
    'cohorts': Scenario.COHORT_GENERALIZATION,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config (.json or .toml)")
    common.add_argument("--seed", type=int, help="Base seed; trial t uses seed + t")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--threads", type=int, help="Worker threads for trials")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging")

    parser = argparse.ArgumentParser(prog="loan-kan",
                                     description="Early loan-default prediction with recurrent KAN models")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, scenario in SWEEP_COMMANDS.items():
        sweep = sub.add_parser(name, parents=[common], help=f"Run the {scenario.value} protocol")
        sweep.add_argument("--models", nargs="+", help="Subset of GRU, LSTM, GRU-KAN, LSTM-KAN")
        sweep.add_argument("--trials", type=int, help="Trials per (point, model)")

    train = sub.add_parser("train", parents=[common], help="Train one model on the configured window")
    train.add_argument("--model", default="GRU-KAN", help="Model name")
    train.add_argument("--window", nargs=3, type=int, metavar=("X", "GAP", "Y"), help="Window (x, gap, y)")

    score = sub.add_parser("score", parents=[common], help="Score a samples file with saved parameters")
    score.add_argument("--params", required=True, help="Parameter JSON written by train")
    score.add_argument("--samples", required=True, help="Samples .npz written by train or ingest")
    score.add_argument("--stats-from", help="Samples sidecar whose standardization to apply first")
    score.add_argument("--threshold", type=float, default=0.5)

    grad = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    grad.add_argument("--scale", choices=sorted(SCALES), default="gru_kan")
    grad.add_argument("--seeds", type=int, default=5, help="Number of seeds starting at --seed")
    grad.add_argument("--spline-orders", nargs="+", type=int, default=[2, 3], help="Spline orders for KAN scales")

    synth = sub.add_parser("synth", parents=[common], help="Write a synthetic cohort as a performance file")
    synth.add_argument("--year", type=int, help="Cohort year")
    synth.add_argument("--loans", type=int, help="Number of loans")
    synth.add_argument("--column-map", help="Column map JSON")

    ingest = sub.add_parser("ingest", parents=[common], help="Parse performance files into a samples file")
    ingest.add_argument("inputs", nargs="+", help="Pipe-delimited performance files")
    ingest.add_argument("--column-map", help="Column map JSON")
    ingest.add_argument("--window", nargs=3, type=int, metavar=("X", "GAP", "Y"), required=True)
    ingest.add_argument("--max-records", type=int, help="Read at most this many records in total")
    ingest.add_argument("--balance", action="store_true", help="Undersample non-defaults to a 1:1 ratio")
    return parser


def _experiment_config(args, scenario: Optional[Scenario] = None) -> ExperimentConfig:
    overrides = {
        'base_seed': args.seed,
        'output_dir': args.out,
        'threads': args.threads,
        'scenario': scenario.value if scenario else None,
        'models': getattr(args, 'models', None),
        'trials': getattr(args, 'trials', None),
    }
    return load_experiment_config(args.config, **overrides)


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args, SWEEP_COMMANDS[args.command])
    outcome = ExperimentRunner(cfg).run()
    print(summarize(outcome.aggregate))
    print(f"Reports: {os.path.dirname(outcome.paths['trials'])}")
    return 0


def cmd_train(args) -> int:
    cfg = _experiment_config(args, Scenario.SINGLE)
    if args.window:
        cfg = cfg.model_copy(update={'window': tuple(args.window)})
    runner = ExperimentRunner(cfg)
    spec = runner.model_spec(args.model)
    point = runner.points()[0]
    data = runner.prepare_point(point)

    rng = SeededRng(cfg.base_seed)
    split = standardize(DatasetSplit(undersample(data.train, rng.child('undersample_train')),
                                     undersample(data.test, rng.child('undersample_test'))))
    os.makedirs(cfg.output_dir, exist_ok=True)
    trainer = Trainer(cfg.train.model_copy(update={'seed': cfg.base_seed}))
    params, trace = trainer.train(spec, split.train, trace_path=os.path.join(cfg.output_dir, 'trace.csv'))

    params_path = save_params(spec, params, os.path.join(cfg.output_dir, 'params.json'))
    samples_path = save_samples(split.test, os.path.join(cfg.output_dir, 'test_samples.npz'), point.window,
                                split.standardization, {'standardized': True, 'cohort_year': point.test_year})
    report = evaluate(predict(spec, params, split.test), sample_labels(split.test))
    print(f"{spec.name} best epoch {trace.best_epoch}: " +
          ", ".join(f"{k} {v:.4f}" for k, v in report.as_dict().items()))
    print(f"Parameters: {params_path}\nTest samples: {samples_path}")
    return 0


def cmd_score(args) -> int:
    spec, params = load_params(args.params)
    samples, sidecar = load_samples(args.samples)
    if args.stats_from and not sidecar.get('standardized'):
        _, stats_sidecar = load_samples(args.stats_from)
        if stats_sidecar.get('standardization') is None:
            raise ConfigError(f"{args.stats_from} carries no standardization statistics")
        samples = apply_standardization(samples, stats_sidecar['standardization'])
    report = evaluate(predict(spec, params, samples), sample_labels(samples), args.threshold)
    result = {**report.as_dict(), 'threshold': report.threshold, 'samples': len(samples),
              'precision_defined': report.precision_defined, 'recall_defined': report.recall_defined}
    out_dir = args.out or os.path.dirname(os.path.abspath(args.samples))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, 'metrics.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(result, f, indent=2)
    print(json.dumps(result, indent=2))
    return 0


def cmd_gradcheck(args) -> int:
    verifier = GradientVerifier()
    base = args.seed if args.seed is not None else 0
    if any(order < 1 for order in args.spline_orders):
        raise ConfigError(f"Spline orders must be at least 1, got {args.spline_orders}")
    orders = args.spline_orders if SCALES[args.scale] and SCALES[args.scale][1] else [None]
    failed = 0
    for order in orders:
        for seed in range(base, base + args.seeds):
            report = verifier.gradient_check(args.scale, seed, spline_order=order or 2)
            status = "ok" if report.passed else "FAIL"
            label = f"{args.scale} order {order}" if order else args.scale
            print(f"{label} seed {seed}: max relative error {report.max_rel_error:.3e} "
                  f"({report.worst_tensor}) gradient norm {report.gradient_norm:.2e} "
                  f"tolerance {report.tolerance:.0e} {status}")
            failed += not report.passed
    return 1 if failed else 0


def cmd_synth(args) -> int:
    gen = GeneratorConfig()
    if args.config:
        cfg = load_experiment_config(args.config)
        if cfg.is_synthetic:
            gen = cfg.source.generator
    update = {'seed': args.seed, 'year': args.year, 'n_loans': args.loans}
    gen = gen.model_copy(update={k: v for k, v in update.items() if v is not None})
    seqs = LoanSimulator(gen).generate()
    out_dir = args.out or Config.OUTPUT_DIR
    os.makedirs(out_dir, exist_ok=True)
    column_map = load_column_map(args.column_map) if args.column_map else None
    path = write_performance_file(seqs, os.path.join(out_dir, f'synthetic_{gen.year}.txt'), column_map)
    print(f"Wrote {len(seqs)} loans to {path}")
    return 0


def cmd_ingest(args) -> int:
    parser = PerformanceParser(load_column_map(args.column_map) if args.column_map else None)
    records, remaining = [], args.max_records
    for path in args.inputs:
        parsed, report = parser.parse_file(path, remaining)
        records.extend(parsed)
        print(f"{path}: {report.lines_read} lines, {report.records_kept} kept, "
              f"{report.lines_skipped} skipped {report.skip_reasons or ''}".rstrip())
        if remaining is not None:
            remaining -= report.lines_read
            if remaining <= 0:
                break
    window = WindowSpec(*args.window)
    samples = build_windows(assemble_sequences(records), window)
    if args.balance:
        seed = args.seed if args.seed is not None else Config.DEFAULT_SEED
        samples = undersample(samples, SeededRng(seed).child('undersample'))
    out_dir = args.out or Config.OUTPUT_DIR
    path = save_samples(samples, os.path.join(out_dir, 'samples.npz'), window, None,
                        {'standardized': False, 'balanced': args.balance, 'inputs': list(args.inputs)})
    print(f"{len(samples)} windows ({int(sample_labels(samples).sum())} defaults) -> {path}")
    return 0


COMMANDS = {
    **{name: cmd_sweep for name in SWEEP_COMMANDS},
    'train': cmd_train,
    'score': cmd_score,
    'gradcheck': cmd_gradcheck,
    'synth': cmd_synth,
    'ingest': cmd_ingest,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging('DEBUG' if args.verbose else None)
    try:
        return COMMANDS[args.command](args)
    except LoanKanError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

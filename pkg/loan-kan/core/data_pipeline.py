# core/data_pipeline.py
"""
Sequences, labels, features and windows.

Monthly records are grouped into per-loan sequences, turned into engineered
feature rows, and cut into (feature window, blank interval, observation
period) samples. Balancing and standardization act on lists of samples.
"""
import logging
import math
from dataclasses import replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from config.model_config import ModelConfig
from core.performance_parser import cohort_year_from_loan_id
from utils.data_models import (DatasetSplit, LoanMonthRecord, LoanSequence, MaskedBatch, Sample,
                               StandardizationStats, WindowSpec)
from utils.errors import DuplicateRecordError, SamplingError, WindowError
from utils.tensor_math import SeededRng

logger = logging.getLogger(__name__)

ASSISTANCE_CODES = ModelConfig.ASSISTANCE_CODES
FEATURE_NAMES = [f'assistance_{code}' for code in ASSISTANCE_CODES] + ModelConfig.CONTINUOUS_FEATURES
CONTINUOUS_MASK = [name in ModelConfig.CONTINUOUS_FEATURES for name in FEATURE_NAMES]
FEATURE_DIM = len(FEATURE_NAMES)

DEFAULT_THRESHOLD = ModelConfig.CLDS['default_threshold']
NON_NUMERIC_IS_DEFAULT = ModelConfig.CLDS['non_numeric_is_default']


def _fingerprint(record: LoanMonthRecord) -> tuple:
    ltv = None if math.isnan(record.estimated_ltv) else record.estimated_ltv
    return (record.clds, record.current_actual_upb, record.current_deferred_upb, record.current_interest_rate, ltv,
            record.interest_bearing_upb, record.assistance_status_code, record.remaining_months_to_maturity)


def assemble_sequences(records: Iterable[LoanMonthRecord]) -> List[LoanSequence]:
    """
    Group records by loan, drop exact duplicates and order each loan chronologically.

    Loans come back sorted by loan id. Within a loan, months are ordered by
    period, with descending remaining months as the secondary key.

    Raises:
        DuplicateRecordError: the same (loan, period) appears with different values.
    """
    seen: Dict[tuple, LoanMonthRecord] = {}
    unique: List[LoanMonthRecord] = []
    conflicts = set()
    for record in records:
        key = (record.loan_id, record.period)
        previous = seen.get(key)
        if previous is None:
            seen[key] = record
            unique.append(record)
        elif _fingerprint(previous) != _fingerprint(record):
            conflicts.add(record.loan_id)
    if conflicts:
        raise DuplicateRecordError(sorted(conflicts))
    if not unique:
        return []

    frame = pd.DataFrame({
        'loan_id': [r.loan_id for r in unique],
        'period': [r.period for r in unique],
        'remaining': [r.remaining_months_to_maturity for r in unique],
        'position': np.arange(len(unique)),
    }).sort_values(['loan_id', 'period', 'remaining'], ascending=[True, True, False], kind='mergesort')

    sequences = []
    for loan_id, group in frame.groupby('loan_id', sort=False):
        months = [unique[i] for i in group['position']]
        cohort = cohort_year_from_loan_id(loan_id) or int(months[0].period[:4])
        sequences.append(LoanSequence(loan_id, months, cohort))
    return sequences


def usable_length(seq: LoanSequence) -> int:
    """Months up to and including the first non-numeric delinquency code"""
    for i, month in enumerate(seq.months):
        if not month.clds_is_numeric:
            return i + 1
    return len(seq.months)


def label_window(seq: LoanSequence, obs_start: int, obs_len: int, threshold: int = DEFAULT_THRESHOLD,
                 non_numeric_is_default: bool = NON_NUMERIC_IS_DEFAULT) -> int:
    """1 iff any month of [obs_start, obs_start + obs_len) is in default"""
    if obs_start < 0 or obs_len < 1 or obs_start + obs_len > len(seq.months):
        raise WindowError(f"Observation window [{obs_start}, {obs_start + obs_len}) is outside "
                          f"loan {seq.loan_id} of length {len(seq.months)}")
    window = seq.months[obs_start:obs_start + obs_len]
    return int(any(m.is_default(threshold, non_numeric_is_default) for m in window))


def engineer_features(seq: LoanSequence) -> np.ndarray:
    """
    One row per month: one-hot assistance status (with an explicit "none"),
    then actual UPB, deferred UPB, interest rate, estimated LTV and the
    first difference of interest-bearing UPB (0 in the first month).
    Missing LTVs carry the last reported value forward, 0 before any report.
    """
    n = len(seq.months)
    onehot = np.zeros((n, len(ASSISTANCE_CODES)))
    for t, month in enumerate(seq.months):
        code = month.assistance_status_code or 'none'
        if code not in ASSISTANCE_CODES:
            logger.warning(f"Loan {seq.loan_id}: unseen assistance code {code!r} treated as none")
            code = 'none'
        onehot[t, ASSISTANCE_CODES.index(code)] = 1.0

    ltv = pd.Series([m.estimated_ltv for m in seq.months], dtype=float).ffill().fillna(0.0).to_numpy()
    ib_upb = np.array([m.interest_bearing_upb for m in seq.months])
    delta = np.diff(ib_upb, prepend=ib_upb[:1])
    continuous = np.column_stack([
        [m.current_actual_upb for m in seq.months],
        [m.current_deferred_upb for m in seq.months],
        [m.current_interest_rate for m in seq.months],
        ltv,
        delta,
    ])
    return np.hstack([onehot, continuous])


def build_windows(seqs: Sequence[LoanSequence], spec: WindowSpec, truncate_total: Optional[int] = None,
                  min_feature_len: Optional[int] = None, threshold: int = DEFAULT_THRESHOLD,
                  non_numeric_is_default: bool = NON_NUMERIC_IS_DEFAULT) -> List[Sample]:
    """
    Cut one sample per eligible loan from its earliest x + g + y months.

    Loans shorter than that are dropped, unless `min_feature_len` is set, in
    which case a loan with at least min_feature_len + g + y months yields a
    shorter feature window padded up to x. Gap months feed neither features
    nor label.
    """
    total = spec.total
    if truncate_total is not None and truncate_total != total:
        raise WindowError(f"truncate_total {truncate_total} must equal x + g + y = {total}")
    if min_feature_len is not None and not 1 <= min_feature_len <= spec.feature_len:
        raise WindowError(f"min_feature_len must lie in [1, {spec.feature_len}]")

    samples = []
    for seq in seqs:
        n = usable_length(seq)
        if n >= total:
            feature_len = spec.feature_len
        elif min_feature_len is not None and n >= min_feature_len + spec.gap + spec.obs_len:
            feature_len = n - spec.gap - spec.obs_len
        else:
            continue
        features = engineer_features(seq)[:feature_len]
        label = label_window(seq, feature_len + spec.gap, spec.obs_len, threshold, non_numeric_is_default)
        samples.append(Sample(features, np.ones(feature_len, dtype=bool), label, seq.loan_id,
                              seq.cohort_year or 0))
    if min_feature_len is not None:
        samples = pad_and_mask(samples, spec.feature_len)
    logger.debug(f"Window {spec.as_tuple()}: {len(samples)} samples from {len(seqs)} loans")
    return samples


def pad_and_mask(samples: Sequence[Sample], target_len: int) -> List[Sample]:
    """Append zero rows with mask False up to target_len"""
    out = []
    for s in samples:
        real = s.features[s.mask]
        if len(real) > target_len:
            raise WindowError(f"Sample {s.loan_id} has {len(real)} steps, longer than {target_len}")
        features = np.zeros((target_len, s.features.shape[1]))
        features[:len(real)] = real
        mask = np.zeros(target_len, dtype=bool)
        mask[:len(real)] = True
        out.append(replace(s, features=features, mask=mask))
    return out


def stack_samples(samples: Sequence[Sample], target_len: Optional[int] = None) -> MaskedBatch:
    if not samples:
        raise SamplingError("Cannot batch an empty sample list")
    target = target_len or max(s.length for s in samples)
    padded = pad_and_mask(samples, target)
    return MaskedBatch(np.stack([s.features for s in padded]), np.stack([s.mask for s in padded]))


def sample_labels(samples: Sequence[Sample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)


def undersample(samples: Sequence[Sample], rng: SeededRng) -> List[Sample]:
    """Keep every default and an equal-size random subset of non-defaults, in original order"""
    labels = sample_labels(samples)
    defaults = np.flatnonzero(labels == 1)
    others = np.flatnonzero(labels == 0)
    if len(defaults) == 0:
        raise SamplingError("No default samples to balance against")
    if len(others) < len(defaults):
        raise SamplingError(f"Fewer non-defaults ({len(others)}) than defaults ({len(defaults)})")
    chosen = rng.generator.choice(others, size=len(defaults), replace=False)
    keep = np.sort(np.concatenate([defaults, chosen]))
    return [samples[i] for i in keep]


def fit_standardization(train: Sequence[Sample]) -> StandardizationStats:
    """Mean and scale of continuous columns over unmasked training rows; zero variance gives scale 1"""
    if not train:
        raise SamplingError("Standardization needs training samples")
    rows = np.concatenate([s.features[s.mask] for s in train])
    continuous = np.array(CONTINUOUS_MASK)
    scaler = StandardScaler().fit(rows[:, continuous])
    mean = np.zeros(FEATURE_DIM)
    scale = np.ones(FEATURE_DIM)
    mean[continuous] = scaler.mean_
    scale[continuous] = scaler.scale_
    return StandardizationStats(list(FEATURE_NAMES), list(CONTINUOUS_MASK), mean, scale)


def apply_standardization(samples: Sequence[Sample], stats: StandardizationStats) -> List[Sample]:
    out = []
    for s in samples:
        features = (s.features - stats.mean) / stats.scale
        features[~s.mask] = 0.0
        out.append(replace(s, features=features))
    return out


def standardize(split: DatasetSplit) -> DatasetSplit:
    """Fit on train, transform both sides with the training statistics"""
    stats = fit_standardization(split.train)
    return DatasetSplit(apply_standardization(split.train, stats), apply_standardization(split.test, stats), stats)


def take_records(seqs: Sequence[LoanSequence], budget: int) -> List[LoanSequence]:
    """Sequences covering the first `budget` records in loan order; the last loan may be cut short"""
    out, remaining = [], budget
    for seq in seqs:
        if remaining <= 0:
            break
        months = seq.months[:remaining]
        out.append(LoanSequence(seq.loan_id, months, seq.cohort_year))
        remaining -= len(months)
    return out


def window_statistics(seqs: Sequence[LoanSequence], samples: Sequence[Sample],
                      threshold: int = DEFAULT_THRESHOLD,
                      non_numeric_is_default: bool = NON_NUMERIC_IS_DEFAULT) -> Dict[str, float]:
    """Loan-level and window-level default counts and rates"""
    defaulted = sum(any(m.is_default(threshold, non_numeric_is_default) for m in s.months) for s in seqs)
    window_defaults = int(sample_labels(samples).sum()) if samples else 0
    return {
        'records': sum(len(s.months) for s in seqs),
        'unique_loans': len(seqs),
        'default_loans': defaulted,
        'loan_default_rate': defaulted / len(seqs) if seqs else 0.0,
        'eligible_loans': len({s.loan_id for s in samples}),
        'windows': len(samples),
        'window_defaults': window_defaults,
        'window_default_rate': window_defaults / len(samples) if samples else 0.0,
    }

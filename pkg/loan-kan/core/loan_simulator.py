# core/loan_simulator.py
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.experiment_schema import GeneratorConfig
from core.performance_parser import load_column_map, validate_column_map
from utils.data_models import LoanMonthRecord, LoanSequence
from utils.tensor_math import SeededRng

logger = logging.getLogger(__name__)


class LoanSimulator:
    """
    Synthetic monthly performance data for one origination cohort.

    Healthy loans amortize with a little noise. A defaulting loan first goes
    through a run of distressed months (principal paid shrinks, LTV climbs,
    assistance codes appear), then misses payments: CLDS counts 1, 2, 3, ...
    with the first CLDS >= 3 month placed inside the observation period of
    `cfg.window` with probability 0.5 + 0.5 * signal_strength. With
    signal_strength 0 the feature columns of both classes share one
    distribution.
    """
    TERM_MONTHS = 360
    ASSISTANCE = ('F', 'R', 'T')
    LTV_MISSING_PROB = 0.02
    DISPOSITION_PROB = 0.1  # defaulting loans that end in a non-numeric disposition code
    DISPOSITION_CODE = 'RA'

    def __init__(self, cfg: Optional[GeneratorConfig] = None):
        self.cfg = cfg or GeneratorConfig()

    @property
    def drift(self) -> float:
        return self.cfg.drift_per_year * (self.cfg.year - self.cfg.reference_year)

    def generate(self) -> List[LoanSequence]:
        cfg = self.cfg
        rng = SeededRng(cfg.seed).child(f'cohort-{cfg.year}').generator
        n_defaults = int(round(cfg.n_loans * cfg.default_rate))
        defaults = np.zeros(cfg.n_loans, dtype=bool)
        defaults[rng.permutation(cfg.n_loans)[:n_defaults]] = True
        sequences = [self._loan(i, bool(defaults[i]), rng) for i in range(cfg.n_loans)]
        logger.info(f"Generated cohort {cfg.year}: {cfg.n_loans} loans, {n_defaults} defaulting, "
                    f"signal {cfg.signal_strength}, drift {self.drift:.3f}")
        return sequences

    def _loan(self, index: int, defaults: bool, rng: np.random.Generator) -> LoanSequence:
        cfg = self.cfg
        s = cfg.signal_strength
        drift = self.drift
        x, gap, y = cfg.window
        obs_start, obs_end = x + gap, x + gap + y

        length = int(rng.integers(cfg.seq_len_range[0], cfg.seq_len_range[1] + 1))
        rate = round(max(0.5, 3.5 + 1.5 * drift + rng.normal(0.0, 0.4)), 3)
        upb0 = round(rng.uniform(1e5, 4e5) * (1.0 + drift), 2)
        ltv0 = rng.uniform(60.0, 95.0) + 10.0 * drift
        seasoning = int(rng.integers(0, 3))  # months between origination and the first record
        first_month = int(rng.integers(1, 4))
        r = rate / 1200.0
        growth = (1.0 + r) ** self.TERM_MONTHS
        payment = upb0 * r * growth / (growth - 1.0)
        base_principal = upb0 * r / (growth - 1.0)

        delinquent_from = distressed_from = disposition = None
        if defaults:
            inside = rng.random() < 0.5 + 0.5 * s
            first_default = int(rng.integers(obs_start, obs_end) if inside else rng.integers(obs_end, obs_end + 6))
            delinquent_from = first_default - 2
            mean_lead = max(1.0, cfg.mean_precursor_lead * (1.0 - min(drift, 0.9)))
            distressed_from = max(0, delinquent_from - int(rng.geometric(1.0 / mean_lead)))
            # long enough to cover the whole observation period
            length = max(length, first_default + 1, obs_end)
            if rng.random() < self.DISPOSITION_PROB and obs_end <= first_default + 4 <= length:
                disposition = first_default + 3
                length = disposition + 1

        months = []
        ib_upb, deferred, factor = upb0, 0.0, 1.0
        for t in range(length):
            distressed = defaults and t >= distressed_from
            delinquent = defaults and t >= delinquent_from
            principal = base_principal * (1.0 + r) ** (seasoning + t) * (1.0 + 0.02 * rng.normal())
            if delinquent:
                principal *= 1.0 - s
                deferred += s * payment
            elif distressed:
                factor *= 1.0 - s * (1.0 - cfg.precursor_decay)
                principal *= factor
            ib_upb = max(ib_upb - principal, 0.0)
            actual = ib_upb + deferred

            ltv = ltv0 * actual / upb0 + rng.normal(0.0, 0.3)
            if distressed:
                ltv += s * 1.5 * (t - distressed_from + 1)
            ltv = float('nan') if rng.random() < self.LTV_MISSING_PROB else float(round(max(ltv, 1.0)))

            code = None
            if distressed and rng.random() < s * 0.6:
                code = self.ASSISTANCE[int(rng.integers(len(self.ASSISTANCE)))]

            if t == disposition:
                clds = self.DISPOSITION_CODE
            elif delinquent:
                clds = t - delinquent_from + 1
            else:
                clds = 0

            months.append(LoanMonthRecord(
                loan_id=f"S{cfg.year % 100:02d}Q1{index:07d}",
                period=_period(cfg.year, first_month + seasoning + t),
                clds=clds,
                current_actual_upb=round(actual, 2),
                current_deferred_upb=round(deferred, 2),
                current_interest_rate=rate,
                estimated_ltv=ltv,
                interest_bearing_upb=round(ib_upb, 2),
                assistance_status_code=code,
                remaining_months_to_maturity=self.TERM_MONTHS - seasoning - t - 1,
            ))
        return LoanSequence(months[0].loan_id, months, cfg.year)


def _period(year: int, month_offset: int) -> str:
    """YYYYMM of the month `month_offset` months after December of year - 1"""
    total = year * 12 + month_offset - 1
    return f"{total // 12:04d}{total % 12 + 1:02d}"


def synth_generate(cfg: Optional[GeneratorConfig] = None) -> List[LoanSequence]:
    return LoanSimulator(cfg).generate()


def write_performance_file(seqs: Sequence[LoanSequence], path: str,
                           column_map: Optional[Dict[str, int]] = None) -> str:
    """Write sequences as a headerless pipe-delimited performance file in the mapped layout"""
    cmap = validate_column_map(column_map) if column_map is not None else load_column_map()
    width = max(cmap.values()) + 1
    rows = []
    for seq in seqs:
        for m in seq.months:
            row = [''] * width
            row[cmap['loan_id']] = m.loan_id
            row[cmap['period']] = m.period
            row[cmap['current_actual_upb']] = f"{m.current_actual_upb:.2f}"
            row[cmap['clds']] = str(m.clds)
            row[cmap['remaining_months']] = str(m.remaining_months_to_maturity)
            row[cmap['current_interest_rate']] = f"{m.current_interest_rate:.3f}"
            row[cmap['current_deferred_upb']] = f"{m.current_deferred_upb:.2f}"
            row[cmap['estimated_ltv']] = '' if math.isnan(m.estimated_ltv) else f"{m.estimated_ltv:.0f}"
            row[cmap['assistance_status_code']] = m.assistance_status_code or ''
            row[cmap['interest_bearing_upb']] = f"{m.interest_bearing_upb:.2f}"
            rows.append(row)
    pd.DataFrame(rows).to_csv(path, sep='|', header=False, index=False)
    logger.info(f"Wrote {len(rows)} records for {len(seqs)} loans to {path}")
    return path

# core/performance_parser.py
import json
import logging
import re
from typing import Dict, Iterator, List, Optional, Tuple

import pandas as pd

from config.settings import Config
from utils.data_models import LoanMonthRecord, ParseReport
from utils.errors import ColumnMapError, DataIngestionError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = (
    'loan_id', 'period', 'current_actual_upb', 'clds', 'remaining_months', 'current_interest_rate',
    'current_deferred_upb', 'estimated_ltv', 'assistance_status_code', 'interest_bearing_upb',
)

PERIOD_PATTERN = r'\d{4}(0[1-9]|1[0-2])'
ELTV_NOT_AVAILABLE = '999'


def load_column_map(path: Optional[str] = None) -> Dict[str, int]:
    """Read a column map file; accepts either {"columns": {...}} or a bare {name: index} object"""
    path = path or Config.COLUMN_MAP_PATH
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ColumnMapError(f"Cannot read column map {path}: {e}") from e
    return validate_column_map(data.get('columns', data))


def validate_column_map(columns: Dict[str, int]) -> Dict[str, int]:
    missing = [name for name in REQUIRED_COLUMNS if name not in columns]
    if missing:
        raise ColumnMapError(f"Column map lacks {missing}")
    cleaned = {}
    for name in REQUIRED_COLUMNS:
        index = columns[name]
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise ColumnMapError(f"Column {name!r} must map to a non-negative integer index, got {index!r}")
        cleaned[name] = index
    if len(set(cleaned.values())) != len(cleaned):
        raise ColumnMapError("Column map assigns one index to several fields")
    return cleaned


class PerformanceParser:
    """
    Streaming reader for pipe-delimited monthly performance files.

    Malformed lines never abort a read: each is counted under a reason in the
    ParseReport and the first few are logged with their line numbers.
    """

    def __init__(self, column_map: Optional[Dict[str, int]] = None, chunk_size: int = Config.READ_CHUNK_SIZE):
        self.column_map = validate_column_map(column_map) if column_map is not None else load_column_map()
        self.chunk_size = chunk_size
        self.width = max(self.column_map.values()) + 1

    def parse(self, path: str, max_records: Optional[int] = None,
              report: Optional[ParseReport] = None) -> Iterator[LoanMonthRecord]:
        report = report if report is not None else ParseReport(path)
        try:
            reader = pd.read_csv(
                path, sep='|', header=None, names=list(range(self.width)), usecols=sorted(self.column_map.values()),
                dtype=str, keep_default_na=False, na_values=[], chunksize=self.chunk_size, nrows=max_records,
                engine='python', on_bad_lines=lambda fields: fields[:self.width], skip_blank_lines=True,
            )
            for chunk in reader:
                yield from self._parse_chunk(chunk, report)
        except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
            raise DataIngestionError(f"Cannot read performance file {path}: {e}") from e
        logger.info(f"Parsed {path}: {report.records_kept} records kept, {report.lines_skipped} lines skipped"
                    + (f" {report.skip_reasons}" if report.skip_reasons else ""))

    def parse_file(self, path: str, max_records: Optional[int] = None) -> Tuple[List[LoanMonthRecord], ParseReport]:
        report = ParseReport(path)
        records = list(self.parse(path, max_records, report))
        return records, report

    def _parse_chunk(self, chunk: pd.DataFrame, report: ParseReport) -> Iterator[LoanMonthRecord]:
        cmap = self.column_map
        raw = {name: chunk[index] for name, index in cmap.items()}
        truncated = pd.concat([col.isna() for col in raw.values()], axis=1).any(axis=1)
        text = {name: col.fillna('').str.strip() for name, col in raw.items()}

        upb = pd.to_numeric(text['current_actual_upb'], errors='coerce')
        rate = pd.to_numeric(text['current_interest_rate'], errors='coerce')
        remaining = pd.to_numeric(text['remaining_months'], errors='coerce')
        deferred = pd.to_numeric(text['current_deferred_upb'].replace('', '0'), errors='coerce')
        eltv = pd.to_numeric(text['estimated_ltv'].replace(ELTV_NOT_AVAILABLE, ''), errors='coerce')
        ib_upb = pd.to_numeric(text['interest_bearing_upb'], errors='coerce')
        ib_upb = ib_upb.where(text['interest_bearing_upb'] != '', upb - deferred)

        reasons = pd.Series('', index=chunk.index)
        checks = [
            ('truncated', truncated),
            ('bad_loan_id', text['loan_id'] == ''),
            ('bad_period', ~text['period'].str.fullmatch(PERIOD_PATTERN)),
            ('bad_clds', text['clds'] == ''),
            ('bad_numeric', upb.isna() | rate.isna() | remaining.isna() | deferred.isna() | ib_upb.isna()
             | (upb < 0) | (deferred < 0) | (ib_upb < 0) | (remaining < 0)),
        ]
        for reason, flagged in reversed(checks):
            reasons = reasons.mask(flagged.fillna(True).astype(bool), reason)

        for line, reason in reasons[reasons != ''].items():
            if report.lines_skipped < Config.MAX_LOGGED_SKIPS:
                logger.warning(f"{report.path}: skipping line {line + 1} ({reason})")
            report.skip(reason)

        report.lines_read += len(chunk)
        keep = (reasons == '').to_numpy()
        columns = zip(text['loan_id'][keep], text['period'][keep], text['clds'][keep], upb[keep], deferred[keep],
                      rate[keep], eltv[keep], ib_upb[keep], text['assistance_status_code'][keep], remaining[keep])
        for loan_id, period, clds, cur_upb, def_upb, cur_rate, ltv, ib, assist, rem in columns:
            report.records_kept += 1
            yield LoanMonthRecord(
                loan_id=loan_id,
                period=period,
                clds=int(clds) if clds.isdigit() else clds,
                current_actual_upb=float(cur_upb),
                current_deferred_upb=float(def_upb),
                current_interest_rate=float(cur_rate),
                estimated_ltv=float(ltv),
                interest_bearing_upb=float(ib),
                assistance_status_code=assist or None,
                remaining_months_to_maturity=int(rem),
            )


def parse_performance_file(path: str, column_map: Optional[Dict[str, int]] = None,
                           max_records: Optional[int] = None) -> Tuple[List[LoanMonthRecord], ParseReport]:
    return PerformanceParser(column_map).parse_file(path, max_records)


def cohort_year_from_loan_id(loan_id: str) -> Optional[int]:
    """Origination year encoded in a loan sequence number such as F19Q1xxxxxxx"""
    match = re.match(r'^[A-Z](\d{2})Q[1-4]', loan_id)
    return 2000 + int(match.group(1)) if match else None

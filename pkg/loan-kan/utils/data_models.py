# utils/data_models.py
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Union

import numpy as np

from utils.errors import MaskError, ShapeError, WindowError


class CellKind(Enum):
    """Recurrent cell used by both sequence layers"""
    GRU = "GRU"
    LSTM = "LSTM"


class Mode(Enum):
    TRAIN = "train"
    INFER = "infer"


class Scenario(Enum):
    """Experiment protocols the runner knows"""
    WINDOW_SWEEP = "window_sweep"
    INTERVAL_SWEEP = "interval_sweep"
    SAMPLE_SIZE_SWEEP = "sample_size_sweep"
    COHORT_GENERALIZATION = "cohort_generalization"
    SINGLE = "single"


# model name -> (cell, uses KAN layer)
MODEL_NAMES: Dict[str, tuple] = {
    "GRU": (CellKind.GRU, False),
    "LSTM": (CellKind.LSTM, False),
    "GRU-KAN": (CellKind.GRU, True),
    "LSTM-KAN": (CellKind.LSTM, True),
}

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "auc")


@dataclass
class LoanMonthRecord:
    """One monthly performance record of one loan"""
    loan_id: str
    period: str  # YYYYMM
    clds: Union[int, str]  # months delinquent, or a non-numeric disposition code such as "RA"
    current_actual_upb: float
    current_deferred_upb: float
    current_interest_rate: float
    estimated_ltv: float  # NaN when not reported
    interest_bearing_upb: float
    assistance_status_code: Optional[str]
    remaining_months_to_maturity: int

    def __post_init__(self):
        if len(self.period) != 6 or not self.period.isdigit() or not 1 <= int(self.period[4:]) <= 12:
            raise ValueError(f"Malformed period: {self.period!r}")
        if self.current_actual_upb < 0 or self.current_deferred_upb < 0 or self.interest_bearing_upb < 0:
            raise ValueError("UPB fields must be non-negative")
        if isinstance(self.clds, int) and self.clds < 0:
            raise ValueError(f"Negative delinquency status: {self.clds}")

    @property
    def clds_is_numeric(self) -> bool:
        return isinstance(self.clds, int)

    def is_default(self, threshold: int = 3, non_numeric_is_default: bool = True) -> bool:
        if isinstance(self.clds, int):
            return self.clds >= threshold
        return non_numeric_is_default


@dataclass
class LoanSequence:
    """Chronologically ordered monthly records of one loan"""
    loan_id: str
    months: List[LoanMonthRecord]
    cohort_year: Optional[int] = None

    def __post_init__(self):
        periods = [m.period for m in self.months]
        if any(a >= b for a, b in zip(periods, periods[1:])):
            raise ValueError(f"Loan {self.loan_id}: months are not strictly chronological")

    def __len__(self):
        return len(self.months)


@dataclass(frozen=True)
class WindowSpec:
    """Feature window x, blank interval g and observation period y, in months"""
    feature_len: int
    gap: int
    obs_len: int

    def __post_init__(self):
        if self.feature_len < 1 or self.gap < 0 or self.obs_len < 1:
            raise WindowError(f"Invalid window spec {self.as_tuple()}: need x >= 1, g >= 0, y >= 1")

    @property
    def total(self) -> int:
        return self.feature_len + self.gap + self.obs_len

    @property
    def obs_start(self) -> int:
        return self.feature_len + self.gap

    def as_tuple(self):
        return (self.feature_len, self.gap, self.obs_len)


@dataclass
class Sample:
    """One supervised window: features (time x feature_dim), validity mask, binary label"""
    features: np.ndarray
    mask: np.ndarray
    label: int
    loan_id: str = ""
    cohort_year: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.features.ndim != 2 or self.mask.shape != (self.features.shape[0],):
            raise ShapeError(f"Sample shapes disagree: features {self.features.shape}, mask {self.mask.shape}")
        if self.label not in (0, 1):
            raise ValueError(f"Label must be 0 or 1, got {self.label}")

    @property
    def length(self) -> int:
        return int(self.mask.sum())


@dataclass
class StandardizationStats:
    """Per-column statistics fitted on training rows only"""
    feature_names: List[str]
    continuous: List[bool]
    mean: np.ndarray
    scale: np.ndarray


@dataclass
class DatasetSplit:
    train: List[Sample]
    test: List[Sample]
    standardization: Optional[StandardizationStats] = None


@dataclass
class MaskedBatch:
    """Batch of padded sequences. mask[b, t] is True on real steps"""
    features: np.ndarray  # batch x time x feature_dim
    mask: np.ndarray      # batch x time

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.features.ndim != 3 or self.mask.shape != self.features.shape[:2]:
            raise ShapeError(f"Batch shapes disagree: features {self.features.shape}, mask {self.mask.shape}")
        if np.any(self.mask[:, 1:] & ~self.mask[:, :-1]):
            raise MaskError("Mask must be True on a prefix and False on the padded suffix")
        if np.any(self.features[~self.mask] != 0.0):
            raise MaskError("Padded feature entries must equal 0.0")

    @property
    def batch_size(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    def subset(self, idx) -> "MaskedBatch":
        return MaskedBatch(self.features[idx], self.mask[idx])


@dataclass
class LossValue:
    value: float
    sample_count: int


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    """Evaluation of one trial"""
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    threshold: float = 0.5
    counts: Optional[ConfusionCounts] = None
    precision_defined: bool = True
    recall_defined: bool = True

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


@dataclass
class TrialResult:
    """One row per (point, model, trial)"""
    point: str
    model: str
    trial: int
    seed: int
    metrics: MetricsReport
    elapsed_ms: float = 0.0
    point_order: int = 0


@dataclass
class ParseReport:
    """Outcome of reading one performance file"""
    path: str
    lines_read: int = 0
    records_kept: int = 0
    lines_skipped: int = 0
    skip_reasons: Dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str):
        self.lines_skipped += 1
        self.skip_reasons[reason] = self.skip_reasons.get(reason, 0) + 1


@dataclass
class TrainingTrace:
    """Per-epoch losses of one training run"""
    epochs: List[int] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    elapsed_ms: List[float] = field(default_factory=list)
    best_epoch: int = 0

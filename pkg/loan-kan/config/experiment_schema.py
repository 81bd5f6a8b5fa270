# config/experiment_schema.py
"""
Validated experiment configuration, loaded from JSON or TOML.

Every field has a default so an empty file describes a synthetic-data run of
the chosen scenario with the default sweep values.
"""
import json

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.model_config import ModelConfig
from config.settings import Config
from utils.data_models import MODEL_NAMES, Scenario
from utils.errors import ConfigError

WindowTuple = Tuple[int, int, int]


class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid')


class TrainConfig(_Strict):
    epochs: int = Field(ModelConfig.TRAIN['epochs'], ge=0)
    batch_size: int = Field(ModelConfig.TRAIN['batch_size'], ge=2)
    learning_rate: float = Field(ModelConfig.TRAIN['learning_rate'], gt=0)
    beta1: float = Field(ModelConfig.TRAIN['beta1'], ge=0, lt=1)
    beta2: float = Field(ModelConfig.TRAIN['beta2'], ge=0, lt=1)
    eps_opt: float = Field(ModelConfig.TRAIN['eps_opt'], gt=0)
    early_stop_patience: int = Field(ModelConfig.TRAIN['early_stop_patience'], ge=1)
    validation_fraction: float = Field(ModelConfig.TRAIN['validation_fraction'], ge=0, le=0.5)
    seed: int = Field(Config.DEFAULT_SEED, ge=0)


class ArchitectureConfig(_Strict):
    """Overrides of the model stack shared by every model in a run"""
    rnn1_units: int = Field(ModelConfig.MODEL['rnn1_units'], gt=0)
    rnn2_units: int = Field(ModelConfig.MODEL['rnn2_units'], gt=0)
    kan_output_dim: int = Field(ModelConfig.MODEL['kan_output_dim'], gt=0)
    kan_num_functions: int = Field(ModelConfig.MODEL['kan_num_functions'], ge=2)
    kan_hidden: List[Annotated[int, Field(gt=0)]] = Field(default_factory=list)
    spline_order: int = Field(ModelConfig.KAN['spline_order'], ge=0)
    grid_lo: float = ModelConfig.KAN['grid_lo']
    grid_hi: float = ModelConfig.KAN['grid_hi']
    base_weight_std: float = Field(ModelConfig.KAN['base_weight_std'], ge=0)
    dense_units: int = Field(ModelConfig.MODEL['dense_units'], gt=0)
    dropout_rate: float = Field(ModelConfig.MODEL['dropout_rate'], ge=0, lt=1)
    bn_epsilon: float = Field(ModelConfig.BATCH_NORM['epsilon'], gt=0)
    bn_momentum: float = Field(ModelConfig.BATCH_NORM['momentum'], gt=0, lt=1)

    @model_validator(mode='after')
    def _check_grid(self):
        if self.grid_hi <= self.grid_lo:
            raise ValueError("grid_hi must exceed grid_lo")
        if self.kan_num_functions < self.spline_order + 1:
            raise ValueError("kan_num_functions must be at least spline_order + 1")
        return self


class GeneratorConfig(_Strict):
    """Synthetic cohort generator. `window` is the (x, gap, y) whose observation period defaults target."""
    n_loans: int = Field(ModelConfig.SYNTHETIC['n_loans'], ge=1)
    default_rate: float = Field(ModelConfig.SYNTHETIC['default_rate'], gt=0, lt=1)
    seq_len_range: Tuple[int, int] = ModelConfig.SYNTHETIC['seq_len_range']
    signal_strength: float = Field(ModelConfig.SYNTHETIC['signal_strength'], ge=0, le=1)
    year: int = ModelConfig.SYNTHETIC['train_year']
    reference_year: int = ModelConfig.SYNTHETIC['reference_year']
    drift_per_year: float = Field(ModelConfig.SYNTHETIC['drift_per_year'], ge=0)
    mean_precursor_lead: float = Field(ModelConfig.SYNTHETIC['mean_precursor_lead'], ge=1)
    precursor_decay: float = Field(ModelConfig.SYNTHETIC['precursor_decay'], ge=0, le=1)
    window: WindowTuple = ModelConfig.WINDOWS['single']
    seed: int = Field(Config.DEFAULT_SEED, ge=0)

    @field_validator('seq_len_range')
    @classmethod
    def _check_lengths(cls, value):
        lo, hi = value
        if lo < 1 or hi < lo:
            raise ValueError(f"seq_len_range must satisfy 1 <= lo <= hi, got {value}")
        return value


class SyntheticSource(_Strict):
    kind: Literal['synthetic'] = 'synthetic'
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    train_year: int = ModelConfig.SYNTHETIC['train_year']
    test_year: int = ModelConfig.SYNTHETIC['test_year']

    @model_validator(mode='after')
    def _check_years(self):
        if self.train_year >= self.test_year:
            raise ValueError("Synthetic test cohort must be later than the training cohort")
        return self


class FreddieSource(_Strict):
    """Performance files per cohort year; the first two years are the default train/test pair"""
    kind: Literal['freddie'] = 'freddie'
    cohorts: Dict[int, List[str]]
    column_map: Optional[str] = None
    train_year: Optional[int] = None
    test_year: Optional[int] = None

    @model_validator(mode='after')
    def _check_cohorts(self):
        if not self.cohorts or any(not paths for paths in self.cohorts.values()):
            raise ValueError("Every cohort needs at least one performance file")
        years = sorted(self.cohorts)
        if self.train_year is None:
            self.train_year = years[0]
        if self.test_year is None:
            self.test_year = years[-1]
        if self.train_year == self.test_year:
            raise ValueError("Training and test cohorts must differ")
        return self


DataSource = Annotated[Union[SyntheticSource, FreddieSource], Field(discriminator='kind')]


class ExperimentConfig(_Strict):
    scenario: Scenario = Scenario.SINGLE
    models: List[str] = Field(default_factory=lambda: list(MODEL_NAMES))
    source: DataSource = Field(default_factory=SyntheticSource)
    window: Optional[WindowTuple] = None  # single scenario; defaults per scenario otherwise
    obs_len: int = Field(ModelConfig.WINDOWS['window_sweep_obs'], ge=1)
    window_lengths: List[int] = Field(default_factory=lambda: list(ModelConfig.SWEEPS['window_lengths']))
    intervals: List[int] = Field(default_factory=lambda: list(ModelConfig.SWEEPS['intervals']))
    interval_total: int = Field(ModelConfig.WINDOWS['interval_total'], ge=2)
    record_budgets: Optional[List[int]] = None  # None: full-size budgets for files, scaled ones for synthetic
    cohort_pairs: List[Tuple[int, int]] = Field(default_factory=lambda: list(ModelConfig.SWEEPS['cohort_pairs']))
    cohort_record_budget: Optional[int] = None
    max_records: Optional[int] = Field(None, ge=1)
    min_feature_len: Optional[int] = Field(None, ge=1)
    trials: int = Field(ModelConfig.SWEEPS['trials'], ge=1)
    base_seed: int = Field(Config.DEFAULT_SEED, ge=0)
    freeze_init: bool = False
    train: TrainConfig = Field(default_factory=TrainConfig)
    architecture: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    output_dir: str = Config.OUTPUT_DIR
    threads: int = Field(Config.THREADS, ge=1)

    @field_validator('models')
    @classmethod
    def _check_models(cls, value):
        if not value:
            raise ValueError("At least one model is required")
        unknown = [m for m in value if m not in MODEL_NAMES]
        if unknown:
            raise ValueError(f"Unknown models {unknown}; expected a subset of {sorted(MODEL_NAMES)}")
        return value

    @field_validator('window_lengths', 'intervals', 'cohort_pairs')
    @classmethod
    def _non_empty(cls, value):
        if not value:
            raise ValueError("Sweep values must be non-empty")
        return value

    @field_validator('record_budgets')
    @classmethod
    def _check_budgets(cls, value):
        if value is not None and (not value or min(value) < 1):
            raise ValueError("Record budgets must be a non-empty list of positive counts")
        return value

    @property
    def is_synthetic(self) -> bool:
        return isinstance(self.source, SyntheticSource)

    def budgets(self) -> List[int]:
        if self.record_budgets is not None:
            return list(self.record_budgets)
        key = 'synthetic_record_budgets' if self.is_synthetic else 'record_budgets'
        return list(ModelConfig.SWEEPS[key])

    def cohort_budget(self) -> Optional[int]:
        if self.cohort_record_budget is not None:
            return self.cohort_record_budget
        return None if self.is_synthetic else ModelConfig.SWEEPS['cohort_record_budget']


def load_experiment_config(path: Optional[str] = None, **overrides: Any) -> ExperimentConfig:
    """
    Read a JSON (.json) or TOML (.toml) experiment file and apply top-level overrides.

    Raises:
        ConfigError: unreadable file or a value that fails validation.
    """
    data: Dict[str, Any] = {}
    if path:
        try:
            if path.endswith('.toml'):
                with open(path, 'rb') as f:
                    data = tomllib.load(f)
            else:
                with open(path, 'r', encoding='utf-8') as f:
                    data = json.load(f)
        except (OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Cannot read experiment config {path}: {e}") from e
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e

# utils/errors.py
"""Exception hierarchy. Everything derives from ValueError so callers that
already guard with `except ValueError` keep working."""


class LoanKanError(ValueError):
    """Base class for all library errors"""


class ShapeError(LoanKanError):
    """Dimension or contract mismatch between tensors"""


class NumericalError(LoanKanError):
    """Non-finite values produced by an operation"""


class MaskError(LoanKanError):
    """Mask is not a valid prefix mask, or a sequence has no real steps"""


class DataIngestionError(LoanKanError):
    """Input files cannot be read or are inconsistent"""


class ColumnMapError(DataIngestionError):
    """Column map references fields the file does not have"""


class DuplicateRecordError(DataIngestionError):
    """Same (loan_id, period) reported twice with different values"""

    def __init__(self, loan_ids):
        self.loan_ids = sorted(set(loan_ids))
        shown = ", ".join(self.loan_ids[:10])
        more = "" if len(self.loan_ids) <= 10 else f" (+{len(self.loan_ids) - 10} more)"
        super().__init__(f"Conflicting duplicate records for loans: {shown}{more}")


class WindowError(LoanKanError):
    """Window or padding request outside the available data"""


class SamplingError(LoanKanError):
    """Class-balance precondition violated"""


class MetricError(LoanKanError):
    """Metric undefined for the given inputs"""


class ConfigError(LoanKanError):
    """Invalid experiment or model configuration"""


class ExperimentError(LoanKanError):
    """Scenario cannot be run with the available data"""


class OOTViolationError(ExperimentError):
    """Training and test data come from the same cohort year"""

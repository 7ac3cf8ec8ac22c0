"""Exception types shared across the package."""


class CaseGrowthError(Exception):
    """Base class for all package errors."""


class SchemaError(CaseGrowthError):
    """A tabular source is missing required columns or declares unknown kinds."""


class RowError(CaseGrowthError):
    """A single input row could not be parsed; carries the 1-based line number."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class JoinError(CaseGrowthError):
    """Feature coverage gaps found while assembling the modeling table."""

    def __init__(self, gaps):
        preview = ", ".join(f"({c}, day {d})" for c, d in gaps[:5])
        more = "" if len(gaps) <= 5 else f" and {len(gaps) - 5} more"
        super().__init__(f"missing features at {preview}{more}")
        self.gaps = gaps


class InsufficientDataError(CaseGrowthError):
    """An estimator's window or history requirement is not met."""


class SelectionError(CaseGrowthError):
    """Cross-validated window selection had no evaluable fold anywhere."""


class EmptyWeightsError(CaseGrowthError):
    """Every tree routed the query to an empty estimation leaf."""


class DomainError(CaseGrowthError):
    """An argument is outside its mathematical domain (e.g. delta < 2)."""


class TuningError(CaseGrowthError):
    """Threshold tuning lacks a usable split or validation positives."""

"""Metrics and bound tables for experiment reports."""

from src.analysis.lower_bound import (
    DEFAULT_BIT_TARGETS,
    LowerBoundMeasurement,
    LowerBoundViolationError,
    check_lower_bound,
    lower_bound_report,
    lower_bound_table,
)
from src.analysis.metrics import (
    MAX_BITS,
    UndefinedMetricError,
    aligned_rms,
    bits_of_precision,
    normalized_rms,
    orthogonality_error,
    random_baseline_rms,
    rms,
)

__all__ = [
    "DEFAULT_BIT_TARGETS",
    "MAX_BITS",
    "LowerBoundMeasurement",
    "LowerBoundViolationError",
    "UndefinedMetricError",
    "aligned_rms",
    "bits_of_precision",
    "check_lower_bound",
    "lower_bound_report",
    "lower_bound_table",
    "normalized_rms",
    "orthogonality_error",
    "random_baseline_rms",
    "rms",
]

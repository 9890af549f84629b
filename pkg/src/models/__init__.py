"""Data models for victims, API surfaces, recoveries and experiments."""

from src.models.victim import NormKind, Precision, VictimConfigError, VictimSpec
from src.models.oracle import ApiConfig, ApiMode, LedgerSnapshot, LogitBias, TopKResponse
from src.models.recovery import EntryStatus, IntervalBounds, Normalization, RecoveredLogits
from src.models.extraction import (
    EllipsoidFit,
    NormDetection,
    QueryMatrix,
    SpectrumReport,
    StolenLayer,
    SymmetryKind,
)
from src.models.experiment import (
    AttackName,
    AttackSettings,
    ConfigError,
    DefenseKind,
    ExperimentConfig,
    Report,
    RunMetrics,
    TransportKind,
)

__all__ = [
    "ApiConfig",
    "ApiMode",
    "AttackName",
    "AttackSettings",
    "ConfigError",
    "DefenseKind",
    "EllipsoidFit",
    "EntryStatus",
    "ExperimentConfig",
    "IntervalBounds",
    "LedgerSnapshot",
    "LogitBias",
    "NormDetection",
    "NormKind",
    "Normalization",
    "Precision",
    "QueryMatrix",
    "RecoveredLogits",
    "Report",
    "RunMetrics",
    "SpectrumReport",
    "StolenLayer",
    "SymmetryKind",
    "TopKResponse",
    "TransportKind",
    "VictimConfigError",
    "VictimSpec",
]

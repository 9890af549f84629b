"""Experiment configuration and per-run reports."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import pandas as pd
from pydantic import BaseModel, Field, field_validator

from src import __version__
from src.models.oracle import ApiConfig, ApiMode
from src.models.victim import VictimSpec
from src.oracle.errors import StealerError


class ConfigError(StealerError, ValueError):
    """An experiment asks for something its API surface cannot provide."""


class AttackName(str, Enum):
    """Attacks the harness can run."""

    REFERENCE_TOKEN = "reference_token"
    MULTI_TOKEN = "multi_token"
    K_LOGPROB = "k_logprob"
    SINGLE_LOGPROB = "single_logprob"
    LEAST_SQUARES = "least_squares"
    BINARIZED = "binarized"
    BINARY_SEARCH = "binary_search"
    HYPERRECTANGLE = "hyperrectangle"
    ONE_OF_N = "one_of_n"
    HIDDEN_DIM = "hidden_dim"
    LAYER = "layer"
    LAYER_ORTHOGONAL = "layer_orthogonal"
    NORM = "norm"


class DefenseKind(str, Enum):
    """Deployment-side mitigations a sweep can apply."""

    NOISE = "noise"
    QUANTIZATION = "quantization"
    SPOOFING = "spoofing"
    BIAS_XOR_LOGPROBS = "bias_xor_logprobs"
    BLOCK_LIST = "block_list"
    BIAS_RATE_LIMIT = "bias_rate_limit"


class TransportKind(str, Enum):
    """How the harness reaches the victim."""

    IN_PROCESS = "in_process"
    ASGI = "asgi"
    HTTP = "http"


LOGIT_ATTACK_MODES: dict[AttackName, tuple[ApiMode, ...]] = {
    AttackName.REFERENCE_TOKEN: (ApiMode.TOPK_LOGPROBS,),
    AttackName.MULTI_TOKEN: (ApiMode.GENERATION_LOGPROBS,),
    AttackName.K_LOGPROB: (ApiMode.TOPK_LOGPROBS, ApiMode.GENERATION_LOGPROBS),
    AttackName.SINGLE_LOGPROB: (ApiMode.TOPK_LOGPROBS, ApiMode.GENERATION_LOGPROBS),
    AttackName.LEAST_SQUARES: (ApiMode.TOPK_LOGPROBS, ApiMode.GENERATION_LOGPROBS),
    AttackName.BINARIZED: (ApiMode.TOP1_BINARY_BIAS,),
    AttackName.BINARY_SEARCH: (ApiMode.ARGMAX_ONLY,),
    AttackName.HYPERRECTANGLE: (ApiMode.ARGMAX_ONLY,),
    AttackName.ONE_OF_N: (ApiMode.ARGMAX_ONLY,),
}

EXTRACTION_ATTACKS = (
    AttackName.HIDDEN_DIM,
    AttackName.LAYER,
    AttackName.LAYER_ORTHOGONAL,
    AttackName.NORM,
)

# Surface each attack gets when the settings do not name one.
DEFAULT_ATTACK_API: dict[AttackName, dict[str, Any]] = {
    AttackName.REFERENCE_TOKEN: {"mode": ApiMode.TOPK_LOGPROBS, "k": 5},
    AttackName.MULTI_TOKEN: {"mode": ApiMode.GENERATION_LOGPROBS, "k": 5},
    AttackName.K_LOGPROB: {"mode": ApiMode.TOPK_LOGPROBS, "k": 5},
    AttackName.SINGLE_LOGPROB: {"mode": ApiMode.TOPK_LOGPROBS, "k": 1},
    AttackName.LEAST_SQUARES: {"mode": ApiMode.TOPK_LOGPROBS, "k": 1},
    AttackName.BINARIZED: {"mode": ApiMode.TOP1_BINARY_BIAS, "k": 1},
    AttackName.BINARY_SEARCH: {"mode": ApiMode.ARGMAX_ONLY},
    AttackName.HYPERRECTANGLE: {"mode": ApiMode.ARGMAX_ONLY},
    AttackName.ONE_OF_N: {"mode": ApiMode.ARGMAX_ONLY},
}


def required_modes(name: AttackName, params: dict[str, Any]) -> tuple[ApiMode, ...]:
    """API modes an attack can run against.

    Extraction attacks read full logit vectors, or recover each row first
    with the logit attack named by `params["via"]`.
    """
    if name in LOGIT_ATTACK_MODES:
        return LOGIT_ATTACK_MODES[name]
    via = params.get("via")
    if via is None:
        return (ApiMode.ALL_LOGITS,)
    try:
        inner = AttackName(via)
    except ValueError:
        raise ConfigError(f"unknown recovery attack '{via}' for {name.value}")
    if inner not in LOGIT_ATTACK_MODES or inner == AttackName.MULTI_TOKEN:
        raise ConfigError(f"{name.value} cannot recover rows with {inner.value}")
    return LOGIT_ATTACK_MODES[inner]


class AttackSettings(BaseModel):
    """One attack in a suite, with its API surface and parameters."""

    name: AttackName
    label: Optional[str] = Field(None, description="Row label in reports")
    api: Optional[ApiConfig] = None
    params: dict[str, Any] = Field(default_factory=dict)
    prompts: int = Field(1, ge=1, description="Prompts attacked per run")

    @property
    def display_name(self) -> str:
        return self.label or self.name.value

    def effective_api(self) -> ApiConfig:
        if self.api is not None:
            return self.api
        via = self.params.get("via")
        if self.name in EXTRACTION_ATTACKS:
            if via is None:
                return ApiConfig(mode=ApiMode.ALL_LOGITS)
            return ApiConfig(**DEFAULT_ATTACK_API[AttackName(via)])
        return ApiConfig(**DEFAULT_ATTACK_API[self.name])

    def check_compatibility(self) -> None:
        mode = self.effective_api().mode
        allowed = required_modes(self.name, self.params)
        if mode not in allowed:
            raise ConfigError(
                f"attack {self.display_name} needs one of {[m.value for m in allowed]}, "
                f"configured for {mode.value}"
            )


class ExperimentConfig(BaseModel):
    """Victims, attacks and seeds for one suite, plus sweep ranges."""

    name: str = "experiment"
    victims: list[VictimSpec] = Field(..., min_length=1)
    attacks: list[AttackSettings] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: Optional[Path] = Field(None, description="Where report.json/report.csv go")

    transport: TransportKind = TransportKind.IN_PROCESS
    bind_host: str = "127.0.0.1"
    max_concurrency: int = Field(4, ge=1)
    record_timing: bool = Field(False, description="Wall time makes reports non-reproducible")

    # Defense sweeps
    noise_sigmas: list[float] = Field(default_factory=lambda: [0.0, 1e-4, 1e-3, 1e-2, 1e-1])
    quantization_bits: list[Optional[int]] = Field(default_factory=lambda: [None, 8, 4])
    spoof_target_dim: Optional[int] = None
    blocked_tokens: list[int] = Field(default_factory=lambda: [1, 2, 3])
    bias_rate_limit: Optional[int] = Field(None, ge=0, description="T; defaults to h / 5")

    # Lower-bound report
    bit_targets: list[float] = Field(default_factory=lambda: [6.0, 12.0, 18.0, 23.0])
    lower_bound_max_rounds: int = Field(5000, ge=1)

    @field_validator("noise_sigmas")
    @classmethod
    def _check_sigmas(cls, value: list[float]) -> list[float]:
        if any(s < 0 or not math.isfinite(s) for s in value):
            raise ValueError("noise sigmas must be finite and non-negative")
        return value

    def check_compatibility(self) -> None:
        """Raise ConfigError for any attack its API mode cannot serve."""
        for attack in self.attacks:
            attack.check_compatibility()

    def config_hash(self) -> str:
        payload = self.model_dump_json(exclude={"output_dir"})
        return hashlib.sha256(payload.encode()).hexdigest()

    def revision(self) -> str:
        return f"{__version__}+{self.config_hash()[:12]}"


# ============================================================================
# Reports
# ============================================================================

METRIC_COLUMNS = [
    "extracted_dim",
    "rms",
    "normalized_rms",
    "baseline_rms",
    "bits",
    "queries",
    "logits",
    "queries_per_logit",
    "tokens",
    "tokens_per_logit",
    "missing",
    "retries",
    "wall_time_s",
]
KEY_COLUMNS = ["victim", "attack", "defense", "setting", "mode", "seed"]
REPORT_COLUMNS = KEY_COLUMNS + ["succeeded", "error", "detail"] + METRIC_COLUMNS


@dataclass
class RunMetrics:
    """Metrics for one (victim, attack, seed) run.

    queries and tokens come straight from the session ledger, so
    queries_per_logit is always ledger.queries / logits.
    """

    victim: str
    attack: str
    seed: int
    mode: str
    defense: str = "none"
    setting: str = ""
    succeeded: bool = True
    error: Optional[str] = None
    detail: Optional[str] = None
    extracted_dim: Optional[int] = None
    rms: Optional[float] = None
    normalized_rms: Optional[float] = None
    baseline_rms: Optional[float] = None
    bits: Optional[float] = None
    queries: int = 0
    logits: int = 0
    tokens: int = 0
    missing: int = 0
    retries: int = 0
    wall_time_s: Optional[float] = None

    @property
    def queries_per_logit(self) -> Optional[float]:
        return self.queries / self.logits if self.logits else None

    @property
    def tokens_per_logit(self) -> Optional[float]:
        return self.tokens / self.logits if self.logits else None

    def to_row(self) -> dict[str, Any]:
        row = asdict(self)
        row["queries_per_logit"] = self.queries_per_logit
        row["tokens_per_logit"] = self.tokens_per_logit
        return {column: row[column] for column in REPORT_COLUMNS}


def _clean(value: Any) -> Any:
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass
class Report:
    """Per-run metrics with seed aggregates and provenance."""

    name: str
    runs: list[RunMetrics] = field(default_factory=list)
    config_hash: str = ""
    revision: str = ""

    @classmethod
    def for_config(cls, config: ExperimentConfig, runs: list[RunMetrics]) -> "Report":
        return cls(
            name=config.name,
            runs=runs,
            config_hash=config.config_hash(),
            revision=config.revision(),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([run.to_row() for run in self.runs], columns=REPORT_COLUMNS)

    def aggregate(self) -> pd.DataFrame:
        """Mean and standard deviation of every metric over seeds."""
        frame = self.to_frame()
        if frame.empty:
            return pd.DataFrame()
        keys = [c for c in KEY_COLUMNS if c != "seed"]
        numeric = frame[keys + ["succeeded"] + METRIC_COLUMNS].copy()
        numeric[METRIC_COLUMNS] = numeric[METRIC_COLUMNS].apply(pd.to_numeric, errors="coerce")
        numeric["succeeded"] = numeric["succeeded"].astype(float)
        grouped = numeric.groupby(keys, sort=False, dropna=False)
        stats = grouped[["succeeded"] + METRIC_COLUMNS].agg(["mean", "std"])
        stats.columns = [f"{metric}_{stat}" for metric, stat in stats.columns]
        stats.insert(0, "runs", grouped.size())
        return stats.reset_index()

    def run(self, attack: str, seed: Optional[int] = None) -> RunMetrics:
        """The first run of an attack label, optionally for one seed."""
        for run in self.runs:
            if run.attack == attack and (seed is None or run.seed == seed):
                return run
        raise KeyError(f"no run for attack '{attack}'")

    def to_dict(self) -> dict[str, Any]:
        aggregate = self.aggregate()
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "revision": self.revision,
            "runs": [{k: _clean(v) for k, v in run.to_row().items()} for run in self.runs],
            "aggregate": [
                {k: _clean(v) for k, v in row.items()} for row in aggregate.to_dict("records")
            ],
        }

    def write(self, output_dir: Path) -> tuple[Path, Path]:
        """Write report.json and report.csv; returns both paths."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        json_path = output_dir / "report.json"
        csv_path = output_dir / "report.csv"
        with open(json_path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        self.to_frame().to_csv(csv_path, index=False)
        return json_path, csv_path

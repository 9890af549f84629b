"""Victim model specification."""

from __future__ import annotations

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class VictimConfigError(ValueError):
    """Raised when a victim specification violates its invariants."""


class NormKind(str, Enum):
    """Normalization layer applied before the final projection."""

    NONE = "none"
    RMS_NORM = "rmsnorm"
    LAYER_NORM = "layernorm"


class Precision(str, Enum):
    """Arithmetic precision used to evaluate and emit logits."""

    FP64 = "fp64"
    FP32 = "fp32"
    FP16 = "fp16"


class VictimSpec(BaseModel):
    """Everything needed to rebuild a victim bit-for-bit."""

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    name: str = Field("victim", description="Label used in reports")
    vocab_size: int = Field(..., alias="l", gt=1, description="Vocabulary size l")
    hidden_dim: int = Field(..., alias="h", gt=0, description="Hidden dimension h")
    seed: int = Field(0, ge=0, lt=2**64)
    norm_kind: NormKind = NormKind.RMS_NORM
    norm_bias_enabled: bool = False
    identity_norm_scale: bool = Field(False, description="Use a unit normalization scale")
    precision: Precision = Precision.FP64

    # Appendix-A style effective-rank loss
    planted_rank_deficit: int = Field(0, ge=0)

    # Defenses
    logit_noise_sigma: float = Field(0.0, ge=0)
    noise_iid: bool = Field(False, description="Draw fresh noise per query instead of per prompt")
    weight_quantization_bits: Optional[int] = None
    spoof_target_dim: Optional[int] = None
    spoof_singular_fraction: float = Field(
        0.5, gt=0, le=1, description="Extra singular values relative to the smallest genuine one"
    )
    spoof_noise_scale: float = Field(
        1.0, ge=0, description="Spoof noise std relative to the mean activation std"
    )

    @field_validator("weight_quantization_bits")
    @classmethod
    def _check_quantization(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value not in (4, 8):
            raise VictimConfigError(f"weight_quantization_bits must be 4 or 8, got {value}")
        return value

    @model_validator(mode="after")
    def _check_dimensions(self) -> "VictimSpec":
        check_spec_invariants(self)
        return self

    @property
    def effective_rank(self) -> int:
        return self.hidden_dim - self.planted_rank_deficit

    @property
    def has_defenses(self) -> bool:
        return (
            self.logit_noise_sigma > 0
            or self.weight_quantization_bits is not None
            or self.spoof_target_dim is not None
        )

    def with_seed(self, seed: int) -> "VictimSpec":
        return self.model_copy(update={"seed": seed})


def check_spec_invariants(spec: VictimSpec) -> None:
    """Raise VictimConfigError when the dimensional invariants do not hold."""
    if spec.hidden_dim >= spec.vocab_size:
        raise VictimConfigError(
            f"hidden_dim ({spec.hidden_dim}) must be smaller than vocab_size ({spec.vocab_size})"
        )
    if spec.planted_rank_deficit >= spec.hidden_dim:
        raise VictimConfigError(
            f"planted_rank_deficit ({spec.planted_rank_deficit}) must be below "
            f"hidden_dim ({spec.hidden_dim})"
        )
    if spec.spoof_target_dim is not None:
        if spec.spoof_target_dim <= spec.hidden_dim:
            raise VictimConfigError(
                f"spoof_target_dim ({spec.spoof_target_dim}) must exceed "
                f"hidden_dim ({spec.hidden_dim})"
            )
        if spec.spoof_target_dim >= spec.vocab_size:
            raise VictimConfigError(
                f"spoof_target_dim ({spec.spoof_target_dim}) must be below "
                f"vocab_size ({spec.vocab_size})"
            )

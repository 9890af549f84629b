"""Shared pytest fixtures for the test suite."""

from typing import Optional, Sequence

import numpy as np
import pytest

from src.models.oracle import ApiConfig, ApiMode
from src.models.victim import NormKind, VictimSpec
from src.oracle.local import LocalSession
from src.victim.builder import build_victim
from src.victim.model import Victim


# ==================== Victim Fixtures ====================

@pytest.fixture
def tiny_spec() -> VictimSpec:
    """l=100, h=8: small enough for every attack to finish in well under a second."""
    return VictimSpec(name="tiny", l=100, h=8, seed=1)


@pytest.fixture
def tiny_victim(tiny_spec: VictimSpec) -> Victim:
    return build_victim(tiny_spec)


@pytest.fixture
def sphere_victim() -> Victim:
    """Unit-scale RMSNorm without bias, so hidden states lie on a sphere of radius sqrt(h)."""
    return build_victim(
        VictimSpec(name="sphere", l=200, h=16, seed=19, identity_norm_scale=True)
    )


@pytest.fixture
def layernorm_victim() -> Victim:
    return build_victim(
        VictimSpec(
            name="layernorm", l=100, h=8, seed=13,
            norm_kind=NormKind.LAYER_NORM, norm_bias_enabled=True,
        )
    )


@pytest.fixture
def rmsnorm_bias_victim() -> Victim:
    return build_victim(
        VictimSpec(
            name="rmsnorm_bias", l=100, h=8, seed=17,
            norm_kind=NormKind.RMS_NORM, norm_bias_enabled=True,
        )
    )


# ==================== Session Fixtures ====================

@pytest.fixture
def all_logits_session(tiny_victim: Victim) -> LocalSession:
    return LocalSession(tiny_victim, ApiConfig(mode=ApiMode.ALL_LOGITS))


@pytest.fixture
def topk_session(tiny_victim: Victim) -> LocalSession:
    return LocalSession(tiny_victim, ApiConfig(mode=ApiMode.TOPK_LOGPROBS, k=5))


@pytest.fixture
def argmax_session(tiny_victim: Victim) -> LocalSession:
    return LocalSession(tiny_victim, ApiConfig(mode=ApiMode.ARGMAX_ONLY))


# ==================== Helper Functions ====================

PROMPT = (5, 17, 42)


def make_session(victim: Victim, mode: ApiMode, **overrides) -> LocalSession:
    """Create a local session with the given mode and ApiConfig overrides."""
    return LocalSession(victim, ApiConfig(mode=mode, **overrides))


def true_gaps(
    victim: Victim, prompt: Sequence[int], tokens: Sequence[int], reference: Optional[int] = None
) -> np.ndarray:
    """z_t - z_R for each token, R being the argmax unless given."""
    z = victim.logits(prompt)
    if reference is None:
        reference = int(np.argmax(z))
    return z[np.asarray(tokens)] - z[reference]

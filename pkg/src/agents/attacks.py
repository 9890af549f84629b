"""
Attack registry: run one named attack against one session and score it.

Logit attacks are scored against the victim's served logits with
bits_of_precision. Extraction attacks are scored against the victim's final
layer (restricted to the surviving columns) after affine alignment.
"""

from __future__ import annotations

from functools import partial
from typing import Any, Optional, Sequence

import numpy as np

from src.analysis.metrics import (
    aligned_rms,
    bits_of_precision,
    normalized_rms,
    orthogonality_error,
    random_baseline_rms,
)
from src.extract import (
    Recoverer,
    collect_query_matrix,
    detect_norm_layer,
    extract_hidden_dim,
    extract_layer,
    extract_layer_orthogonal,
    orthogonal_residual,
    required_queries,
    steal_hidden_dim,
)
from src.extract.collect import Recovery
from src.models.experiment import EXTRACTION_ATTACKS, AttackName, AttackSettings, RunMetrics
from src.models.extraction import QueryMatrix
from src.models.recovery import IntervalBounds, RecoveredLogits
from src.oracle.base import QuerySession
from src.oracle.errors import ApiRejection, StealerError
from src.recover import (
    Centering,
    HyperrectangleConfig,
    KLogprobConfig,
    collect_logprob_observations,
    recover_binarized,
    recover_binary_search,
    recover_hyperrectangle,
    recover_k_logprob,
    recover_least_squares,
    recover_multi_token,
    recover_reference_token,
    recover_single_logprob,
)
from src.victim.model import Victim
from src.victim.prompts import random_prompts

DEFAULT_EXPECTED_DIM = 16
ORTHOGONAL_EXTRA_QUERIES = 8


async def _least_squares(session: QuerySession, prompt: Sequence[int], **params: Any) -> Recovery:
    observations = await collect_logprob_observations(
        session,
        prompt,
        bias_magnitudes=params.get("bias_magnitudes", (10.0,)),
        include_unbiased=params.get("include_unbiased", False),
    )
    return recover_least_squares(
        observations, session.vocab_size, pin_token=params.get("pin_token", 0)
    )


def _hyperrectangle_config(params: dict[str, Any], centering: Centering) -> HyperrectangleConfig:
    return HyperrectangleConfig(
        rounds=params.get("rounds", 100),
        centering=centering,
        batch_size=params.get("batch_size"),
        bias_magnitude=params.get("bias_magnitude"),
        target_width=params.get("target_width"),
    )


async def _binary_search(session: QuerySession, prompt: Sequence[int], **params: Any) -> Recovery:
    """Bisection to epsilon, or to B / 2^queries_per_token when no epsilon is given."""
    bound = params.get("bias_magnitude") or session.config.bias_bound
    epsilon = params.get("epsilon") or bound / 2.0 ** params.get("queries_per_token", 10)
    return await recover_binary_search(
        session, prompt, epsilon, params.get("bias_magnitude"), params.get("tokens")
    )


def logit_recoverer(name: AttackName, params: Optional[dict[str, Any]] = None) -> Recoverer:
    """A (session, prompt) coroutine for a single-prompt logit attack."""
    params = dict(params or {})
    bias = params.get("bias_magnitude")
    tokens = params.get("tokens")

    if name == AttackName.REFERENCE_TOKEN:
        return partial(recover_reference_token, bias_magnitude=bias)
    if name == AttackName.K_LOGPROB:
        return partial(
            recover_k_logprob,
            bias_magnitude=bias,
            config=KLogprobConfig(**params.get("config", {})),
        )
    if name == AttackName.SINGLE_LOGPROB:
        return partial(
            recover_single_logprob,
            bias_magnitude=bias,
            config=KLogprobConfig(**params.get("config", {})),
        )
    if name == AttackName.LEAST_SQUARES:
        return partial(_least_squares, **params)
    if name == AttackName.BINARIZED:
        return recover_binarized
    if name == AttackName.BINARY_SEARCH:
        return partial(_binary_search, **params)
    if name == AttackName.HYPERRECTANGLE:
        config = _hyperrectangle_config(params, Centering.MIDPOINT)
        return partial(recover_hyperrectangle, config=config, tokens=tokens)
    if name == AttackName.ONE_OF_N:
        config = _hyperrectangle_config(params, Centering.ONE_OF_N)
        return partial(recover_hyperrectangle, config=config, tokens=tokens)
    raise ValueError(f"{name.value} is not a single-prompt logit attack")


def _as_recovered(result: Recovery, vocab_size: int) -> RecoveredLogits:
    if isinstance(result, IntervalBounds):
        return result.to_recovered(vocab_size)
    return result


def _score_logits(
    metrics: RunMetrics, victim: Victim, prompts: list[Sequence[int]], results: list[Recovery]
) -> None:
    bits = []
    for prompt, result in zip(prompts, results):
        recovered = _as_recovered(result, victim.vocab_size)
        bits.append(bits_of_precision(victim.logits(prompt), recovered))
        metrics.logits += recovered.logits_recovered
        metrics.missing += recovered.missing_count
        metrics.retries += recovered.retries
    metrics.bits = float(np.median(bits))


async def _run_logit_attack(
    settings: AttackSettings,
    session: QuerySession,
    victim: Victim,
    seed: int,
    metrics: RunMetrics,
) -> None:
    params = settings.params
    prompts: list[Sequence[int]] = list(random_prompts(settings.prompts, victim.vocab_size, seed))

    if settings.name == AttackName.MULTI_TOKEN:
        m = params.get("m", 4)
        x = params.get("dominant_token", 0)
        expanded: list[Sequence[int]] = []
        results: list[Recovery] = []
        for prompt in prompts:
            positions = await recover_multi_token(
                session,
                prompt,
                m,
                bias_magnitude=params.get("bias_magnitude"),
                separation=params.get("separation", 10.0),
                dominant_token=x,
            )
            expanded.extend(tuple(prompt) + (x,) * j for j in range(m))
            results.extend(positions)
        _score_logits(metrics, victim, expanded, results)
        return

    recoverer = logit_recoverer(settings.name, params)
    results = [await recoverer(session, prompt) for prompt in prompts]
    _score_logits(metrics, victim, prompts, results)


def _truth_for(victim: Victim, matrix: QueryMatrix) -> np.ndarray:
    """The victim's layer on the matrix columns, anchored like the rows when they were recovered."""
    assert matrix.columns is not None
    truth = victim.weights[matrix.columns]
    if matrix.normalization is not None:
        truth = truth - truth[0]
    return truth


async def _query_matrix(
    settings: AttackSettings,
    session: QuerySession,
    seed: int,
    recoverer: Optional[Recoverer],
    metrics: RunMetrics,
) -> tuple[QueryMatrix, int]:
    """Collect a matrix and its extracted dimension, either at a fixed n or by doubling."""
    params = settings.params
    if "n" in params:
        matrix = await collect_query_matrix(session, params["n"], seed=seed, recoverer=recoverer)
        dim = params.get("dim") or extract_hidden_dim(matrix)[0]
    else:
        dim, _, matrix = await steal_hidden_dim(
            session,
            params.get("expected", DEFAULT_EXPECTED_DIM),
            seed=seed,
            recoverer=recoverer,
            max_queries=params.get("max_queries", 4 * session.vocab_size),
        )
        dim = params.get("dim") or dim
    metrics.extracted_dim = int(dim)
    return matrix, int(dim)


async def _run_extraction(
    settings: AttackSettings,
    session: QuerySession,
    victim: Victim,
    seed: int,
    metrics: RunMetrics,
) -> None:
    params = settings.params
    recoverer = None
    if params.get("via") is not None:
        recoverer = logit_recoverer(AttackName(params["via"]), params.get("via_params"))

    if settings.name == AttackName.LAYER_ORTHOGONAL:
        dim = params.get("dim")
        if dim is None:
            _, dim = await _query_matrix(settings, session, seed, recoverer, metrics)
        n = required_queries(dim) + params.get("extra_queries", ORTHOGONAL_EXTRA_QUERIES)
        matrix = await collect_query_matrix(session, n, seed=seed, recoverer=recoverer)
        stolen = extract_layer_orthogonal(matrix, dim)
        truth = _truth_for(victim, matrix)
        metrics.extracted_dim = dim
        metrics.rms = aligned_rms(stolen.matrix, truth)
        residual = orthogonal_residual(stolen.matrix, truth)
        metrics.detail = f"orthogonality_error={orthogonality_error(residual):.3e}"
        return

    matrix, dim = await _query_matrix(settings, session, seed, recoverer, metrics)
    if settings.name == AttackName.HIDDEN_DIM:
        metrics.detail = f"n={matrix.n}"
        return
    if settings.name == AttackName.NORM:
        metrics.detail = detect_norm_layer(matrix, params.get("hidden_dim")).value
        return

    stolen = extract_layer(matrix, dim)
    truth = _truth_for(victim, matrix)
    metrics.rms = aligned_rms(stolen.matrix, truth)
    metrics.normalized_rms = normalized_rms(stolen.matrix, truth)
    metrics.baseline_rms = random_baseline_rms(truth, dim, seed=seed)


async def run_attack(
    settings: AttackSettings,
    session: QuerySession,
    victim: Victim,
    seed: int = 0,
    defense: str = "none",
    setting: str = "",
) -> RunMetrics:
    """Run one attack on a fresh session and collect its metrics.

    API rejections and extraction failures do not raise; they come back as an
    unsuccessful run carrying the error code or class name.
    """
    metrics = RunMetrics(
        victim=victim.spec.name,
        attack=settings.display_name,
        seed=seed,
        mode=session.config.mode.value,
        defense=defense,
        setting=setting,
    )
    try:
        if settings.name in EXTRACTION_ATTACKS:
            await _run_extraction(settings, session, victim, seed, metrics)
        else:
            await _run_logit_attack(settings, session, victim, seed, metrics)
    except ApiRejection as e:
        metrics.succeeded = False
        metrics.error = e.code
        metrics.detail = e.message
    except StealerError as e:
        metrics.succeeded = False
        metrics.error = type(e).__name__
        metrics.detail = str(e)

    snapshot = session.ledger.snapshot()
    metrics.queries = snapshot.queries
    metrics.tokens = snapshot.tokens_total
    return metrics

"""Post-hoc architecture spoofing: make the victim look wider than it is."""

from typing import Optional

import numpy as np
import scipy.linalg

from src.models.victim import VictimConfigError
from src.utils.log import log
from src.victim.model import Victim
from src.victim.prompts import STREAM_SPOOF_BASIS, keyed_rng, random_prompts

UTILITY_SAMPLE = 1000
MIN_ARGMAX_AGREEMENT = 0.99
ACTIVATION_SAMPLE = 256
MAX_HALVINGS = 24


def orthogonal_extension(weights: np.ndarray, extra: int, seed: int) -> np.ndarray:
    """Orthonormal columns spanning a random subspace orthogonal to range(weights)."""
    l = weights.shape[0]
    basis = scipy.linalg.orth(weights)
    if basis.shape[1] + extra > l:
        raise VictimConfigError(
            f"cannot add {extra} orthogonal columns to a rank-{basis.shape[1]} matrix with {l} rows"
        )
    candidate = keyed_rng(seed, STREAM_SPOOF_BASIS).standard_normal((l, extra))
    for _ in range(2):
        candidate -= basis @ (basis.T @ candidate)
    columns, _ = np.linalg.qr(candidate)
    return columns


def argmax_agreement(original: Victim, spoofed: Victim, sample: int = UTILITY_SAMPLE) -> float:
    """Fraction of sampled prompts whose top token is unchanged by spoofing."""
    prompts = random_prompts(sample, original.vocab_size, seed=original.spec.seed + 1)
    before = np.argmax(original.logits_batch(prompts), axis=1)
    after = np.argmax(spoofed.logits_batch(prompts), axis=1)
    return float(np.mean(before == after))


def apply_spoofing(
    victim: Victim,
    target_dim: int,
    singular_fraction: Optional[float] = None,
    noise_scale: Optional[float] = None,
    min_agreement: float = MIN_ARGMAX_AGREEMENT,
) -> Victim:
    """Extend the served projection to l x target_dim with columns orthogonal to its range.

    The extra singular values start at `singular_fraction` times the smallest
    genuine singular value and are halved until spoofed argmaxes agree with the
    original on at least `min_agreement` of a prompt sample. The forward pass
    appends prompt-keyed Gaussian noise of dimension target_dim - h to g(p).
    """
    h = victim.hidden_dim
    if target_dim <= h:
        raise VictimConfigError(f"target_dim ({target_dim}) must exceed hidden_dim ({h})")
    spec = victim.spec
    fraction = spec.spoof_singular_fraction if singular_fraction is None else singular_fraction
    scale = spec.spoof_noise_scale if noise_scale is None else noise_scale
    extra = target_dim - h
    requested = fraction

    # the served matrix, which differs from W once weights are quantized
    served = victim.projection
    genuine = scipy.linalg.svdvals(served)
    smallest = float(genuine[spec.effective_rank - 1])
    columns = orthogonal_extension(served, extra, spec.seed)

    sample = random_prompts(ACTIVATION_SAMPLE, victim.vocab_size, seed=spec.seed + 2)
    activation_std = float(victim.hidden_batch(sample).std(axis=0).mean())
    noise_std = scale * activation_std

    for _ in range(MAX_HALVINGS):
        projection = np.hstack([served, columns * (fraction * smallest)])
        spoofed = victim.with_projection(projection, spoof_noise_std=noise_std)
        if noise_std == 0 or argmax_agreement(victim, spoofed) >= min_agreement:
            if fraction != requested:
                log(
                    "victim",
                    f"spoofing {spec.name} to {target_dim}: singular fraction reduced "
                    f"from {requested:g} to {fraction:g} to keep argmax agreement",
                    "warning",
                )
            return spoofed
        fraction /= 2.0
    raise VictimConfigError(
        f"spoofing to {target_dim} could not preserve {min_agreement:.0%} argmax agreement"
    )

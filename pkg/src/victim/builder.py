"""Construct victims from specifications."""

import numpy as np

from src.models.victim import VictimSpec, check_spec_invariants
from src.victim.model import Victim
from src.victim.numerics import quantize_columns
from src.victim.prompts import STREAM_NORM, STREAM_WEIGHTS, keyed_rng
from src.victim.spoofing import apply_spoofing


def build_victim(spec: VictimSpec) -> Victim:
    """Build the victim described by `spec`; identical specs give bit-identical victims."""
    check_spec_invariants(spec)
    l, h, d = spec.vocab_size, spec.hidden_dim, spec.planted_rank_deficit
    rng = keyed_rng(spec.seed, STREAM_WEIGHTS)

    if d == 0:
        weights = rng.standard_normal((l, h)) / np.sqrt(h)
    else:
        # rank h - d by construction
        left = rng.standard_normal((l, h - d)) / np.sqrt(h - d)
        right = rng.standard_normal((h - d, h)) / np.sqrt(h)
        weights = left @ right

    layer_in = rng.standard_normal((h, h)) * (1.5 / np.sqrt(h))
    layer_in_bias = rng.standard_normal(h) * 0.1
    layer_out = rng.standard_normal((h, h)) / np.sqrt(h)

    norm_rng = keyed_rng(spec.seed, STREAM_NORM)
    if spec.identity_norm_scale:
        norm_scale = np.ones(h)
    else:
        norm_scale = norm_rng.uniform(0.5, 1.5, size=h)
    norm_bias = norm_rng.standard_normal(h) * 0.5 if spec.norm_bias_enabled else None

    projection = None
    if spec.weight_quantization_bits is not None:
        projection = quantize_columns(weights, spec.weight_quantization_bits)

    victim = Victim(
        spec=spec,
        weights=weights,
        layer_in=layer_in,
        layer_in_bias=layer_in_bias,
        layer_out=layer_out,
        norm_scale=norm_scale,
        norm_bias=norm_bias,
        projection=projection,
    )
    if spec.spoof_target_dim is not None:
        victim = apply_spoofing(victim, spec.spoof_target_dim)
    return victim

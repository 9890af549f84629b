"""Synthetic victim language model: a secret final layer over a seeded hidden-state map."""

from __future__ import annotations

import threading
from typing import Optional, Sequence

import numpy as np

from src.models.oracle import Prompt
from src.models.victim import NormKind, VictimSpec
from src.victim.numerics import project, round_to_precision
from src.victim.prompts import STREAM_HIDDEN, STREAM_NOISE, STREAM_SPOOF_NOISE, keyed_rng


class TokenRangeError(ValueError):
    """Raised when a prompt contains token ids outside the vocabulary."""


class Victim:
    """The oracle every attack tries to steal from.

    logits(p) = W . g(p), where g is a seeded two-layer map from the token
    sequence followed by the configured normalization layer. Evaluation is
    read-only after construction and safe to share across sessions.
    """

    def __init__(
        self,
        spec: VictimSpec,
        weights: np.ndarray,
        layer_in: np.ndarray,
        layer_in_bias: np.ndarray,
        layer_out: np.ndarray,
        norm_scale: np.ndarray,
        norm_bias: Optional[np.ndarray] = None,
        projection: Optional[np.ndarray] = None,
        spoof_noise_std: float = 0.0,
    ):
        self.spec = spec
        self.weights = weights
        self.projection = weights if projection is None else projection
        self.layer_in = layer_in
        self.layer_in_bias = layer_in_bias
        self.layer_out = layer_out
        self.norm_scale = norm_scale
        self.norm_bias = norm_bias
        self.spoof_noise_std = spoof_noise_std
        self._noise_lock = threading.Lock()
        self._noise_rng = keyed_rng(spec.seed, STREAM_NOISE) if spec.noise_iid else None

    @property
    def vocab_size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def hidden_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def spoof_dim(self) -> int:
        """Extra columns appended by architecture spoofing."""
        return int(self.projection.shape[1]) - self.hidden_dim

    def check_prompt(self, prompt: Sequence[int]) -> Prompt:
        tokens = tuple(int(t) for t in prompt)
        if not tokens:
            raise TokenRangeError("prompt must contain at least one token")
        for t in tokens:
            if t < 0 or t >= self.vocab_size:
                raise TokenRangeError(f"token id {t} outside vocabulary of {self.vocab_size}")
        return tokens

    def _normalize(self, pre: np.ndarray) -> np.ndarray:
        kind = self.spec.norm_kind
        if kind == NormKind.NONE:
            out = pre
        else:
            if kind == NormKind.LAYER_NORM:
                pre = pre - pre.mean(axis=1, keepdims=True)
            rms = np.sqrt(np.mean(pre**2, axis=1, keepdims=True))
            out = pre / rms * self.norm_scale
        if self.norm_bias is not None:
            out = out + self.norm_bias
        return out

    def hidden_batch(self, prompts: Sequence[Sequence[int]]) -> np.ndarray:
        """Final hidden states g(p), one row per prompt. Ground truth for tests only."""
        checked = [self.check_prompt(p) for p in prompts]
        h = self.hidden_dim
        seeds = np.stack(
            [keyed_rng(self.spec.seed, STREAM_HIDDEN, p).standard_normal(h) for p in checked]
        )
        activations = np.tanh(seeds @ self.layer_in.T + self.layer_in_bias)
        return self._normalize(activations @ self.layer_out.T)

    def hidden(self, prompt: Sequence[int]) -> np.ndarray:
        """g(p) for one prompt. Ground truth for tests only, never served by an API."""
        return self.hidden_batch([prompt])[0]

    def _spoof_noise(self, prompts: list[Prompt]) -> np.ndarray:
        extra = self.spoof_dim
        return np.stack(
            [
                keyed_rng(self.spec.seed, STREAM_SPOOF_NOISE, p).standard_normal(extra)
                * self.spoof_noise_std
                for p in prompts
            ]
        )

    def _logit_noise(self, prompts: list[Prompt]) -> np.ndarray:
        sigma = self.spec.logit_noise_sigma
        l = self.vocab_size
        if self._noise_rng is not None:
            with self._noise_lock:
                return self._noise_rng.standard_normal((len(prompts), l)) * sigma
        return np.stack(
            [keyed_rng(self.spec.seed, STREAM_NOISE, p).standard_normal(l) * sigma for p in prompts]
        )

    def logits_batch(
        self, prompts: Sequence[Sequence[int]], include_spoof_noise: bool = True
    ) -> np.ndarray:
        """Logit vectors at the configured precision, one row per prompt."""
        checked = [self.check_prompt(p) for p in prompts]
        hidden = self.hidden_batch(checked)
        if self.spoof_dim > 0:
            if include_spoof_noise:
                noise = self._spoof_noise(checked)
            else:
                noise = np.zeros((len(checked), self.spoof_dim))
            hidden = np.hstack([hidden, noise])
        logits = project(self.projection, hidden, self.spec.precision)
        if self.spec.logit_noise_sigma > 0:
            logits = round_to_precision(logits + self._logit_noise(checked), self.spec.precision)
        return logits

    def logits(self, prompt: Sequence[int], include_spoof_noise: bool = True) -> np.ndarray:
        return self.logits_batch([prompt], include_spoof_noise=include_spoof_noise)[0]

    def with_weights(self, weights: np.ndarray) -> "Victim":
        """Same hidden-state map with a hand-built final layer."""
        l, h = weights.shape
        if h != self.hidden_dim:
            raise ValueError(f"weights must have {self.hidden_dim} columns, got {h}")
        spec = self.spec.model_copy(
            update={
                "vocab_size": l,
                "planted_rank_deficit": 0,
                "weight_quantization_bits": None,
                "spoof_target_dim": None,
            }
        )
        return Victim(
            spec=spec,
            weights=np.array(weights, dtype=np.float64),
            layer_in=self.layer_in,
            layer_in_bias=self.layer_in_bias,
            layer_out=self.layer_out,
            norm_scale=self.norm_scale,
            norm_bias=self.norm_bias,
        )

    def with_projection(self, projection: np.ndarray, spoof_noise_std: float) -> "Victim":
        """Copy that projects through an extended matrix (architecture spoofing)."""
        return Victim(
            spec=self.spec,
            weights=self.weights,
            layer_in=self.layer_in,
            layer_in_bias=self.layer_in_bias,
            layer_out=self.layer_out,
            norm_scale=self.norm_scale,
            norm_bias=self.norm_bias,
            projection=projection,
            spoof_noise_std=spoof_noise_std,
        )

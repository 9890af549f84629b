"""Prompt generation and prompt-keyed randomness."""

from typing import Sequence

import numpy as np

from src.models.oracle import Prompt

# Stream identifiers keep the per-prompt generators independent.
STREAM_WEIGHTS = 1
STREAM_HIDDEN = 2
STREAM_NOISE = 3
STREAM_SPOOF_BASIS = 4
STREAM_SPOOF_NOISE = 5
STREAM_PROMPTS = 6
STREAM_NORM = 7


def keyed_rng(seed: int, stream: int, tokens: Sequence[int] = ()) -> np.random.Generator:
    """Generator that is a pure function of (seed, stream, tokens)."""
    entropy = [int(seed), stream, len(tokens), *(int(t) for t in tokens)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def random_prompts(
    n: int,
    vocab_size: int,
    seed: int = 0,
    min_length: int = 1,
    max_length: int = 8,
) -> list[Prompt]:
    """n distinct random token sequences.

    The sequence for n is a prefix of the sequence for any larger n, so callers
    can grow a query set without re-querying.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = keyed_rng(seed, STREAM_PROMPTS)
    prompts: list[Prompt] = []
    seen: set[Prompt] = set()
    attempts = 0
    while len(prompts) < n:
        attempts += 1
        if attempts > 100 * (n + 10):
            raise ValueError(f"cannot draw {n} distinct prompts from vocabulary {vocab_size}")
        length = int(rng.integers(min_length, max_length + 1))
        prompt = tuple(int(t) for t in rng.integers(0, vocab_size, size=length))
        if prompt in seen:
            continue
        seen.add(prompt)
        prompts.append(prompt)
    return prompts

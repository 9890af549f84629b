"""Information-theoretic lower bound on logprob-free query cost.

Each argmax answer from a query biasing N tokens carries at most log2(N)
bits, while pinning a logit to within epsilon over a range of B needs
log2(B / epsilon) bits.
"""

import math


def epsilon_for_bits(bits: float) -> float:
    """Precision target: `bits` of precision is an interval width of 2^-bits."""
    return 2.0 ** (-bits)


def per_logit_lower_bound(bias_bound: float, epsilon: float, n: int) -> float:
    """Minimum queries per logit, log2(B / epsilon) / log2(N)."""
    if bias_bound <= 0 or epsilon <= 0:
        raise ValueError("bias bound and epsilon must be positive")
    if n < 2:
        raise ValueError("the bound needs at least two candidate tokens per query")
    return max(0.0, math.log2(bias_bound / epsilon)) / math.log2(n)


def query_lower_bound(vocab_size: int, bias_bound: float, epsilon: float, n: int) -> float:
    """Minimum total queries to recover all l logits, l * log2(B / epsilon) / log2(N)."""
    if vocab_size <= 0:
        raise ValueError("vocab_size must be positive")
    return vocab_size * per_logit_lower_bound(bias_bound, epsilon, n)

"""Precision emulation and softmax helpers."""

import numpy as np
from scipy.special import log_softmax as _log_softmax

from src.models.victim import Precision

PRECISION_DTYPES: dict[Precision, type] = {
    Precision.FP64: np.float64,
    Precision.FP32: np.float32,
    Precision.FP16: np.float16,
}

# Rows per chunk when emulating fp16 products, bounds the n x l x h temporary.
_FP16_CHUNK = 32


def round_to_precision(values: np.ndarray, precision: Precision) -> np.ndarray:
    """Round to the nearest value representable at `precision`, returned as float64."""
    if precision == Precision.FP64:
        return np.asarray(values, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.asarray(values).astype(PRECISION_DTYPES[precision]).astype(np.float64)


def project(weights: np.ndarray, hidden: np.ndarray, precision: Precision) -> np.ndarray:
    """Compute hidden @ weights.T (rows of hidden are hidden states) at `precision`.

    fp16 is emulated: operands are rounded to fp16, every elementwise product is
    rounded to fp16 and the products are accumulated in fp32.
    """
    hidden = np.atleast_2d(hidden)
    if precision == Precision.FP64:
        return hidden @ weights.T
    if precision == Precision.FP32:
        out = hidden.astype(np.float32) @ weights.T.astype(np.float32)
        return out.astype(np.float64)

    w16 = weights.astype(np.float16).astype(np.float32)
    h16 = hidden.astype(np.float16).astype(np.float32)
    out = np.empty((h16.shape[0], w16.shape[0]), dtype=np.float32)
    for start in range(0, h16.shape[0], _FP16_CHUNK):
        block = h16[start : start + _FP16_CHUNK]
        with np.errstate(over="ignore"):
            products = (block[:, None, :] * w16[None, :, :]).astype(np.float16)
        out[start : start + _FP16_CHUNK] = products.astype(np.float32).sum(axis=2, dtype=np.float32)
    return round_to_precision(out, Precision.FP16)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Logprobs z - logsumexp(z); -inf entries stay -inf."""
    return _log_softmax(np.asarray(logits, dtype=np.float64))


def quantize_columns(weights: np.ndarray, bits: int) -> np.ndarray:
    """Symmetric per-column quantization to signed `bits`-bit integers."""
    levels = 2 ** (bits - 1) - 1
    scale = np.abs(weights).max(axis=0) / levels
    scale[scale == 0] = 1.0
    return np.round(weights / scale) * scale

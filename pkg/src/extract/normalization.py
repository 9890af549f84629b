"""LayerNorm vs RMSNorm fingerprinting from a query matrix.

LayerNorm centers its input, so the hidden states lie in an affine
hyperplane. Their logits span h dimensions only through the offset of the
norm bias; subtracting the mean logit vector over all queries removes that
offset and the numerical rank drops by exactly one. RMSNorm states fill all
h dimensions, with or without a bias, so the rank is unchanged.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from src.extract.dimension import NeedMoreQueriesError, extract_hidden_dim
from src.models.extraction import NormDetection, QueryMatrix
from src.victim.numerics import PRECISION_DTYPES


def _center_vocab(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    return matrix - matrix.mean(axis=1, keepdims=True)


def detect_norm_layer(
    query_matrix: QueryMatrix, hidden_dim: Optional[int] = None
) -> NormDetection:
    """Compare the stolen dimension before and after removing the mean query.

    A LayerNorm without bias keeps its states in a linear (h-1)-dimensional
    subspace; from logits alone that reads as an RMSNorm of width h-1. When
    the width is known some other way, pass it as `hidden_dim`: a stolen
    dimension below it makes the result INCONCLUSIVE.
    """
    centered = _center_vocab(query_matrix.matrix)
    dtype = PRECISION_DTYPES[query_matrix.precision]
    # mean in the source precision, spectrum in fp64
    mean = centered.astype(dtype).mean(axis=0, dtype=dtype).astype(np.float64)
    shifted = centered - mean

    try:
        before, _ = extract_hidden_dim(_with(query_matrix, centered))
        after, _ = extract_hidden_dim(_with(query_matrix, shifted))
    except NeedMoreQueriesError:
        return NormDetection.INCONCLUSIVE
    if hidden_dim is not None and before < hidden_dim:
        return NormDetection.INCONCLUSIVE

    drop = before - after
    if drop == 1:
        return NormDetection.LAYER_NORM
    if drop == 0:
        return NormDetection.RMS_NORM
    return NormDetection.INCONCLUSIVE


def _with(query_matrix: QueryMatrix, matrix: np.ndarray) -> QueryMatrix:
    return QueryMatrix(
        matrix=matrix,
        prompts=query_matrix.prompts,
        precision=query_matrix.precision,
        columns=query_matrix.columns,
        normalization=query_matrix.normalization,
    )

"""Turn recovered logit vectors into the stolen final layer."""

from src.extract.collect import Recoverer, collect_query_matrix
from src.extract.dimension import (
    NeedMoreQueriesError,
    extract_hidden_dim,
    spectrum,
    steal_hidden_dim,
)
from src.extract.layer import (
    RankDeficientError,
    align_affine,
    extract_layer,
    numerical_rank,
    principal_angles,
)
from src.extract.normalization import detect_norm_layer
from src.extract.orthogonal import (
    DegenerateQueriesError,
    extract_layer_orthogonal,
    orthogonal_residual,
    required_queries,
)
from src.extract.spectrum import spectrum_plot_data, write_spectrum_csv

__all__ = [
    "DegenerateQueriesError",
    "NeedMoreQueriesError",
    "RankDeficientError",
    "Recoverer",
    "align_affine",
    "collect_query_matrix",
    "detect_norm_layer",
    "extract_hidden_dim",
    "extract_layer",
    "extract_layer_orthogonal",
    "numerical_rank",
    "orthogonal_residual",
    "principal_angles",
    "required_queries",
    "spectrum",
    "spectrum_plot_data",
    "steal_hidden_dim",
    "write_spectrum_csv",
]

"""Logit recovery attacks, one per API surface."""

from src.recover.binarized import binarized_probability, recover_binarized
from src.recover.bounds import epsilon_for_bits, per_logit_lower_bound, query_lower_bound
from src.recover.constraints import ConstraintGraph, NegativeCycleError, shortest_path_bounds
from src.recover.linear import (
    IllConditionedSystemError,
    KLogprobConfig,
    LogprobObservation,
    UnconstrainedTokenError,
    closed_form_logits,
    collect_logprob_observations,
    recover_k_logprob,
    recover_least_squares,
    recover_single_logprob,
)
from src.recover.logprob_free import (
    Centering,
    HyperrectangleConfig,
    centering_biases,
    one_of_n_coefficient,
    recover_binary_search,
    recover_hyperrectangle,
)
from src.recover.reference import recover_multi_token, recover_reference_token

__all__ = [
    "Centering",
    "ConstraintGraph",
    "HyperrectangleConfig",
    "IllConditionedSystemError",
    "KLogprobConfig",
    "LogprobObservation",
    "NegativeCycleError",
    "UnconstrainedTokenError",
    "binarized_probability",
    "centering_biases",
    "closed_form_logits",
    "collect_logprob_observations",
    "epsilon_for_bits",
    "one_of_n_coefficient",
    "per_logit_lower_bound",
    "query_lower_bound",
    "recover_binarized",
    "recover_binary_search",
    "recover_hyperrectangle",
    "recover_k_logprob",
    "recover_least_squares",
    "recover_multi_token",
    "recover_reference_token",
    "recover_single_logprob",
    "shortest_path_bounds",
]

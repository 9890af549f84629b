"""Difference-constraint graph over logit gaps and its shortest-path bounds.

Every argmax observation "token k won under bias b" says
z_j - z_k <= b_k - b_j for all other j. Constraints of the form
z_i - z_j <= c are edges j -> i of weight c, so with z_0 = 0 the tightest
upper bound on z_i is the distance from node 0 to i. Running the same search
on the transposed graph bounds -z_i, which gives the lower bounds.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from src.models.recovery import IntervalBounds
from src.oracle.errors import StealerError

RELAXATION_TOLERANCE = 1e-12


class NegativeCycleError(StealerError):
    """The accumulated constraints are infeasible."""


class ConstraintGraph:
    """Dense (N+1)x(N+1) edge-weight matrix; weights[j, i] bounds z_i - z_j.

    Node 0 is the reference token. With a bias bound the graph starts from the
    prior z_i - z_0 in [-B, 0].
    """

    def __init__(self, num_nodes: int, bias_bound: Optional[float] = None, prior: bool = True):
        if num_nodes < 1:
            raise ValueError("graph needs at least the reference node")
        self.num_nodes = num_nodes
        self.weights = np.full((num_nodes, num_nodes), np.inf)
        np.fill_diagonal(self.weights, 0.0)
        self.observations = 0
        if prior and bias_bound is not None:
            self.weights[0, 1:] = 0.0
            self.weights[1:, 0] = bias_bound

    def add_constraint(self, i: int, j: int, bound: float) -> None:
        """Record z_i - z_j <= bound."""
        if bound < self.weights[j, i]:
            self.weights[j, i] = bound

    def observe(self, winner: int, biases: np.ndarray) -> None:
        """Record that `winner` had the largest biased logit among all nodes."""
        biases = np.asarray(biases, dtype=np.float64)
        if biases.shape != (self.num_nodes,):
            raise ValueError(f"expected {self.num_nodes} biases, got {biases.shape}")
        row = biases[winner] - biases
        row[winner] = 0.0
        np.minimum(self.weights[winner], row, out=self.weights[winner])
        self.observations += 1


def _distances(weights: np.ndarray, start: Optional[np.ndarray]) -> np.ndarray:
    """Single-source distances from node 0 by synchronous Bellman-Ford relaxation."""
    n = weights.shape[0]
    if start is None:
        dist = np.full(n, np.inf)
        dist[0] = 0.0
    else:
        dist = np.array(start, dtype=np.float64)
    for _ in range(n + 1):
        candidate = (dist[:, None] + weights).min(axis=0)
        improved = candidate < dist - RELAXATION_TOLERANCE
        if not improved.any():
            return dist
        dist = np.where(improved, candidate, dist)
        if dist[0] < -RELAXATION_TOLERANCE:
            break
    raise NegativeCycleError("constraints admit no feasible logit vector")


def shortest_path_bounds(
    graph: ConstraintGraph,
    warm_start: Optional[IntervalBounds] = None,
    tokens: Optional[np.ndarray] = None,
) -> IntervalBounds:
    """Tightest [alpha_i, beta_i] on z_i - z_0 implied by the graph.

    A previous result for the same graph may be passed as `warm_start`; adding
    constraints only shrinks distances, so relaxation can resume from it.
    """
    upper_start = lower_start = None
    if warm_start is not None:
        upper_start = warm_start.beta
        lower_start = -warm_start.alpha
    beta = _distances(graph.weights, upper_start)
    alpha = -_distances(graph.weights.T, lower_start)
    if tokens is None:
        tokens = warm_start.tokens if warm_start is not None else np.arange(graph.num_nodes)
    return IntervalBounds(alpha=alpha, beta=beta, tokens=np.asarray(tokens))

"""Symbol spaces with an a priori measure.

A symbol space M is stored as a finite quadrature rule: nodes, positive
weights and a metric on node indices.  Every integral over M in the package
is the weighted sum over these nodes, so identities between different
computational routes hold exactly at the discretized level.

Two weight conventions are supported.  In *probability* mode the weights sum
to one.  In *counting* mode they do not (the binary Markov examples use the
counting measure on {0, 1}).  The operator with potential ``f`` under counting
weights ``(1, 1)`` is identical to the operator with potential ``f + log 2``
under uniform probability weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROBABILITY = "probability"
COUNTING = "counting"


@dataclass(frozen=True, eq=False)
class AprioriSpace:
    """Finite discretization of a compact symbol space ``(M, d_M, nu)``.

    Attributes
    ----------
    nodes : (N,) ndarray
        Coordinate of each symbol (the symbol index for finite alphabets, the
        angle for the circle).
    weights : (N,) ndarray
        Quadrature weights of the a priori measure.
    metric : (N, N) ndarray
        Symmetric distance matrix with zero diagonal and diameter one.
    mode : str
        ``"probability"`` or ``"counting"``.
    label : str
        Human readable description.
    """

    nodes: np.ndarray
    weights: np.ndarray
    metric: np.ndarray
    mode: str
    label: str = field(default="")

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        metric = np.asarray(self.metric, dtype=float)
        n = nodes.shape[0]
        if n < 2:
            raise ValueError("a symbol space needs at least two nodes")
        if weights.shape != (n,) or metric.shape != (n, n):
            raise ValueError("nodes, weights and metric have inconsistent shapes")
        if not np.all(weights > 0):
            raise ValueError("a priori weights must be strictly positive")
        if self.mode not in (PROBABILITY, COUNTING):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == PROBABILITY and abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("probability weights must sum to one")
        if np.any(np.diag(metric) != 0) or not np.array_equal(metric, metric.T):
            raise ValueError("metric must be symmetric with zero diagonal")
        if np.any(metric < 0) or metric.max() > 1 + 1e-15:
            raise ValueError("metric must take values in [0, 1]")
        for name, arr in (("nodes", nodes), ("weights", weights), ("metric", metric)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def same_as(self, other: "AprioriSpace") -> bool:
        if self is other:
            return True
        return (
            self.mode == other.mode
            and self.size == other.size
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.metric, other.metric)
        )

    def __repr__(self):
        return f"AprioriSpace(N={self.size}, mode={self.mode!r}, label={self.label!r})"


def make_finite_alphabet(d, weights=None) -> AprioriSpace:
    """Alphabet ``{0, ..., d-1}`` with the discrete metric.

    Without ``weights`` the a priori measure is uniform.  Given weights that sum
    to one yield a probability space; any other positive weights (for example
    ``(1, 1)``) yield a counting-mode space.
    """
    d = int(d)
    if d < 2:
        raise ValueError("alphabet size must be at least 2")
    if weights is None:
        w = np.full(d, 1.0 / d)
        mode = PROBABILITY
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (d,):
            raise ValueError(f"expected {d} weights, got {w.size}")
        if not np.all(w > 0):
            raise ValueError("a priori weights must be strictly positive")
        mode = PROBABILITY if abs(w.sum() - 1.0) <= 1e-12 else COUNTING
    metric = 1.0 - np.eye(d)
    label = f"finite(d={d}, {mode})"
    return AprioriSpace(np.arange(d, dtype=float), w, metric, mode, label)


def make_circle(n_nodes) -> AprioriSpace:
    """Equispaced trapezoid rule for the uniform measure on the circle.

    The metric is arc length divided by pi, so the diameter is one.
    """
    n = int(n_nodes)
    if n < 4:
        raise ValueError("the circle needs at least 4 nodes")
    idx = np.arange(n)
    theta = 2.0 * np.pi * idx / n
    steps = np.abs(idx[:, None] - idx[None, :])
    steps = np.minimum(steps, n - steps)
    metric = 2.0 * steps / n
    return AprioriSpace(theta, np.full(n, 1.0 / n), metric, PROBABILITY, f"circle(n={n})")


def integrate_symbol(space: AprioriSpace, values) -> float:
    """Integral of a function of one symbol against the a priori measure."""
    values = np.asarray(values, dtype=float)
    if values.shape != (space.size,):
        raise ValueError(f"expected {space.size} values, got shape {values.shape}")
    return float(np.dot(space.weights, values))

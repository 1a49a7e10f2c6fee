"""Cylinder functions on the sequence space and cylinder measures.

A :class:`GridFunction` of depth ``k`` depends on the first ``k`` coordinates
of a sequence.  Its values are stored flat over all ``N**k`` words in
lexicographic order, first coordinate most significant, so that
``values.reshape((N,) * k)[a1, ..., ak]`` is the value on the word
``a1 ... ak``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .apriori import AprioriSpace


def _check_space(a: AprioriSpace, b: AprioriSpace):
    if not a.same_as(b):
        raise ValueError("objects live on different symbol spaces")


def n_words(space: AprioriSpace, depth: int) -> int:
    return space.size ** depth


def iter_words(space: AprioriSpace, depth: int):
    """All words of the given depth as index tuples, lexicographic order."""
    return itertools.product(range(space.size), repeat=depth)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real function on the sequence space depending on ``depth`` coordinates."""

    space: AprioriSpace
    depth: int
    values: np.ndarray

    def __post_init__(self):
        depth = int(self.depth)
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.space.size ** depth:
            raise ValueError(
                f"depth {depth} needs {self.space.size ** depth} values, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "values", values)

    def tensor(self) -> np.ndarray:
        return self.values.reshape((self.space.size,) * self.depth)

    def __call__(self, word) -> float:
        word = tuple(word)[: self.depth]
        if len(word) < self.depth:
            raise ValueError(f"need a word of length >= {self.depth}")
        return float(self.tensor()[word]) if self.depth else float(self.values[0])

    # arithmetic, with automatic embedding to the larger depth

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            _check_space(self.space, other.space)
            depth = max(self.depth, other.depth)
            a = embed_depth(self, depth).values
            b = embed_depth(other, depth).values
            return GridFunction(self.space, depth, op(a, b))
        return GridFunction(self.space, self.depth, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return GridFunction(self.space, self.depth, float(other) - self.values)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return GridFunction(self.space, self.depth, -self.values)

    def apply(self, func) -> "GridFunction":
        """Pointwise ``func`` applied to the values (``np.exp``, ``np.log``, ...)."""
        return GridFunction(self.space, self.depth, func(self.values))

    def __repr__(self):
        return f"GridFunction(depth={self.depth}, N={self.space.size})"


@dataclass(frozen=True, eq=False)
class GibbsWeights:
    """Measure of every depth-``k`` cylinder, lexicographic order."""

    space: AprioriSpace
    depth: int
    weights: np.ndarray

    def __post_init__(self):
        depth = int(self.depth)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.size != self.space.size ** depth:
            raise ValueError("weights length does not match depth")
        if np.any(weights < -1e-15):
            raise ValueError("cylinder weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"cylinder weights sum to {weights.sum()!r}, not 1")
        weights.setflags(write=False)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "weights", weights)

    def marginal(self, depth: int) -> "GibbsWeights":
        """Cylinder weights at a smaller depth (sum over trailing symbols)."""
        if depth > self.depth:
            raise ValueError("cannot marginalize to a larger depth")
        if depth == self.depth:
            return self
        tail = self.space.size ** (self.depth - depth)
        w = self.weights.reshape(-1, tail).sum(axis=1)
        return GibbsWeights(self.space, depth, w / w.sum())

    def shift_defect(self) -> float:
        """Largest gap between the two (k-1)-marginals; zero for invariant measures."""
        if self.depth == 0:
            return 0.0
        n = self.space.size
        w = self.weights.reshape(n, -1)
        drop_first = w.sum(axis=0)
        drop_last = self.weights.reshape(-1, n).sum(axis=1)
        return float(np.max(np.abs(drop_first - drop_last)))

    def integrate(self, g: GridFunction) -> float:
        return inner_product(g, constant(self.space, 1.0), self)

    def __repr__(self):
        return f"GibbsWeights(depth={self.depth}, N={self.space.size})"


def constant(space: AprioriSpace, c: float) -> GridFunction:
    return GridFunction(space, 0, [float(c)])


def from_evaluator(space: AprioriSpace, depth: int, evaluator) -> GridFunction:
    """Tabulate ``evaluator(word)`` over all words; the word is a tuple of node coordinates."""
    depth = int(depth)
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    nodes = space.nodes
    values = [evaluator(tuple(nodes[i] for i in w)) for w in iter_words(space, depth)]
    return GridFunction(space, depth, values)


def from_index_evaluator(space: AprioriSpace, depth: int, evaluator) -> GridFunction:
    """Like :func:`from_evaluator` but the word is passed as symbol indices."""
    values = [evaluator(w) for w in iter_words(space, depth)]
    return GridFunction(space, depth, values)


def indicator(space: AprioriSpace, word) -> GridFunction:
    """Indicator of the cylinder ``[word]`` (word given as symbol indices)."""
    word = tuple(int(a) for a in word)
    t = np.zeros((space.size,) * len(word))
    t[word] = 1.0
    return GridFunction(space, len(word), t.reshape(-1))


def embed_depth(g: GridFunction, depth: int) -> GridFunction:
    """The same function viewed as depending on ``depth >= g.depth`` coordinates."""
    depth = int(depth)
    if depth < g.depth:
        raise ValueError(f"cannot embed depth {g.depth} into depth {depth}")
    if depth == g.depth:
        return g
    reps = g.space.size ** (depth - g.depth)
    return GridFunction(g.space, depth, np.repeat(g.values, reps))


def compose_shift(g: GridFunction, j: int = 1) -> GridFunction:
    """``g o sigma**j``: the value at ``u`` is ``g(u_{j+1} ... u_{j+k})``."""
    j = int(j)
    if j < 0:
        raise ValueError("shift power must be nonnegative")
    if j == 0:
        return g
    return GridFunction(g.space, g.depth + j, np.tile(g.values, g.space.size ** j))


def inner_product(f: GridFunction, g: GridFunction, mu: GibbsWeights) -> float:
    """``sum_word mu(word) f(word) g(word)`` after embedding both to ``mu.depth``."""
    _check_space(f.space, mu.space)
    _check_space(g.space, mu.space)
    if f.depth > mu.depth or g.depth > mu.depth:
        raise ValueError(
            f"function depth {max(f.depth, g.depth)} exceeds measure depth {mu.depth}; "
            "compute the Gibbs measure at a larger depth first"
        )
    a = embed_depth(f, mu.depth).values
    b = embed_depth(g, mu.depth).values
    return float(np.dot(mu.weights, a * b))


def sup_norm(g: GridFunction) -> float:
    return float(np.max(np.abs(g.values)))


def lipschitz_estimate(g: GridFunction) -> float:
    """Largest difference quotient over word pairs that differ in one coordinate.

    Coordinate ``n`` (1-based) carries distance ``2**-n * d_M(a, b)``.
    """
    if g.depth == 0:
        return 0.0
    n = g.space.size
    metric = g.space.metric
    off = ~np.eye(n, dtype=bool)
    t = g.tensor()
    best = 0.0
    for axis in range(g.depth):
        m = np.moveaxis(t, axis, 0).reshape(n, -1)
        spread = np.max(np.abs(m[:, None, :] - m[None, :, :]), axis=2)
        quotient = spread[off] / (2.0 ** -(axis + 1) * metric[off])
        best = max(best, float(quotient.max()))
    return best


# CSV serialization: one row per word, symbol index columns then the value


def write_csv(obj, path):
    """Write a GridFunction or GibbsWeights table (RFC 4180 CSV)."""
    vals = obj.values if isinstance(obj, GridFunction) else obj.weights
    header = [f"s{i + 1}" for i in range(obj.depth)] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for word, v in zip(iter_words(obj.space, obj.depth), vals):
            writer.writerow(list(word) + [repr(float(v))])


def read_csv(space: AprioriSpace, path) -> GridFunction:
    """Read a table written by :func:`write_csv` back as a GridFunction."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "value":
        raise ValueError(f"{path}: last column must be 'value'")
    depth = len(header) - 1
    values = np.full(space.size ** depth, np.nan)
    for line, row in enumerate(body, start=2):
        if len(row) != depth + 1:
            raise ValueError(f"{path}:{line}: expected {depth + 1} fields")
        idx = 0
        for s in row[:depth]:
            s = int(s)
            if not 0 <= s < space.size:
                raise ValueError(f"{path}:{line}: symbol {s} out of range")
            idx = idx * space.size + s
        values[idx] = float(row[-1])
    if np.any(np.isnan(values)):
        raise ValueError(f"{path}: table does not cover every word of depth {depth}")
    return GridFunction(space, depth, values)

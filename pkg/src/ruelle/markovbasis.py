"""Two-symbol Markov measures and the orthonormal kernel basis.

For a positive row-stochastic 2x2 matrix ``P`` with stationary row ``pi`` the
potential ``log J``, ``J[i, j] = pi_i P[i, j] / pi_j``, is normalized for the
counting a priori measure on {0, 1} and its Gibbs measure is the stationary
Markov measure.  The same operator arises from uniform probability weights
with potential ``log(2 J)``.

Words are tuples of symbols; cylinder ``[w]`` is the set of sequences that
start with ``w``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .apriori import AprioriSpace, make_finite_alphabet
from .funcspace import GridFunction, GibbsWeights, indicator, inner_product, sup_norm
from .transfer import apply_transfer, kernel_project, transfer_matrix

MAX_DEPTH = 5
COMPLETION_KEYS = ("empty:0", "empty:1")


@dataclass(frozen=True, eq=False)
class MarkovSpec:
    P: np.ndarray
    pi: np.ndarray
    J: np.ndarray
    space: AprioriSpace

    @property
    def log_j(self) -> GridFunction:
        """The normalized potential ``log J`` (depth 2, counting mode)."""
        return GridFunction(self.space, 2, np.log(self.J).ravel())

    @property
    def log_2j(self) -> GridFunction:
        """``log 2J``: the same operator under uniform probability weights."""
        prob = make_finite_alphabet(2)
        return GridFunction(prob, 2, np.log(2.0 * self.J).ravel())


def markov_spec(P) -> MarkovSpec:
    P = np.array(P, dtype=float)
    if P.shape != (2, 2):
        raise ValueError("transition matrix must be 2x2")
    if not np.all(P > 0):
        raise ValueError("transition matrix entries must be strictly positive")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-14:
        raise ValueError("transition matrix rows must sum to one")
    pi = np.array([P[1, 0], P[0, 1]]) / (P[0, 1] + P[1, 0])
    J = pi[:, None] * P / pi[None, :]
    assert np.max(np.abs(pi @ P - pi)) <= 1e-14
    assert np.max(np.abs(J.sum(axis=0) - 1.0)) <= 1e-14
    for arr in (P, pi, J):
        arr.setflags(write=False)
    return MarkovSpec(P, pi, J, make_finite_alphabet(2, (1.0, 1.0)))


def cylinder_measure(spec: MarkovSpec, word) -> float:
    """``pi_{w1} P_{w1 w2} ... P_{w(n-1) wn}``; the empty word has mass 1."""
    word = tuple(int(a) for a in word)
    if not word:
        return 1.0
    m = spec.pi[word[0]]
    for a, b in zip(word, word[1:]):
        m *= spec.P[a, b]
    return float(m)


def markov_gibbs(spec: MarkovSpec, depth: int) -> GibbsWeights:
    """Exact cylinder weights at ``depth`` from the chain."""
    w = [cylinder_measure(spec, word) for word in itertools.product((0, 1), repeat=depth)]
    return GibbsWeights(spec.space, depth, w)


def words(max_len, min_len=1):
    """All binary words with ``min_len <= len <= max_len``, shortest first."""
    out = []
    for n in range(min_len, max_len + 1):
        out.extend(itertools.product((0, 1), repeat=n))
    return out


def word_key(word) -> str:
    return "".join(str(a) for a in word)


def _check_len(word, extra):
    if len(word) + extra > MAX_DEPTH:
        raise ValueError(f"word {word_key(word)!r} needs depth > {MAX_DEPTH}")


def haar_e(spec: MarkovSpec, word) -> GridFunction:
    """Haar function supported on ``[w0] u [w1]`` with unit L2(mu) norm and zero mean.

    For the empty word the ratio ``P[w_n, 1] / P[w_n, 0]`` is replaced by
    ``pi_1 / pi_0``.
    """
    word = tuple(int(a) for a in word)
    _check_len(word, 1)
    if word:
        p0, p1 = spec.P[word[-1], 0], spec.P[word[-1], 1]
    else:
        p0, p1 = spec.pi[0], spec.pi[1]
    scale = 1.0 / math.sqrt(cylinder_measure(spec, word))
    return (
        indicator(spec.space, word + (0,)) * (scale * math.sqrt(p1 / p0))
        - indicator(spec.space, word + (1,)) * (scale * math.sqrt(p0 / p1))
    )


def kernel_a(spec: MarkovSpec, word, normalized=True) -> GridFunction:
    """Kernel element built from ``e_{0w}`` and ``e_{1w}`` (``w`` nonempty)."""
    word = tuple(int(a) for a in word)
    if not word:
        raise ValueError("kernel_a needs a nonempty word; see complete_depth2_kernel")
    _check_len(word, 2)
    pi, P = spec.pi, spec.P
    w1 = word[0]
    c0 = math.sqrt(pi[w1]) / (math.sqrt(pi[0]) * math.sqrt(P[0, w1]))
    c1 = math.sqrt(pi[w1]) / (math.sqrt(pi[1]) * math.sqrt(P[1, w1]))
    a = haar_e(spec, (0,) + word) * c0 - haar_e(spec, (1,) + word) * c1
    if not normalized:
        return a
    mu = markov_gibbs(spec, a.depth)
    return a * (1.0 / math.sqrt(inner_product(a, a, mu)))


def complete_depth2_kernel(spec: MarkovSpec):
    """Orthonormal basis of the depth-2 part of ``Ker L_{log J}``.

    Null space of the depth-2 transfer matrix, Gram-Schmidt in L2(mu) taking the
    largest remaining vector first, each sign fixed so the first nonzero entry
    is positive.
    """
    a = transfer_matrix(spec.space, spec.log_j, 2).toarray()
    basis = null_space(a)
    if basis.shape[1] != 2:
        raise ArithmeticError(f"depth-2 kernel has dimension {basis.shape[1]}, expected 2")
    mu = markov_gibbs(spec, 2).weights
    remaining = [basis[:, i] for i in range(basis.shape[1])]
    out = []
    while remaining:
        norms = [math.sqrt(mu @ (v * v)) for v in remaining]
        v = remaining.pop(int(np.argmax(norms)))
        for q in out:
            v = v - (mu @ (v * q)) * q
        v = v / math.sqrt(mu @ (v * v))
        v[np.abs(v) < 1e-15] = 0.0
        if v[np.flatnonzero(v)[0]] < 0:
            v = -v
        out.append(v)
    return tuple(GridFunction(spec.space, 2, v) for v in out)


def kernel_basis(spec: MarkovSpec, max_len=2):
    """Ordered dict-like list of ``(key, function)``: completion pair, then ``a_w``."""
    e0, e1 = complete_depth2_kernel(spec)
    items = [(COMPLETION_KEYS[0], e0), (COMPLETION_KEYS[1], e1)]
    items.extend((word_key(w), kernel_a(spec, w)) for w in words(max_len))
    return items


def expansion_coefficients(spec: MarkovSpec, phi: GridFunction, word_list=None) -> dict:
    """Coefficients ``<phi, a_w>`` for each listed word plus the completion pair."""
    if word_list is None:
        word_list = words(2)
    e0, e1 = complete_depth2_kernel(spec)
    basis = [(COMPLETION_KEYS[0], e0), (COMPLETION_KEYS[1], e1)]
    basis += [(word_key(w), kernel_a(spec, w)) for w in word_list]
    depth = max([phi.depth, 2] + [b.depth for _, b in basis])
    mu = markov_gibbs(spec, depth)
    return {key: inner_product(phi, b, mu) for key, b in basis}


def reconstruct(spec: MarkovSpec, coeffs: dict) -> GridFunction:
    e0, e1 = complete_depth2_kernel(spec)
    out = e0 * coeffs.get(COMPLETION_KEYS[0], 0.0) + e1 * coeffs.get(COMPLETION_KEYS[1], 0.0)
    for key, c in coeffs.items():
        if key in COMPLETION_KEYS:
            continue
        out = out + kernel_a(spec, tuple(int(ch) for ch in key)) * c
    return out


def coeff_directional_derivative(spec: MarkovSpec, phi, f, eta, word_list=None, tol=1e-10) -> float:
    """``sum_w (phi_w - f_w) eta_w`` over the kernel basis.

    ``phi_w`` and ``f_w`` are coefficients of the kernel parts of ``phi`` and
    ``f``.  The sum is compared with the direct integral ``<xi - zeta, eta>``;
    a gap above ``tol`` means the word list does not span the functions and
    raises ``ValueError``.
    """
    space = spec.space
    if sup_norm(apply_transfer(space, f, GridFunction(space, 0, [1.0])) - 1.0) > 1e-8:
        raise ValueError("f must be the normalized potential log J")
    if sup_norm(apply_transfer(space, f, eta)) > 1e-8:
        raise ValueError("eta must lie in the kernel")
    xi, _, _ = kernel_project(space, f, phi)
    zeta, _, _ = kernel_project(space, f, f)
    cx = expansion_coefficients(spec, xi, word_list)
    cz = expansion_coefficients(spec, zeta, word_list)
    ce = expansion_coefficients(spec, eta, word_list)
    total = math.fsum((cx[k] - cz[k]) * ce[k] for k in ce)
    diff = xi - zeta
    depth = max(diff.depth, eta.depth, 2)
    direct = inner_product(diff, eta, markov_gibbs(spec, depth))
    if abs(total - direct) > tol:
        raise ValueError(
            f"coefficient sum {total!r} differs from direct integral {direct!r}; "
            "extend the word list"
        )
    return total

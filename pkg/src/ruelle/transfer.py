"""Ruelle transfer operator, RPF eigendata and resolvent solves.

For a potential ``f`` of depth ``k`` the operator

    (L_f w)(x) = sum_a nu_a exp(f(a x)) w(a x)

maps depth-``k`` functions to depth-``(k-1)`` functions, so the space of
depth-``(k-1)`` functions is invariant and carries the leading eigenfunction.
Eigendata come from power iteration (forward for the eigenfunction, adjoint
for the eigenmeasure).  Gibbs cylinder weights at any depth follow from the
adjoint fixed point by the exact recursion

    mu[a u] = nu_a exp(f(a u)) mu[u]          (f normalized).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as sla

from .apriori import AprioriSpace
from .funcspace import (
    GibbsWeights,
    GridFunction,
    _check_space,
    compose_shift,
    constant,
    embed_depth,
    inner_product,
    sup_norm,
)

NORMALIZATION_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """An iteration hit its cap; ``residual`` holds the last residual."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NotNormalizedError(ValueError):
    pass


class MeanNotZeroError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RpfSolution:
    """Leading eigendata of ``L_f`` normalized by ``int w drho = 1``."""

    lam: float
    log_lambda: float
    eigfun: GridFunction
    eigmeasure: GibbsWeights
    gibbs: GibbsWeights
    residual: float
    iterations: int
    gap_estimate: float

    def to_dict(self):
        return {
            "lambda": self.lam,
            "log_lambda": self.log_lambda,
            "residual": self.residual,
            "iterations": self.iterations,
            "gap_estimate": self.gap_estimate,
        }


class _Operator:
    """Tabulated ``nu_a exp(f(a u) - shift)`` for one potential at its own depth."""

    def __init__(self, space: AprioriSpace, f: GridFunction):
        _check_space(space, f.space)
        self.space = space
        self.k = max(f.depth, 1)
        n = space.size
        fv = embed_depth(f, self.k).values.reshape(n, -1)
        # extreme potentials: factor out exp(sup f) and track it in log space
        self.shift = float(fv.max())
        self.table = space.weights[:, None] * np.exp(fv - self.shift)
        m = n ** (self.k - 1)
        # index of the (k-1)-prefix of the word (a, u)
        self.prefix = (np.arange(n)[:, None] * m + np.arange(m)[None, :]) // n

    def forward(self, w):
        """Shifted operator on depth-(k-1) value arrays."""
        return np.einsum("au,au->u", self.table, w[self.prefix])

    def adjoint(self, rho):
        m = rho.size
        return np.bincount(
            self.prefix.ravel(), weights=(self.table * rho[None, :]).ravel(), minlength=m
        )


def apply_transfer(space: AprioriSpace, f: GridFunction, w: GridFunction) -> GridFunction:
    """``L_f w`` as a function of depth ``max(f.depth, w.depth, 1) - 1``."""
    _check_space(space, f.space)
    _check_space(space, w.space)
    n = space.size
    k = max(f.depth, w.depth, 1)
    fv = embed_depth(f, k).values
    shift = float(fv.max())
    terms = space.weights[:, None] * np.exp(fv - shift).reshape(n, -1)
    wv = embed_depth(w, k).values.reshape(n, -1)
    out = np.einsum("au,au->u", terms, wv) * math.exp(shift)
    return GridFunction(space, k - 1, out)


def transfer_power(space, f, w, j):
    """``L_f**j w``."""
    for _ in range(int(j)):
        w = apply_transfer(space, f, w)
    return w


def transfer_matrix(space: AprioriSpace, f: GridFunction, depth=None) -> sparse.csr_matrix:
    """Sparse matrix of ``L_f`` acting on depth-``k`` functions (both sides depth ``k``).

    Row ``x`` holds ``nu_a exp(f(a x_1 .. x_{k-1}))`` in column ``(a, x_1 .. x_{k-1})``.
    """
    _check_space(space, f.space)
    k = max(f.depth, 1) if depth is None else int(depth)
    if k < max(f.depth, 1):
        raise ValueError("matrix depth must be at least the potential depth")
    n = space.size
    size = n ** k
    fv = embed_depth(f, k).values
    rows = np.repeat(np.arange(size), n)
    x_prefix = np.arange(size) // n
    cols = (np.arange(n)[None, :] * n ** (k - 1) + x_prefix[:, None]).ravel()
    data = np.repeat(space.weights[None, :], size, axis=0).ravel() * np.exp(fv[cols])
    return sparse.csr_matrix((data, (rows, cols)), shape=(size, size))


def solve_rpf(space: AprioriSpace, f: GridFunction, tol=1e-13, max_iter=20000) -> RpfSolution:
    """Leading eigenvalue, eigenfunction and eigenmeasure by power iteration.

    Iteration stops when ``max |L w - lam w| / (lam w)`` and the adjoint residual
    are both below ``tol``; :class:`ConvergenceError` is raised if that does not
    happen within ``max_iter`` sweeps.  The reported ``residual`` is
    ``||L w - lam w||_inf / ||w||_inf``.
    """
    op = _Operator(space, f)
    n = space.size
    m = n ** (op.k - 1)
    w = np.ones(m)
    rho = np.full(m, 1.0 / m)
    res = float("inf")
    for it in range(1, max_iter + 1):
        lw = op.forward(w)
        lr = op.adjoint(rho)
        lam = float(rho @ lw) / float(rho @ w)
        gap = np.abs(lw - lam * w)
        res_fwd = float(np.max(gap) / np.max(np.abs(w)))
        res_adj = float(np.sum(np.abs(lr - lam * rho)) / np.sum(rho))
        # pointwise relative test: bounds ||L_{N(f)} 1 - 1|| after normalization
        res = max(float(np.max(gap / (lam * w))), res_adj)
        if res <= tol:
            break
        w = lw / np.max(lw)
        rho = lr / lr.sum()
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} sweeps (residual {res:.3e})",
            residual=res,
            iterations=max_iter,
        )
    rho = rho / rho.sum()
    w = w / float(rho @ w)
    rho_k = (op.table * rho[None, :]).ravel()
    rho_k /= rho_k.sum()
    mu_k = rho_k * w[op.prefix].ravel()
    mu_k /= mu_k.sum()
    gap = _gap_estimate(op, lam, w, mu_k.reshape(n, -1).sum(axis=0))
    log_lambda = math.log(lam) + op.shift
    return RpfSolution(
        lam=math.exp(log_lambda) if log_lambda < 700 else float("inf"),
        log_lambda=log_lambda,
        eigfun=GridFunction(space, op.k - 1, w),
        eigmeasure=GibbsWeights(space, op.k, rho_k),
        gibbs=GibbsWeights(space, op.k, mu_k),
        residual=res_fwd,
        iterations=it,
        gap_estimate=gap,
    )


def _gap_estimate(op, lam, w, mu_prev, sweeps=60):
    """Contraction rate of the normalized operator on mean-zero depth-(k-1) functions."""
    m = w.size
    if m == 1:
        return 1e-12
    v = np.random.default_rng(12345).standard_normal(m)
    v -= mu_prev @ v
    norms = [np.max(np.abs(v))]
    for _ in range(sweeps):
        v = op.forward(w * v) / (lam * w)
        v -= mu_prev @ v
        norms.append(np.max(np.abs(v)))
        if norms[-1] < 1e-250:
            break
    if norms[-1] == 0.0 or len(norms) < 21:
        rate = (norms[-1] / norms[0]) ** (1.0 / (len(norms) - 1))
    else:
        rate = (norms[-1] / norms[-21]) ** (1.0 / 20)
    return float(min(max(rate, 1e-12), 1.0 - 1e-12))


def normalization_defect(space, f) -> float:
    """``||L_f 1 - 1||_inf``."""
    return sup_norm(apply_transfer(space, f, constant(space, 1.0)) - 1.0)


def check_normalized(space, f, tol=NORMALIZATION_TOL):
    defect = normalization_defect(space, f)
    if defect > tol:
        raise NotNormalizedError(f"potential is not normalized: ||L1 - 1|| = {defect:.3e}")


def normalize_potential(space: AprioriSpace, f: GridFunction, tol=1e-13, max_iter=20000):
    """Return ``(N(f), log lambda_f)`` with ``N(f) = f + log w - log w o sigma - log lambda``."""
    sol = solve_rpf(space, f, tol=tol, max_iter=max_iter)
    logw = sol.eigfun.apply(np.log)
    fn = f + logw - compose_shift(logw, 1) - sol.log_lambda
    return fn, sol.log_lambda


def _extend(space, f_norm, mu: GibbsWeights, depth) -> GibbsWeights:
    """Deepen cylinder weights by prepending symbols with weight ``nu_a exp(f)``."""
    n = space.size
    k = max(f_norm.depth, 1)
    table = space.weights[:, None] * np.exp(embed_depth(f_norm, k).values.reshape(n, -1))
    weights = mu.weights
    for cur in range(mu.depth, depth):
        # cur >= k - 1; the (k-1)-prefix of a cur-word u is u // n**(cur-k+1)
        prefix = np.arange(n ** cur) // n ** (cur - k + 1)
        weights = (table[:, prefix] * weights[None, :]).ravel()
        weights = weights / weights.sum()
    return GibbsWeights(space, depth, weights)


def gibbs_measure(space: AprioriSpace, f_norm: GridFunction, depth: int, tol=1e-13) -> GibbsWeights:
    """Cylinder weights of the Gibbs measure of a normalized potential."""
    check_normalized(space, f_norm)
    depth = int(depth)
    sol = solve_rpf(space, f_norm, tol=tol)
    mu = sol.gibbs
    if depth <= mu.depth:
        return mu.marginal(depth)
    return _extend(space, f_norm, mu, depth)


def gibbs_for(space, f, depth, tol=1e-13) -> GibbsWeights:
    """Gibbs weights of an arbitrary (not necessarily normalized) potential."""
    fn, _ = normalize_potential(space, f, tol=tol)
    return gibbs_measure(space, fn, depth, tol=tol)


def spectral_gap_estimate(space, f_norm) -> float:
    return solve_rpf(space, f_norm).gap_estimate


def _mean(space, f_norm, g, mu_cache):
    d = max(g.depth, 1)
    if d not in mu_cache:
        mu_cache[d] = gibbs_measure(space, f_norm, d)
    return inner_product(g, constant(space, 1.0), mu_cache[d])


def resolvent_meanzero(space, f_norm, phi: GridFunction, tol=1e-12, max_iter=None) -> GridFunction:
    """Mean-zero solution of ``(I - L) u = phi`` by the Neumann series ``sum_j L**j phi``.

    ``phi`` must have zero Gibbs mean.  Each term is re-centred to keep round-off
    from accumulating in the constant direction.
    """
    check_normalized(space, f_norm)
    sol = solve_rpf(space, f_norm)
    kf = max(f_norm.depth, 1)
    depth = max(phi.depth, kf - 1)
    mus = {}
    scale = max(1.0, sup_norm(phi))
    mean = _mean(space, f_norm, phi, mus)
    if abs(mean) > 1e-10 * scale:
        raise MeanNotZeroError(f"resolvent input must have zero Gibbs mean (got {mean:.3e})")
    if max_iter is None:
        gap = sol.gap_estimate
        max_iter = max(int(math.ceil(10 * math.log(tol) / math.log(gap))), 100) + depth
    term = phi - mean
    total = embed_depth(term, depth).values.copy()
    for j in range(1, max_iter + 1):
        term = apply_transfer(space, f_norm, term)
        term = term - _mean(space, f_norm, term, mus)
        total += embed_depth(term, depth).values
        if sup_norm(term) < tol * scale:
            break
    else:
        raise ConvergenceError(
            f"Neumann series did not converge in {max_iter} terms",
            residual=sup_norm(term),
            iterations=max_iter,
        )
    u = GridFunction(space, depth, total)
    return u - _mean(space, f_norm, u, mus)


def resolvent_direct(space, f_norm, phi: GridFunction) -> GridFunction:
    """Same solution as :func:`resolvent_meanzero` from a sparse bordered linear solve.

    Solves ``[[I - A, 1], [mu^T, 0]] [u; s] = [phi; 0]`` on depth-``D`` words.
    """
    check_normalized(space, f_norm)
    depth = max(phi.depth, f_norm.depth, 1)
    a = transfer_matrix(space, f_norm, depth)
    size = a.shape[0]
    mu = gibbs_measure(space, f_norm, depth).weights
    ones = np.ones((size, 1))
    top = sparse.hstack([sparse.identity(size, format="csr") - a, sparse.csr_matrix(ones)])
    bottom = sparse.hstack([sparse.csr_matrix(mu[None, :]), sparse.csr_matrix((1, 1))])
    system = sparse.vstack([top, bottom]).tocsc()
    rhs = np.concatenate([embed_depth(phi, depth).values, [0.0]])
    sol = sla.spsolve(system, rhs)
    u = sol[:size]
    return GridFunction(space, depth, u - mu @ u)


def kernel_project(space, f_norm, phi: GridFunction, tol=1e-12):
    """Split ``phi = xi + (w - w o sigma + c)`` with ``L xi = 0``.

    Returns ``(xi, w, c)`` where ``c`` is the Gibbs mean of ``phi`` and ``w`` has
    zero Gibbs mean.
    """
    mus = {}
    c = _mean(space, f_norm, phi, mus)
    rhs = c - apply_transfer(space, f_norm, phi)
    w = resolvent_meanzero(space, f_norm, rhs, tol=tol)
    xi = phi - w + compose_shift(w, 1) - c
    return xi, w, c


def eigfun_derivative(space, f_norm, g: GridFunction, tol=1e-12) -> GridFunction:
    """Mean-zero solution ``u`` of ``(L - I) u = int g dmu - L g``.

    This is the derivative of the eigenfunction of ``L_{f+tg}`` at ``t = 0`` up
    to the additive constant fixed by ``int u dmu = 0``.
    """
    mus = {}
    mean = _mean(space, f_norm, g, mus)
    rhs = apply_transfer(space, f_norm, g) - mean
    return resolvent_meanzero(space, f_norm, rhs, tol=tol)


def taylor_remainder(space, f, g, w) -> float:
    """``||L_{f+g} w - L_f(w (1 + g + g^2/2))||_inf``."""
    exact = apply_transfer(space, f + g, w)
    approx = apply_transfer(space, f, w * (1.0 + g + 0.5 * g * g))
    return sup_norm(exact - approx)

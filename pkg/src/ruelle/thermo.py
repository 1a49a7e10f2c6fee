"""Pressure, entropy and their directional derivatives.

Every analytic quantity here has a finite-difference counterpart built from
the full pipeline (solve, normalize, Gibbs weights) so the two can be checked
against each other.

Entropy follows the a priori convention ``h(mu_f) = -int f dmu_f`` for a
normalized ``f``: it is relative to the a priori measure, hence ``<= 0`` in
probability mode.  For a uniform alphabet of size ``d`` it differs from the
Kolmogorov-Sinai entropy by ``log d`` (the counting-mode value).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .funcspace import (
    GridFunction,
    compose_shift,
    constant,
    inner_product,
    sup_norm,
)
from .transfer import (
    NORMALIZATION_TOL,
    apply_transfer,
    check_normalized,
    eigfun_derivative,
    gibbs_measure,
    kernel_project,
    normalize_potential,
    resolvent_meanzero,
    solve_rpf,
)

METHODS = ("resolvent", "quadratic", "fd", "greenkubo")
FD_STEP_FIRST = 1e-3
FD_STEP_SECOND = 1e-2
GREENKUBO_CUTOFF = 1e-13
GREENKUBO_MAX_TERMS = 200
KERNEL_TOL = 1e-8


class NotInKernelError(ValueError):
    pass


class NoDirectionError(ValueError):
    """The kernel part of the potential vanishes, every direction is critical."""


@dataclass(frozen=True)
class VarianceReport:
    sigma2_resolvent: float
    sigma2_quadratic: float
    sigma2_fd: float
    sigma2_greenkubo: float
    greenkubo_terms: int
    fd_step: float
    spread: float

    def to_dict(self):
        return asdict(self)


# finite-difference stencils


def fd_first(func, h=FD_STEP_FIRST, t0=0.0):
    """Five-point central first derivative."""
    return (-func(t0 + 2 * h) + 8 * func(t0 + h) - 8 * func(t0 - h) + func(t0 - 2 * h)) / (12 * h)


def fd_second(func, h=FD_STEP_SECOND, t0=0.0, values=None):
    """Five-point central second derivative."""
    if values is None:
        values = [func(t0 + s * h) for s in (-2, -1, 0, 1, 2)]
    m2, m1, z, p1, p2 = values
    return (-m2 + 16 * m1 - 30 * z + 16 * p1 - p2) / (12 * h * h)


def _mu(space, f_norm, *funcs):
    depth = max([1, f_norm.depth] + [g.depth for g in funcs])
    return gibbs_measure(space, f_norm, depth)


def _mean(space, f_norm, g, mu=None):
    mu = mu or _mu(space, f_norm, g)
    return inner_product(g, constant(space, 1.0), mu)


def _check_kernel(space, f_norm, eta):
    defect = sup_norm(apply_transfer(space, f_norm, eta))
    if defect > KERNEL_TOL:
        raise NotInKernelError(f"direction is not in Ker L_f: ||L eta|| = {defect:.3e}")


def pressure(space, f, tol=1e-13) -> float:
    """``log lambda_f``."""
    return solve_rpf(space, f, tol=tol).log_lambda


def lambda_derivative(space, f, g) -> float:
    """``d/dt lambda_{f+tg}`` at ``t = 0``: ``lambda_f int g dmu_f`` for any ``f``."""
    sol = solve_rpf(space, f)
    fn, _ = normalize_potential(space, f)
    return sol.lam * _mean(space, fn, g)


def entropy(space, f_norm, depth=None) -> float:
    """``-int f dmu_f`` for a normalized ``f``."""
    check_normalized(space, f_norm)
    depth = max(f_norm.depth, 1) if depth is None else depth
    return -inner_product(f_norm, constant(space, 1.0), gibbs_measure(space, f_norm, depth))


def entropy_of(space, f) -> float:
    """Entropy of the Gibbs measure of an arbitrary potential (normalizes first)."""
    fn, _ = normalize_potential(space, f)
    return entropy(space, fn)


def pressure_derivative(space, f_norm, g) -> float:
    """``p'(0) = int g dmu_f``."""
    check_normalized(space, f_norm)
    return _mean(space, f_norm, g)


def _centered(space, f_norm, g):
    return g - _mean(space, f_norm, g)


def greenkubo_terms(space, f_norm, g, cutoff=GREENKUBO_CUTOFF, max_terms=GREENKUBO_MAX_TERMS):
    """Correlation terms ``int g_c L**j g_c dmu`` for ``j = 1, 2, ...``.

    Stops once ``||L**j g_c||_inf * int |g_c| dmu`` (a bound on the current
    term) drops below ``cutoff`` or after ``max_terms`` terms.
    """
    gc = _centered(space, f_norm, g)
    mu = _mu(space, f_norm, gc)
    l1 = inner_product(gc.apply(np.abs), constant(space, 1.0), mu)
    terms = []
    cur = gc
    for _ in range(max_terms):
        cur = apply_transfer(space, f_norm, cur)
        terms.append(inner_product(gc, cur, mu))
        if sup_norm(cur) * l1 < cutoff:
            break
    return terms


def pressure_second_derivative(
    space, f_norm, g, method="resolvent", fd_step=FD_STEP_SECOND, richardson=False
) -> float:
    """``p''(0)``, the asymptotic variance of ``g``, by one of four routes.

    ``resolvent``
        ``int g_c^2 + 2 int g_c u`` with ``u`` the eigenfunction derivative.
    ``quadratic``
        ``int (g_c + u - u o sigma)^2``.
    ``fd``
        Five-point second difference of ``t -> P(f + t g)``.
    ``greenkubo``
        ``int g_c^2 + 2 sum_j int g_c L**j g_c`` truncated adaptively.
    """
    check_normalized(space, f_norm)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "fd":
        return _fd_variance(space, f_norm, g, fd_step, richardson)
    gc = _centered(space, f_norm, g)
    if method == "greenkubo":
        terms = greenkubo_terms(space, f_norm, gc)
        mu = _mu(space, f_norm, gc)
        return inner_product(gc, gc, mu) + 2.0 * math.fsum(terms)
    u = eigfun_derivative(space, f_norm, gc)
    if method == "resolvent":
        mu = _mu(space, f_norm, gc, u)
        return inner_product(gc, gc, mu) + 2.0 * inner_product(gc, u, mu)
    h = gc + u - compose_shift(u, 1)
    return inner_product(h, h, _mu(space, f_norm, h))


def _fd_variance(space, f_norm, g, step, richardson):
    def p(t):
        return pressure(space, f_norm + t * g)

    def stencil(h):
        vals = [p(s * h) for s in (-2, -1, 0, 1, 2)]
        return fd_second(None, h, values=vals), max(abs(v) for v in vals)

    value, scale = stencil(step)
    if richardson:
        half, _ = stencil(step / 2)
        value = (16.0 * half - value) / 15.0
    noise = 64 * np.finfo(float).eps * max(scale, 1.0) / (12 * step * step)
    if noise > 1e-6 * abs(value):
        warnings.warn(
            f"finite-difference noise {noise:.1e} is large relative to p'' = {value:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )
    return value


def variance_report(space, f_norm, g, fd_step=FD_STEP_SECOND) -> VarianceReport:
    gk_terms = greenkubo_terms(space, f_norm, g)
    values = {m: pressure_second_derivative(space, f_norm, g, m, fd_step=fd_step) for m in METHODS}
    det = [values["resolvent"], values["quadratic"], values["greenkubo"]]
    spread = max(abs(a - b) for a in det for b in det)
    return VarianceReport(
        sigma2_resolvent=values["resolvent"],
        sigma2_quadratic=values["quadratic"],
        sigma2_fd=values["fd"],
        sigma2_greenkubo=values["greenkubo"],
        greenkubo_terms=len(gk_terms),
        fd_step=fd_step,
        spread=spread,
    )


def entropy_along(space, f_norm, g, t) -> float:
    """``h(mu_{f + t g})`` recomputed through the whole pipeline."""
    return entropy_of(space, f_norm + t * g)


def entropy_derivative(space, f_norm, eta) -> float:
    """``-int f eta dmu`` for ``eta`` in the kernel of ``L_f``.

    This equals ``d/dt h(mu_{f + t eta})`` only when ``eta`` is orthogonal to
    the transfer function ``u`` of the coboundary part of ``f``; the exact
    value for every direction is :func:`entropy_derivative_general`.
    """
    check_normalized(space, f_norm)
    _check_kernel(space, f_norm, eta)
    return -inner_product(f_norm, eta, _mu(space, f_norm, eta))


def entropy_second_derivative(space, f_norm, eta) -> float:
    """``-int (f + 1) eta^2 dmu`` for ``eta`` in the kernel of ``L_f``.

    Exact when ``f`` is constant; not a valid second derivative in general.
    """
    check_normalized(space, f_norm)
    _check_kernel(space, f_norm, eta)
    return -inner_product(f_norm + 1.0, eta * eta, _mu(space, f_norm, eta))


def entropy_derivative_general(space, f_norm, g) -> float:
    """``d/dt h(mu_{f + t g})`` at 0 as ``-<zeta, eta>`` (kernel parts of ``f`` and ``g``)."""
    check_normalized(space, f_norm)
    zeta, _, _ = kernel_project(space, f_norm, f_norm)
    eta, _, _ = kernel_project(space, f_norm, g)
    return -inner_product(zeta, eta, _mu(space, f_norm, zeta, eta))


def functional_directional_derivative(space, f_norm, g, phi) -> float:
    """``d/dt [h(mu_{f+tg}) + int phi dmu_{f+tg}]`` at 0 as ``<xi - zeta, eta>``.

    ``g`` must have zero Gibbs mean.
    """
    check_normalized(space, f_norm)
    m = _mean(space, f_norm, g)
    if abs(m) > 1e-10 * max(1.0, sup_norm(g)):
        raise ValueError(f"direction must have zero Gibbs mean (got {m:.3e})")
    zeta, _, _ = kernel_project(space, f_norm, f_norm)
    eta, _, _ = kernel_project(space, f_norm, g)
    xi, _, _ = kernel_project(space, f_norm, phi)
    diff = xi - zeta
    return inner_product(diff, eta, _mu(space, f_norm, diff, eta))


def max_entropy_direction(space, f_norm) -> GridFunction:
    """Unit kernel direction ``-zeta / ||zeta||`` of steepest entropy increase."""
    check_normalized(space, f_norm)
    zeta, _, _ = kernel_project(space, f_norm, f_norm)
    norm = math.sqrt(max(inner_product(zeta, zeta, _mu(space, f_norm, zeta)), 0.0))
    if norm < 1e-12:
        raise NoDirectionError("potential is cohomologous to a constant: no preferred direction")
    return zeta * (-1.0 / norm)


def linear_response(space, f_norm, phi, eta) -> float:
    """``d/dt int phi dmu_{f + t eta}`` at 0 for ``eta`` in the kernel.

    Evaluated as ``sum_j int eta L**j(phi_c) dmu = int (I - L)^{-1}(phi_c) eta dmu``.
    """
    return linear_response_report(space, f_norm, phi, eta)["series"]


def linear_response_inner(space, f_norm, phi, eta) -> float:
    """The inner-product form ``int phi eta dmu``.

    Agrees with :func:`linear_response` only when ``eta`` is orthogonal to
    ``L**j phi_c`` for every ``j >= 1``.
    """
    check_normalized(space, f_norm)
    _check_kernel(space, f_norm, eta)
    return inner_product(phi, eta, _mu(space, f_norm, phi, eta))


def linear_response_report(space, f_norm, phi, eta) -> dict:
    """Both forms of the first-order response and their gap."""
    check_normalized(space, f_norm)
    _check_kernel(space, f_norm, eta)
    phic = _centered(space, f_norm, phi)
    u = resolvent_meanzero(space, f_norm, phic)
    mu = _mu(space, f_norm, u, eta, phi)
    series = inner_product(u, eta, mu)
    inner = inner_product(phi, eta, mu)
    return {"series": series, "inner": inner, "gap": abs(series - inner)}


def observable_mean_along(space, f_norm, g, phi, t) -> float:
    """``int phi dmu_{f + t g}``."""
    fn, _ = normalize_potential(space, f_norm + t * g)
    depth = max(phi.depth, fn.depth, 1)
    return inner_product(phi, constant(space, 1.0), gibbs_measure(space, fn, depth))


def is_normalized(space, f, tol=NORMALIZATION_TOL) -> bool:
    try:
        check_normalized(space, f, tol)
    except ValueError:
        return False
    return True

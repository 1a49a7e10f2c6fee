"""Invariant suite run by ``ruelle selftest``.

Every check is deterministic (fixed seeds) and returns a :class:`Check`.
Checks of formulas that are known not to hold for generic instances are
reported with ``informational=True`` and never fail the suite.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import i0

from . import clt, markovbasis as mb, thermo
from .apriori import make_circle, make_finite_alphabet
from .funcspace import GridFunction, compose_shift, constant, from_index_evaluator, indicator, inner_product
from .transfer import (
    apply_transfer,
    eigfun_derivative,
    gibbs_measure,
    kernel_project,
    normalize_potential,
    solve_rpf,
    taylor_remainder,
    transfer_matrix,
)

SEED = 20240611


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    informational: bool = False

    def to_dict(self):
        return asdict(self)


def _le(name, value, bound, informational=False):
    value = float(value)
    return Check(name, value, float(bound), bool(value <= bound), informational)


def _within(name, value, lo, hi):
    value = float(value)
    return Check(name, value, float(hi), bool(lo <= value <= hi))


def random_potential(space, depth, rng, scale=1.0):
    return GridFunction(space, depth, scale * rng.normal(size=space.size ** depth))


def slope(eps, err):
    return float(np.polyfit(np.log(eps), np.log(err), 1)[0])


def markov_case():
    spec = mb.markov_spec([[0.7, 0.3], [0.4, 0.6]])
    return spec, spec.log_j, indicator(spec.space, (1,))


def oracle_c(spec):
    p, q = spec.P[0, 1], spec.P[1, 0]
    r = 1.0 - p - q
    return spec.pi[0] * spec.pi[1] * (1.0 + r) / (1.0 - r)


def random_kernel_direction(spec, rng, max_len=2):
    items = mb.kernel_basis(spec, max_len)
    c = rng.normal(size=len(items))
    c /= np.linalg.norm(c)
    eta = items[0][1] * c[0]
    for ci, (_, b) in zip(c[1:], items[1:]):
        eta = eta + b * ci
    return eta


def check_rpf():
    out = []
    iid = make_finite_alphabet(2)
    sol = solve_rpf(iid, constant(iid, 0.0))
    out.append(_le("rpf.zero.lambda", abs(sol.lam - 1.0), 1e-14))
    out.append(_le("rpf.zero.eigfun", np.max(np.abs(sol.eigfun.values - 1.0)), 1e-12))
    spec, f, _ = markov_case()
    sol = solve_rpf(spec.space, f)
    out.append(_le("rpf.markov.lambda", abs(sol.lam - 1.0), 1e-12))
    gap = np.max(np.abs(gibbs_measure(spec.space, f, 3).weights - mb.markov_gibbs(spec, 3).weights))
    out.append(_le("rpf.markov.gibbs_depth3", gap, 1e-12))
    return out


def check_dense_eigenvalue():
    rng = np.random.default_rng(SEED)
    spaces = [make_finite_alphabet(2), make_finite_alphabet(3), make_circle(16)]
    worst = 0.0
    for i in range(10):
        space = spaces[i % 3]
        f = random_potential(space, 2, rng)
        lam = solve_rpf(space, f).lam
        ev = np.linalg.eigvals(transfer_matrix(space, f, 2).toarray())
        worst = max(worst, abs(lam - float(np.max(np.abs(ev)))) / lam)
    return [_le("rpf.dense_eigenvalue", worst, 1e-10)]


def check_coboundary_invariance():
    rng = np.random.default_rng(SEED + 1)
    space = make_finite_alphabet(2)
    worst = 0.0
    for _ in range(20):
        f = random_potential(space, 2, rng)
        v = random_potential(space, 2, rng)
        c = float(rng.normal())
        p = thermo.pressure(space, f + v - compose_shift(v, 1) + c)
        worst = max(worst, abs(p - thermo.pressure(space, f) - c))
    return [_le("pressure.coboundary_invariance", worst, 1e-8)]


def check_first_derivative():
    rng = np.random.default_rng(SEED + 2)
    space = make_finite_alphabet(3)
    worst_p = worst_l = 0.0
    for _ in range(10):
        f = random_potential(space, 2, rng, 0.5)
        g = random_potential(space, 2, rng)
        fn, _ = normalize_potential(space, f)
        exact = thermo.pressure_derivative(space, fn, g)
        fd = thermo.fd_first(lambda t: thermo.pressure(space, f + t * g))
        worst_p = max(worst_p, abs(fd - exact) / max(abs(exact), 1e-12))
        lam = lambda t: solve_rpf(space, f + t * g).lam  # noqa: E731
        exact = thermo.lambda_derivative(space, f, g)
        worst_l = max(worst_l, abs(thermo.fd_first(lam) - exact) / max(abs(exact), 1e-12))
    return [
        _le("pressure.first_derivative", worst_p, 1e-6),
        _le("lambda.gateaux_derivative", worst_l, 1e-6),
    ]


def check_variance():
    spec, f, g = markov_case()
    rep = thermo.variance_report(spec.space, f, g)
    oracle = oracle_c(spec)
    det = (rep.sigma2_resolvent, rep.sigma2_quadratic, rep.sigma2_greenkubo)
    out = [
        _le("variance.deterministic_spread", rep.spread, 1e-6),
        _le("variance.fd", abs(rep.sigma2_fd - rep.sigma2_resolvent), 1e-4),
        _le("variance.oracle_c", max(abs(s - oracle) for s in det), 1e-8),
    ]
    cob = indicator(spec.space, (1,))
    g = cob - compose_shift(cob, 1) + 0.25
    worst = max(
        thermo.pressure_second_derivative(spec.space, f, g, m)
        for m in ("resolvent", "quadratic", "greenkubo")
    )
    out.append(_le("variance.coboundary_degenerate", worst, 1e-8))
    return out


def check_clt(n=2000, m=50000, seed=7):
    out = []
    spec, f, g = markov_case()
    iid = make_finite_alphabet(2)
    cases = {
        "iid": (iid, constant(iid, 0.0), GridFunction(iid, 1, [1.0, -1.0])),
        "markov": (spec.space, f, g),
    }
    for name, (space, fn, obs) in cases.items():
        rep = clt.clt_report(space, fn, obs, n, m, seed)
        samples = clt.clt_samples(space, fn, obs, n, m, seed)
        out.append(_le(f"clt.{name}.ks", rep.ks_distance, 0.02))
        out.append(
            Check(f"clt.{name}.ks_wrong_variance", clt.ks_distance(samples, 4 * rep.sigma2_used),
                  0.05, clt.ks_distance(samples, 4 * rep.sigma2_used) >= 0.05)
        )
        out.append(_le(f"clt.{name}.mgf", rep.mgf_max_abs_err, 0.03))
        z = abs(rep.sigma2_mc - rep.sigma2_used) / rep.sigma2_mc_stderr
        out.append(_le(f"clt.{name}.variance_mc_stderrs", z, 3.0))
    return out


def check_entropy():
    spec, f, _ = markov_case()
    space = spec.space
    rng = np.random.default_rng(SEED + 3)
    lit1 = lit2 = gen = 0.0
    for _ in range(5):
        eta = random_kernel_direction(spec, rng)
        fd1 = thermo.fd_first(lambda t: thermo.entropy_along(space, f, eta, t))
        fd2 = thermo.fd_second(lambda t: thermo.entropy_along(space, f, eta, t))
        lit1 = max(lit1, abs(thermo.entropy_derivative(space, f, eta) - fd1) / abs(fd1))
        lit2 = max(lit2, abs(thermo.entropy_second_derivative(space, f, eta) - fd2) / abs(fd2))
        gen = max(gen, abs(thermo.entropy_derivative_general(space, f, eta) - fd1) / abs(fd1))
    return [
        _le("entropy.general_first", gen, 1e-5),
        _le("entropy.literal_first", lit1, 1e-5, informational=True),
        _le("entropy.literal_second", lit2, 1e-3, informational=True),
    ]


def check_eigfun_derivative():
    spec, f, g = markov_case()
    space = spec.space
    rng = np.random.default_rng(SEED + 4)
    eta = random_kernel_direction(spec, rng)
    u = eigfun_derivative(space, f, eta)
    spread = float(u.values.max() - u.values.min())
    phi = random_potential(space, 3, rng)
    u = eigfun_derivative(space, f, phi)
    mu = gibbs_measure(space, f, 3)
    mean = inner_product(phi, constant(space, 1.0), mu)
    lhs = apply_transfer(space, f, u) - u
    rhs = mean - apply_transfer(space, f, phi)
    resid = float(np.max(np.abs((lhs - rhs).values)))
    return [
        _le("eigfun_derivative.kernel_constancy", spread, 1e-9),
        _le("eigfun_derivative.equation_residual", resid, 1e-10),
    ]


def check_linear_response():
    spec, f, _ = markov_case()
    space = spec.space
    rng = np.random.default_rng(SEED + 5)
    eta = random_kernel_direction(spec, rng)
    phi = random_potential(space, 2, rng)
    rep = thermo.linear_response_report(space, f, phi, eta)
    base = thermo.observable_mean_along(space, f, eta, phi, 0.0)
    eps = np.array([1e-1, 1e-2, 1e-3])
    series, inner = [], []
    for e in eps:
        delta = thermo.observable_mean_along(space, f, eta, phi, e) - base
        series.append(abs(delta - e * rep["series"]))
        inner.append(abs(delta - e * rep["inner"]))
    return [
        _within("linear_response.series_slope", slope(eps, series), 1.9, 2.1),
        Check("linear_response.inner_slope", slope(eps, inner), 2.1,
              1.9 <= slope(eps, inner) <= 2.1, informational=True),
        _le("linear_response.series_vs_inner", rep["gap"], 1e-10, informational=True),
    ]


def check_taylor():
    rng = np.random.default_rng(SEED + 6)
    space = make_finite_alphabet(2)
    f = random_potential(space, 2, rng)
    g = random_potential(space, 2, rng)
    w = GridFunction(space, 1, rng.uniform(0.5, 1.5, size=2))
    eps = np.array([1e-1, 1e-2, 1e-3])
    err = [taylor_remainder(space, f, e * g, w) for e in eps]
    return [_within("transfer.taylor_slope", slope(eps, err), 2.8, 3.2)]


def check_basis():
    spec, f, _ = markov_case()
    space = spec.space
    mu = mb.markov_gibbs(spec, 5)
    haar = [mb.haar_e(spec, ())] + [mb.haar_e(spec, w) for w in mb.words(3)]
    items = mb.kernel_basis(spec, 3)
    kern = [b for _, b in items]

    def gram_err(fs):
        g = np.array([[inner_product(a, b, mu) for b in fs] for a in fs])
        return float(np.max(np.abs(g - np.eye(len(fs)))))

    ann = max(float(np.max(np.abs(apply_transfer(space, f, b).values))) for b in kern)
    rng = np.random.default_rng(SEED + 7)
    eta = random_kernel_direction(spec, rng)
    phi = random_potential(space, 3, rng)
    coeff = mb.coeff_directional_derivative(spec, phi, f, eta, tol=np.inf)
    direct = thermo.functional_directional_derivative(space, f, eta, phi)
    xi, _, _ = kernel_project(space, f, random_potential(space, 4, rng))
    words = mb.words(3)
    rec = mb.reconstruct(spec, mb.expansion_coefficients(spec, xi, words))
    resid = xi - rec
    return [
        _le("basis.haar_gram", gram_err(haar), 1e-12),
        _le("basis.kernel_gram", gram_err(kern), 1e-12),
        _le("basis.annihilated", ann, 1e-12),
        _le("basis.coefficient_sum", abs(coeff - direct), 1e-10),
        _le("basis.reconstruction", math.sqrt(max(inner_product(resid, resid, mu), 0.0)), 1e-10),
    ]


def check_circle():
    space = make_circle(256)
    f = from_index_evaluator(space, 2, lambda w: math.cos(space.nodes[w[0]]))
    return [_le("circle.pressure_cos", abs(thermo.pressure(space, f) - math.log(i0(1.0))), 1e-6)]


SUITE = (
    check_rpf,
    check_dense_eigenvalue,
    check_coboundary_invariance,
    check_first_derivative,
    check_variance,
    check_clt,
    check_entropy,
    check_eigfun_derivative,
    check_linear_response,
    check_taylor,
    check_basis,
    check_circle,
)


def run_suite():
    checks = []
    for fn in SUITE:
        checks.extend(fn())
    failed = [c.name for c in checks if not c.passed and not c.informational]
    return checks, failed

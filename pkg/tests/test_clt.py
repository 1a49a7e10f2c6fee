import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from conftest import indicator1
from ruelle import clt, thermo
from ruelle import markovbasis as mb
from ruelle.apriori import make_finite_alphabet
from ruelle.funcspace import GridFunction, compose_shift, constant, inner_product
from ruelle.transfer import NotNormalizedError

S2 = make_finite_alphabet(2)
F0 = constant(S2, 0.0)
SPIN = GridFunction(S2, 1, [1.0, -1.0])


def test_sample_iid_frequency():
    L = 100_000
    seq = clt.sample_gibbs(S2, F0, L, seed=3)
    assert seq.shape == (L,)
    assert abs(seq.mean() - 0.5) <= 4 / math.sqrt(L)


def test_sample_deterministic(markov):
    a = clt.sample_gibbs(markov.space, markov.log_j, 5000, seed=9)
    b = clt.sample_gibbs(markov.space, markov.log_j, 5000, seed=9)
    c = clt.sample_gibbs(markov.space, markov.log_j, 5000, seed=10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_markov_pairs(markov):
    L = 200_000
    seq = clt.sample_gibbs(markov.space, markov.log_j, L, seed=5)
    pairs = np.bincount(seq[:-1] * 2 + seq[1:], minlength=4)
    n = L - 1
    p = (markov.pi[:, None] * markov.P).ravel()
    se = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(pairs - n * p) <= 5 * se)


def test_sample_chi_square_depth3(markov):
    L = 10 ** 6
    seq = clt.sample_gibbs(markov.space, markov.log_j, L, seed=17)
    idx = seq[:-2] * 4 + seq[1:-1] * 2 + seq[2:]
    counts = np.bincount(idx, minlength=8)
    p = mb.markov_gibbs(markov, 3).weights
    stat = float(np.sum((counts - counts.sum() * p) ** 2 / (counts.sum() * p)))
    # overlapping windows are dependent; the bound is generous but still detects bias
    assert stat <= scipy.stats.chi2.ppf(0.999, 7)


def test_sample_errors(markov):
    with pytest.raises(NotNormalizedError):
        clt.sample_gibbs(S2, constant(S2, 1.0), 100, 0)
    with pytest.raises(ValueError):
        clt.sample_gibbs(markov.space, markov.log_j, 1, 0)


def test_streams_match_marginals(markov):
    s = clt.sample_streams(markov.space, markov.log_j, 3, 40_000, seed=2, block=1000)
    assert s.shape == (40_000, 3)
    for col in range(3):
        assert abs(s[:, col].mean() - markov.pi[1]) <= 5 * math.sqrt(markov.pi[1] * markov.pi[0] / 40_000)
    first = clt.sample_streams(markov.space, markov.log_j, 3, 1000, seed=2, block=1000)
    np.testing.assert_array_equal(first, s[:1000])


def test_birkhoff_examples(rng):
    seq = rng.integers(0, 2, size=500)
    g = constant(S2, 2.5)
    np.testing.assert_array_equal(clt.birkhoff_samples(g, seq, 10, 20, 2.5), np.zeros(20))
    g = GridFunction(S2, 2, [1.0, 2.0, 3.0, 4.0])
    out = clt.birkhoff_samples(g, seq, 1, 5, 0.5)
    want = [g((seq[i], seq[i + 1])) - 0.5 for i in range(5)]
    np.testing.assert_allclose(out, want)
    out = clt.birkhoff_samples(g, seq, 4, 3, 0.0)
    want = [sum(g((seq[j], seq[j + 1])) for j in range(4 * i, 4 * i + 4)) / 2 for i in range(3)]
    np.testing.assert_allclose(out, want)
    with pytest.raises(ValueError, match="need at least"):
        clt.birkhoff_samples(g, seq[:30], 10, 3, 0.0)


def test_birkhoff_mean_zero(markov):
    g = indicator1(markov)
    s = clt.clt_samples(markov.space, markov.log_j, g, 200, 5000, seed=1)
    sigma = math.sqrt(thermo.pressure_second_derivative(markov.space, markov.log_j, g))
    assert abs(s.mean()) <= 4 * sigma / math.sqrt(5000)


def test_mc_variance_coboundary(markov):
    v = indicator1(markov)
    g = v - compose_shift(v, 1) + 0.25
    est = clt.asymptotic_variance_mc(markov.space, markov.log_j, g, 2000, 2000, seed=4)
    mu = mb.markov_gibbs(markov, 2)
    assert est <= 0.05 * inner_product(g, g, mu)


def test_mc_variance_iid():
    est, se = clt.asymptotic_variance_mc(S2, F0, SPIN, 100, 20_000, seed=8, return_stderr=True)
    assert abs(est - 1.0) <= 3 * se


def test_mc_variance_markov(markov):
    g = indicator1(markov)
    est, se = clt.asymptotic_variance_mc(markov.space, markov.log_j, g, 500, 20_000, seed=8,
                                         return_stderr=True)
    assert abs(est - thermo.pressure_second_derivative(markov.space, markov.log_j, g)) <= 3 * se


def test_ks_examples():
    m = 1000
    q = scipy.stats.norm.ppf(np.arange(1, m + 1) / (m + 1))
    assert clt.ks_distance(q, 1.0) <= 1 / m
    assert clt.ks_distance(np.zeros(100), 1.0) >= 0.5
    x = np.random.default_rng(0).standard_normal(50_000)
    assert clt.ks_distance(x, 1.0) <= 1.36 / math.sqrt(50_000)
    with pytest.raises(ValueError):
        clt.ks_distance(x, 0.0)


def test_ks_matches_scipy():
    x = np.random.default_rng(1).normal(0.1, 1.3, size=3000)
    want = scipy.stats.kstest(x, "norm", args=(0, math.sqrt(2.0))).statistic
    assert abs(clt.ks_distance(x, 2.0) - want) <= 1e-14


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=50), st.randoms(use_true_random=False))
def test_ks_order_invariant(xs, r):
    ys = list(xs)
    r.shuffle(ys)
    assert clt.ks_distance(xs, 1.5) == clt.ks_distance(ys, 1.5)
    assert 0.0 <= clt.ks_distance(xs, 1.5) <= 1.0


def test_mgf_examples():
    x = np.random.default_rng(2).standard_normal(50_000)
    assert clt.mgf_compare(x, 1.0, [0.0]) == 0.0
    assert clt.mgf_compare(x, 1.0, [1.0]) <= 0.02
    assert clt.mgf_compare(x, 4.0, [1.0]) >= 0.2
    with pytest.raises(ValueError):
        clt.mgf_compare(x, 1.0, [])
    with pytest.raises(ValueError):
        clt.mgf_compare(x, 1.0, [2.0])


def test_report_degenerate(markov):
    v = indicator1(markov)
    g = v - compose_shift(v, 1) + 0.25
    rep = clt.clt_report(markov.space, markov.log_j, g, 100, 1000, seed=1)
    assert rep.degenerate and rep.ks_distance is None
    assert sum(rep.histogram["count"]) == 1000
    with pytest.raises(ValueError):
        clt.clt_report(markov.space, markov.log_j, g, 100, 999, seed=1)


def test_report_determinism_and_centering(markov):
    sp, f = markov.space, markov.log_j
    g = indicator1(markov)
    a = clt.clt_report(sp, f, g, 300, 2000, seed=5)
    b = clt.clt_report(sp, f, g, 300, 2000, seed=5)
    assert a.to_dict() == b.to_dict()
    c = clt.clt_report(sp, f, g + 1.75, 300, 2000, seed=5)
    assert abs(c.beta_prime - a.beta_prime - 1.75) <= 1e-14
    assert abs(c.sigma2_used - a.sigma2_used) <= 1e-12
    assert abs(c.ks_distance - a.ks_distance) <= 1e-12
    sa = clt.clt_samples(sp, f, g, 300, 2000, 5)
    sc = clt.clt_samples(sp, f, g + 1.75, 300, 2000, 5)
    assert np.max(np.abs(sa - sc)) <= 1e-12


def test_histogram_csv(tmp_path):
    x = np.random.default_rng(3).standard_normal(1000)
    h = clt.histogram(x, 1.0, bins=20)
    assert sum(h["count"]) == 1000
    p = tmp_path / "h.csv"
    clt.write_histogram_csv(h, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "bin_left,bin_right,count,gaussian_density"
    assert len(lines) == 21

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_function, random_kernel
from ruelle import markovbasis as mb
from ruelle import thermo
from ruelle.apriori import make_finite_alphabet
from ruelle.funcspace import GridFunction, indicator, inner_product, sup_norm
from ruelle.transfer import apply_transfer, kernel_project, transfer_matrix

HALF = [[0.5, 0.5], [0.5, 0.5]]

stochastic = st.tuples(st.floats(0.02, 0.98), st.floats(0.02, 0.98)).map(
    lambda pq: mb.markov_spec([[1 - pq[0], pq[0]], [pq[1], 1 - pq[1]]])
)


def gram(fs, mu):
    return np.array([[inner_product(a, b, mu) for b in fs] for a in fs])


def test_markov_spec_examples():
    s = mb.markov_spec(HALF)
    np.testing.assert_array_equal(s.pi, [0.5, 0.5])
    np.testing.assert_array_equal(s.J, np.full((2, 2), 0.5))
    p, q = 0.3, 0.4
    s = mb.markov_spec([[1 - p, p], [q, 1 - q]])
    np.testing.assert_allclose(s.pi, [q / (p + q), p / (p + q)], atol=1e-16)
    np.testing.assert_allclose(s.J.sum(axis=0), [1, 1], atol=1e-14)
    assert s.space.mode == "counting"


@pytest.mark.parametrize("P", [[[1, 0], [0.5, 0.5]], [[0.6, 0.5], [0.5, 0.5]], [[1.2, -0.2], [0.5, 0.5]], [[1.0]]])
def test_markov_spec_errors(P):
    with pytest.raises(ValueError):
        mb.markov_spec(P)


def test_cylinder_measure_examples(markov):
    half = mb.markov_spec(HALF)
    assert mb.cylinder_measure(half, (0,)) == 0.5
    assert mb.cylinder_measure(markov, (0, 1)) == markov.pi[0] * markov.P[0, 1]
    total = sum(mb.cylinder_measure(markov, w) for w in itertools.product((0, 1), repeat=3))
    assert abs(total - 1.0) <= 1e-14
    assert mb.cylinder_measure(markov, ()) == 1.0


def test_probability_mode_equivalence(markov, rng):
    prob = make_finite_alphabet(2)
    a = transfer_matrix(markov.space, markov.log_j, 3).toarray()
    b = transfer_matrix(prob, markov.log_2j, 3).toarray()
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_haar_examples():
    half = mb.markov_spec(HALF)
    e = mb.haar_e(half, (0,))
    want = math.sqrt(2) * indicator(half.space, (0, 0)) - math.sqrt(2) * indicator(half.space, (0, 1))
    np.testing.assert_allclose(e.values, want.values, atol=1e-15)
    assert e.depth == 2
    with pytest.raises(ValueError):
        mb.haar_e(half, (0, 1, 0, 1, 0))


def test_haar_orthonormal(markov):
    mu = mb.markov_gibbs(markov, 5)
    fs = [mb.haar_e(markov, ())] + [mb.haar_e(markov, w) for w in mb.words(3)]
    assert np.max(np.abs(gram(fs, mu) - np.eye(len(fs)))) <= 1e-12
    for e in fs:
        assert abs(inner_product(e, GridFunction(markov.space, 0, [1.0]), mu)) <= 1e-14


def test_kernel_a_examples(markov):
    half = mb.markov_spec(HALF)
    a = mb.kernel_a(half, (0,), normalized=False)
    want = math.sqrt(2) * (mb.haar_e(half, (0, 0)) - mb.haar_e(half, (1, 0)))
    np.testing.assert_allclose(a.values, want.values, atol=1e-15)
    mu = mb.markov_gibbs(markov, 5)
    for w in mb.words(3):
        ah = mb.kernel_a(markov, w)
        assert ah.depth == len(w) + 2
        assert abs(inner_product(ah, ah, mu) - 1.0) <= 1e-12
        assert sup_norm(apply_transfer(markov.space, markov.log_j, ah)) <= 1e-12
    with pytest.raises(ValueError):
        mb.kernel_a(markov, ())
    with pytest.raises(ValueError):
        mb.kernel_a(markov, (0, 0, 0, 0))


def test_kernel_a_norm_closed_form(markov):
    mu = mb.markov_gibbs(markov, 4)
    pi, P = markov.pi, markov.P
    for w in mb.words(2):
        a = mb.kernel_a(markov, w, normalized=False)
        want = pi[w[0]] * (1 / (pi[0] * P[0, w[0]]) + 1 / (pi[1] * P[1, w[0]]))
        assert abs(inner_product(a, a, mu) - want) <= 1e-12


def test_completion_pair(markov):
    e0, e1 = mb.complete_depth2_kernel(markov)
    mu = mb.markov_gibbs(markov, 5)
    assert np.max(np.abs(gram([e0, e1], mu) - np.eye(2))) <= 1e-12
    for e in (e0, e1):
        assert sup_norm(apply_transfer(markov.space, markov.log_j, e)) <= 1e-12
        assert e.values[np.flatnonzero(e.values)[0]] > 0
        for w in mb.words(3):
            assert abs(inner_product(e, mb.kernel_a(markov, w), mu)) <= 1e-12


def test_full_kernel_gram(markov):
    mu = mb.markov_gibbs(markov, 5)
    fs = [b for _, b in mb.kernel_basis(markov, 3)]
    assert len(fs) == 2 + 14
    assert np.max(np.abs(gram(fs, mu) - np.eye(len(fs)))) <= 1e-12


def test_expansion_examples(markov, rng):
    a = mb.kernel_a(markov, (1, 0))
    c = mb.expansion_coefficients(markov, a)
    for key, v in c.items():
        assert abs(v - (1.0 if key == "10" else 0.0)) <= 1e-12
    zero = GridFunction(markov.space, 2, np.zeros(4))
    assert all(v == 0.0 for v in mb.expansion_coefficients(markov, zero).values())


def test_reconstruction(markov, rng):
    for depth in (2, 3, 4):
        xi, _, _ = kernel_project(markov.space, markov.log_j, random_function(markov.space, depth, rng))
        rec = mb.reconstruct(markov, mb.expansion_coefficients(markov, xi, mb.words(2)))
        r = xi - rec
        mu = mb.markov_gibbs(markov, max(r.depth, 4))
        assert math.sqrt(inner_product(r, r, mu)) <= 1e-10


def test_coeff_directional_derivative(markov, rng):
    sp, f = markov.space, markov.log_j
    eta = random_kernel(markov, rng)
    assert abs(mb.coeff_directional_derivative(markov, f, f, eta)) <= 1e-12
    phi = random_function(sp, 3, rng)
    a = mb.kernel_a(markov, (0, 1))
    got = mb.coeff_directional_derivative(markov, phi, f, a)
    cx = mb.expansion_coefficients(markov, kernel_project(sp, f, phi)[0])
    cz = mb.expansion_coefficients(markov, kernel_project(sp, f, f)[0])
    assert abs(got - (cx["01"] - cz["01"])) <= 1e-12
    got = mb.coeff_directional_derivative(markov, phi, f, eta)
    assert abs(got - thermo.functional_directional_derivative(sp, f, eta, phi)) <= 1e-10


def test_coeff_directional_derivative_errors(markov, rng):
    sp, f = markov.space, markov.log_j
    eta = random_kernel(markov, rng)
    phi = random_function(sp, 4, rng)
    with pytest.raises(ValueError, match="word list"):
        mb.coeff_directional_derivative(markov, phi, f, eta, word_list=[(0,)])
    with pytest.raises(ValueError, match="kernel"):
        mb.coeff_directional_derivative(markov, phi, f, indicator(sp, (1,)))
    with pytest.raises(ValueError, match="normalized"):
        mb.coeff_directional_derivative(markov, phi, f + 1.0, eta)


@given(stochastic)
def test_invariants_random_chain(spec):
    assert abs(spec.pi.sum() - 1) <= 1e-15
    np.testing.assert_allclose(spec.pi @ spec.P, spec.pi, atol=1e-14)
    mu = mb.markov_gibbs(spec, 4)
    fs = [b for _, b in mb.kernel_basis(spec, 2)]
    assert np.max(np.abs(gram(fs, mu) - np.eye(len(fs)))) <= 1e-10
    for b in fs:
        assert sup_norm(apply_transfer(spec.space, spec.log_j, b)) <= 1e-10

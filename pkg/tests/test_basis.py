import math

import numpy as np
from numpy.polynomial import legendre as npleg
import pytest
from hypothesis import given, strategies as st

from adleg.basis import (BSVector, IndexSet, bs_to_legendre_derivative, eval_bs_basis,
                         eval_bs_basis_derivative, eval_bs_function, mass_matrix_entry, norm,
                         project)
from adleg.legendre import gauss_legendre_rule

vectors = st.dictionaries(st.integers(2, 60), st.floats(-1e3, 1e3), max_size=20)


class TestIndexSet:
    def test_dedup_sort_and_reject(self):
        lam = IndexSet([5, 3, 3, 2])
        assert lam.indices == (2, 3, 5) and lam.cardinality == 3 == len(lam)
        with pytest.raises(ValueError):
            IndexSet([1, 4])

    def test_set_ops(self):
        a, b = IndexSet([2, 3]), IndexSet([3, 7])
        assert (a | b).indices == (2, 3, 7)
        assert a <= (a | b) and not (a <= b)
        assert IndexSet.range(0, 4).indices == (2, 3, 4)
        assert IndexSet().max() == 1 and 3 in a and 7 not in a


class TestBSVector:
    def test_norm_examples(self):
        assert norm(BSVector.unit(2)) == (1.0, 1.0)
        assert norm(BSVector({2: 3.0, 3: 4.0})) == (5.0, 5.0)
        lo, hi = norm(BSVector({2: 1.0}, tail=0.1))
        assert lo == 1.0 and hi == pytest.approx(math.sqrt(1.01))

    def test_roles(self):
        with pytest.raises(ValueError):
            BSVector({2: 1.0}) + BSVector({2: 1.0}, "dual")
        with pytest.raises(ValueError):
            BSVector({1: 1.0})
        with pytest.raises(ValueError):
            BSVector({2: 1.0}, tail=-1)

    def test_tails_add(self):
        v = BSVector({2: 1.0}, tail=0.1) - BSVector({3: 1.0}, tail=0.2)
        assert v.tail == pytest.approx(0.3) and v.entries == {2: 1.0, 3: -1.0}


class TestDerivativeLink:
    def test_examples(self):
        np.testing.assert_array_equal(bs_to_legendre_derivative(BSVector.unit(2)).coeffs, [0, -1])
        assert not np.any(bs_to_legendre_derivative(BSVector()).coeffs)
        np.testing.assert_array_equal(bs_to_legendre_derivative(BSVector({2: 1, 3: 2})).coeffs,
                                      [0, -1, -2])
        with pytest.raises(ValueError):
            bs_to_legendre_derivative(BSVector({2: 1.0}, "dual"))

    def test_matches_numpy_derivative(self, rng):
        v = BSVector.from_dense(range(2, 15), rng.standard_normal(13))
        c = np.zeros(15)
        for k, val in v.entries.items():
            c[k - 2] += val / math.sqrt(4 * k - 2)
            c[k] -= val / math.sqrt(4 * k - 2)
        x = np.linspace(-1, 1, 41)
        np.testing.assert_allclose(bs_to_legendre_derivative(v)(x),
                                   npleg.legval(x, npleg.legder(c)), atol=1e-11)
        np.testing.assert_allclose(eval_bs_function(v, x), npleg.legval(x, c), atol=1e-12)


class TestEval:
    def test_examples(self):
        e2 = BSVector.unit(2)
        assert eval_bs_function(e2, 1.0) == pytest.approx(0, abs=1e-15)
        assert eval_bs_function(e2, -1.0) == pytest.approx(0, abs=1e-15)
        assert eval_bs_function(e2, 0.0) == pytest.approx(1.5 / math.sqrt(6))
        assert eval_bs_function(BSVector.unit(3), 0.0) == pytest.approx(0, abs=1e-15)

    @given(vectors)
    def test_boundary_values(self, entries):
        v = BSVector(entries)
        ends = np.atleast_1d(eval_bs_function(v, np.array([-1.0, 1.0])))
        assert np.abs(ends).max() <= 1e-12 * max(v.stored_norm(), 1.0)


class TestGram:
    def test_h1_orthonormal(self):
        rule = gauss_legendre_rule(110)
        D = eval_bs_basis_derivative(rule.nodes, 100)
        G = D.T @ (rule.weights[:, None] * D)
        assert np.abs(G - np.eye(99)).max() <= 1e-11

    def test_mass_matrix_closed_form(self):
        rule = gauss_legendre_rule(110)
        E = eval_bs_basis(rule.nodes, 100)
        M = E.T @ (rule.weights[:, None] * E)
        ks = range(2, 101)
        closed = np.array([[mass_matrix_entry(k, m) for m in ks] for k in ks])
        assert np.abs(M - closed).max() <= 1e-12
        assert mass_matrix_entry(2, 2) == pytest.approx(0.4)
        assert mass_matrix_entry(2, 4) == pytest.approx(-1 / (5 * math.sqrt(21)))
        for k in ks:
            for m in ks:
                if (k + m) % 2:
                    assert mass_matrix_entry(k, m) == 0.0 and abs(M[k - 2, m - 2]) < 1e-14


class TestProject:
    def test_examples(self):
        v = BSVector({2: 1.0, 3: 2.0, 4: 3.0}, tail=0.5)
        assert project(v, IndexSet()).entries == {}
        p = project(v, IndexSet([3]))
        assert p.entries == {3: 2.0} and p.tail == 0.0

    @given(vectors, st.sets(st.integers(2, 60)))
    def test_pythagoras_and_idempotence(self, entries, lam):
        v = BSVector(entries)
        lam = IndexSet(lam)
        p = project(v, lam)
        assert project(p, lam) == p
        rest = v - p
        assert v.stored_norm() ** 2 == pytest.approx(p.stored_norm() ** 2 + rest.stored_norm() ** 2,
                                                     rel=1e-12, abs=1e-9)

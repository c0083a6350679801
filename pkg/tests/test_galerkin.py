import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adleg.basis import BSVector, IndexSet
from adleg.galerkin import (InsufficientKmax, NegativeQuadraticForm, SingularRestriction,
                            energy_norm, error_bounds_from_residual, gal, problem_rhs, res,
                            reference_solution, rhs_from_function)
from adleg.operator import ProblemSpec, StiffnessOperator
from adleg.problems import build_problem


@pytest.fixture(scope="module")
def p3():
    A = StiffnessOperator(build_problem("P3"))
    return A, problem_rhs(A)


@pytest.fixture(scope="module")
def p2():
    A = StiffnessOperator(build_problem("P2"))
    return A, problem_rhs(A)


def test_identity_one_index():
    A = StiffnessOperator(ProblemSpec(1.0, 0.0, exact=BSVector({2: 1.0})))
    f = BSVector({2: 1.0, 3: 0.5}, "dual")
    sol = gal(A, f, IndexSet([2]))
    assert sol.u.entries == {2: pytest.approx(1.0)}
    r = res(A, f, sol)
    assert r.get(2) == pytest.approx(0.0, abs=1e-15)
    assert r.norm()[1] == pytest.approx(0.5)


def test_empty_set_and_role_check(p2):
    A, f = p2
    assert gal(A, f, IndexSet()).u.entries == {}
    with pytest.raises(ValueError):
        gal(A, BSVector({2: 1.0}), IndexSet([2]))


def test_singular_restriction():
    class Broken(StiffnessOperator):
        def block(self, rows, cols=None):
            n = len(list(rows))
            return np.zeros((n, n))

    A = Broken(ProblemSpec(1.0, 0.0, exact=BSVector({2: 1.0})))
    with pytest.raises(SingularRestriction):
        gal(A, BSVector({2: 1.0}, "dual"), IndexSet([2, 3]))


def test_galerkin_orthogonality(p3):
    A, f = p3
    lam = IndexSet([2, 3, 5, 8, 13])
    r = res(A, f, gal(A, f, lam))
    assert max(abs(r.get(k)) for k in lam) <= 1e-13 * f.norm()[1]


def test_banded_residual_is_exact(p2):
    A, f = p2
    lam = IndexSet.range(2, 6)
    sol = gal(A, f, lam)
    r = res(A, f, sol)
    assert r.tail == 0.0
    far = res(A, f, sol, K_max=200, check=False)
    assert far.norm()[1] == pytest.approx(r.norm()[1], rel=1e-12)


def test_insufficient_kmax(p3):
    A, f = p3
    sol = gal(A, f, IndexSet.range(2, 10))
    with pytest.raises(InsufficientKmax):
        res(A, f, sol, K_max=11)


def test_optimality_against_random_competitors(p3, rng):
    A, f = p3
    ref = reference_solution(A, f)
    lam = IndexSet([2, 4, 6, 8, 10, 12])
    u_lam = gal(A, f, lam).u
    best = energy_norm(A, ref.u - u_lam)
    idx = lam.as_array()
    for _ in range(50):
        v = BSVector.from_dense(idx, u_lam.values(idx) + 1e-2 * rng.standard_normal(idx.size))
        assert energy_norm(A, ref.u - v) >= best - 1e-14


def test_nested_sets_reduce_error(p3):
    A, f = p3
    ref = reference_solution(A, f)
    errs = [energy_norm(A, ref.u - gal(A, f, IndexSet.range(2, K)).u) for K in range(3, 20)]
    assert all(b <= a + 1e-14 for a, b in zip(errs, errs[1:]))


def test_reference_reproduces_manufactured(p3):
    A, f = p3
    ref = reference_solution(A, f)
    exact = A.problem.exact
    assert (ref.u - exact).norm()[1] <= 1e-12


@pytest.mark.parametrize("name", ["P2", "P3"])
def test_error_sandwich(name):
    A = StiffnessOperator(build_problem(name))
    f = problem_rhs(A)
    exact = A.problem.exact
    for K in (3, 5, 8):
        sol = gal(A, f, IndexSet.range(2, K))
        r = res(A, f, sol).norm()
        (e_lo, e_hi), (h_lo, h_hi) = error_bounds_from_residual(r, A.alpha_lower, A.alpha_upper)
        diff = exact - sol.u
        e = energy_norm(A, diff)
        h = diff.norm()[1]
        assert e_lo * (1 - 1e-10) <= e <= e_hi * (1 + 1e-10)
        assert h_lo * (1 - 1e-10) <= h <= h_hi * (1 + 1e-10)


def test_error_bound_examples():
    (e_lo, e_hi), (h_lo, h_hi) = error_bounds_from_residual((1.0, 2.0), 0.25, 4.0)
    assert (e_lo, e_hi, h_lo, h_hi) == pytest.approx((0.5, 4.0, 0.25, 8.0))
    with pytest.raises(ValueError):
        error_bounds_from_residual((1.0, 1.0), 2.0, 1.0)


def test_energy_norm_examples(backend):
    A = StiffnessOperator(ProblemSpec(1.0, 0.0, exact=BSVector({2: 1.0})))
    assert energy_norm(A, BSVector({2: 3.0, 7: 4.0})) == pytest.approx(5.0)
    assert energy_norm(A, BSVector({})) == 0.0

    class Negative(StiffnessOperator):
        def block(self, rows, cols=None):
            return -np.eye(len(list(rows)))

    with pytest.raises(NegativeQuadraticForm):
        energy_norm(Negative(A.problem), BSVector({2: 1.0}))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=15))
def test_energy_norm_sandwich(vals):
    A = StiffnessOperator(build_problem("P2"))
    v = BSVector.from_dense(range(2, 2 + len(vals)), vals)
    e = energy_norm(A, v)
    n = v.norm()[1]
    assert math.sqrt(A.alpha_lower) * n * (1 - 1e-12) - 1e-14 <= e
    assert e <= math.sqrt(A.alpha_upper) * n * (1 + 1e-12) + 1e-14


def test_rhs_from_constant():
    f = rhs_from_function(lambda x: np.ones_like(x))
    assert f.role == "dual"
    assert f.get(2) == pytest.approx(2 / math.sqrt(6), rel=1e-14)
    assert max(abs(f.get(k)) for k in range(3, 40)) <= 1e-15

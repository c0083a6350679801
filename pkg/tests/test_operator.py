import math
import threading

import numpy as np
import pytest

from adleg.acceptance import quadrature_block
from adleg.basis import BSVector
from adleg.legendre import LegendreSeries, gauss_legendre_rule
from adleg.operator import (DecayFitError, ProblemSpec, StiffnessOperator, apply, coefficient_B,
                            coefficient_C, entry_diffusion, entry_reaction, fit_decay_class,
                            ingest_coefficient, inverse_decay_rate, truncate)

ONE = LegendreSeries([1.0], "classical")
X = LegendreSeries([0.0, 1.0], "classical")


def operator(nu, sigma=0.0, **kw):
    return StiffnessOperator(ProblemSpec(nu, sigma, exact=BSVector({2: 1.0})), **kw)


def geometric_nu(rate=1.0, n=40):
    # nu_k = e^{-k}; nu_0 large enough for positivity
    c = np.exp(-rate * np.arange(n))
    c[0] = 2.0
    return c.tolist()


class TestEntries:
    def test_identity(self, backend):
        assert entry_diffusion(5, 5, ONE) == pytest.approx(1.0)
        assert entry_diffusion(5, 7, ONE) == pytest.approx(0.0, abs=1e-15)

    def test_parity_of_x(self, backend):
        for m in range(2, 15):
            for n in range(2, 15):
                if abs(m - n) != 1:
                    assert entry_diffusion(m, n, X) == pytest.approx(0.0, abs=1e-14)

    def test_mass_values(self, backend):
        assert entry_reaction(2, 2, ONE) == pytest.approx(0.4)
        assert entry_reaction(2, 4, ONE) == pytest.approx(-1 / (5 * math.sqrt(21)))

    def test_rejects_orthonormal(self):
        with pytest.raises(ValueError):
            entry_diffusion(2, 2, LegendreSeries([1.0], "orthonormal"))

    @pytest.mark.parametrize("nu, sigma", [
        (lambda x: 2 + np.sin(x), lambda x: np.exp(x)),
        (lambda x: 1 / (2 - x), lambda x: 1 + x * x),
    ])
    def test_quadrature_oracle(self, backend, nu, sigma):
        A = operator(nu, sigma)
        B = A.block(np.arange(2, 61))
        Q = quadrature_block(nu, sigma, 60)
        assert np.abs(B - Q).max() <= 1e-10
        assert np.abs(B - B.T).max() <= 1e-12 * np.abs(B).max()

    def test_coercive_blocks(self):
        A = operator(lambda x: 1 / (2 - x), lambda x: 1 + x)
        for n in (5, 20, 60):
            lam = np.linalg.eigvalsh(A.block(np.arange(2, n + 2)))
            assert lam.min() >= A.alpha_lower - 1e-10
            assert lam.max() <= A.alpha_upper + 1e-10
        assert np.all(np.diag(A.block(np.arange(2, 60))) >= A.alpha_lower)


class TestCoefficientBounds:
    def test_B_and_C_bounded(self):
        worst_b = worst_c = 0.0
        for m in range(0, 201, 7):
            for n in range(0, 201, 11):
                for r in range(0, min(m, n) + 1, 3):
                    worst_b = max(worst_b, coefficient_B(m, n, r))
                    worst_c = max(worst_c, coefficient_C(m, n, r) * math.sqrt((2 * m + 1) * (2 * n + 1)))
        assert worst_b <= 10 and worst_c <= 10


class TestProblemSpec:
    def test_bounds(self):
        p = ProblemSpec([2.0, 1.0], [1.0, 0.5], exact=BSVector({2: 1.0}))
        assert p.alpha_star_lower == pytest.approx(1.0)
        assert p.nu_bounds == pytest.approx((1.0, 3.0))
        assert p.alpha_upper_max_nu_sigma == pytest.approx(3.0)
        assert p.alpha_star_upper == pytest.approx(3.0 + 4 / math.pi ** 2 * 1.5)

    def test_rejections(self):
        with pytest.raises(ValueError):
            ProblemSpec([0.0, 1.0], 0.0, exact=BSVector({2: 1.0}))
        with pytest.raises(ValueError):
            ProblemSpec(1.0, [0.0, 1.0], exact=BSVector({2: 1.0}))
        with pytest.raises(ValueError):
            ProblemSpec(1.0, 0.0)
        with pytest.raises(ValueError):
            ProblemSpec(1.0, 0.0, rhs=lambda x: x, exact=BSVector({2: 1.0}))

    def test_ingestion(self):
        s = ingest_coefficient(lambda x: 1 / (2 - x))
        assert s.normalization == "classical" and s.approximate and not s.warnings
        assert 15 < s.degree < 40
        x = np.linspace(-1, 1, 101)
        np.testing.assert_allclose(s(x), 1 / (2 - x), atol=1e-13)

    def test_ingestion_warns_when_not_resolved(self):
        with pytest.warns(RuntimeWarning):
            s = ingest_coefficient(lambda x: np.abs(x))
        assert s.warnings


class TestDecay:
    def test_identity_sentinel(self):
        d = operator(1.0).decay
        assert math.isinf(d.eta_L) and d.exact_band == 0 and d.is_diagonal

    def test_inverse_rate_oracle(self):
        # z^2 - 2.3027 z + 1 with eta_L = 1, c_L = 0.5, min diag 1
        b = (math.e ** 2 + 2) / (math.e * 1.5)
        z = (b - math.sqrt(b * b - 4)) / 2
        assert z == pytest.approx(0.5808, abs=1e-4)
        assert inverse_decay_rate(1.0, 0.5, 1.0) == pytest.approx(-math.log(z), rel=1e-12)
        assert inverse_decay_rate(1.0, 0.5, 1.0) == pytest.approx(0.5434, abs=1e-4)

    def test_inverse_rate_condition(self):
        assert inverse_decay_rate(1.0, 0.9, 1.0) is None
        # scale invariance: doubling the matrix doubles c_L and the diagonal
        assert inverse_decay_rate(1.0, 1.0, 2.0) == pytest.approx(inverse_decay_rate(1.0, 0.5, 1.0))

    def test_geometric_nu_rate(self):
        A = operator(geometric_nu(), use_exact_band=False)
        d = A.decay
        assert d.eta_L >= 0.9
        assert d.exact_band is None and d.condition_holds
        assert 0 < d.eta_L_bar <= d.eta_L

    def test_fit_failure(self):
        A = operator([2.0, 1.0], use_exact_band=False)
        with pytest.raises(DecayFitError):
            fit_decay_class(A, 40)
        with pytest.raises(ValueError):
            fit_decay_class(A, 10)

    def test_inverse_decay_empirical(self):
        A = operator(geometric_nu(0.8), use_exact_band=False)
        d = A.decay
        H = np.linalg.inv(A.block(np.arange(2, 82)))[:40, :40]
        for J in (0, 3, 6, 10):
            i = np.arange(40)
            gap = np.linalg.norm(np.where(np.abs(i[:, None] - i[None, :]) <= J, 0.0, H), 2)
            assert gap <= d.C_Ainv * math.exp(-d.eta_L_bar * J) * (1 + 1e-9)


class TestTruncate:
    def test_zero_and_identity(self):
        A = operator(lambda x: 1 / (2 - x))
        idx = np.arange(2, 20)
        np.testing.assert_array_equal(truncate(A, 0).block(idx), np.diag(np.diag(A.block(idx))))
        I = operator(1.0)
        np.testing.assert_allclose(truncate(I, 3).block(idx), np.eye(idx.size), atol=1e-14)
        with pytest.raises(ValueError):
            truncate(A, -1)

    def test_truncation_rate(self):
        A = operator(geometric_nu(), use_exact_band=False)
        idx = np.arange(2, 62)
        B = A.block(idx)
        gaps = np.array([np.linalg.norm(B - truncate(A, J).block(idx), 2) for J in range(25)])
        J = np.flatnonzero(gaps > 1e-13)
        rate = -np.polyfit(J, np.log(gaps[J]), 1)[0]
        assert rate >= 0.9 * A.decay.eta_L
        for j in J:
            assert gaps[j] <= truncate(A, int(j)).error_bound() * (1 + 1e-9)


class TestApply:
    def test_identity(self):
        v = BSVector({2: 1.0, 5: -2.0})
        Av = apply(operator(1.0), v, 10)
        assert Av.role == "dual" and Av.tail == 0
        np.testing.assert_allclose(Av.values([2, 3, 4, 5, 6]), [1.0, 0, 0, -2.0, 0], atol=1e-15)

    def test_reaction_diagonal(self):
        Av = apply(operator(1.0, 1.0), BSVector.unit(2), 10)
        assert Av.get(2) == pytest.approx(1.4)

    @pytest.mark.filterwarnings("ignore:invertibility condition")
    @pytest.mark.parametrize("banded", [True, False])
    def test_dense_oracle(self, rng, banded):
        A = operator(lambda x: 1 / (2 - x), lambda x: 1 + x, use_exact_band=banded)
        idx = rng.choice(np.arange(2, 40), 8, replace=False)
        v = BSVector.from_dense(idx, rng.standard_normal(8))
        K = 120
        Av = apply(A, v, K)
        rows = np.arange(2, K + 1)
        dense = A.block(rows, idx) @ v.values(idx)
        np.testing.assert_allclose(Av.values(rows), dense, atol=1e-12)
        # the omitted rows are within the tail bound
        far = np.arange(K + 1, K + 200)
        assert np.linalg.norm(A.block(far, idx) @ v.values(idx)) <= Av.tail + 1e-15

    def test_short_K_tail(self, rng):
        A = operator(geometric_nu(), use_exact_band=False)
        v = BSVector.from_dense(range(2, 12), rng.standard_normal(10))
        Av = apply(A, v, 8)
        far = np.arange(9, 200)
        exact_tail = np.linalg.norm(A.block(far, np.arange(2, 12)) @ v.values(range(2, 12)))
        assert exact_tail <= Av.tail

    def test_rejects_dual(self):
        with pytest.raises(ValueError):
            apply(operator(1.0), BSVector({2: 1.0}, "dual"), 5)


class TestCache:
    def test_memo_and_threads(self):
        A = operator(lambda x: 1 / (2 - x), lambda x: 1 + x * x)
        ref = A.block(np.arange(2, 50))
        A2 = operator(lambda x: 1 / (2 - x), lambda x: 1 + x * x)
        out = []

        def work(lo):
            out.append(A2.block(np.arange(lo, lo + 30)))

        threads = [threading.Thread(target=work, args=(lo,)) for lo in (2, 5, 10, 20) * 3]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        np.testing.assert_array_equal(A2.block(np.arange(2, 50)), ref)
        n = A.cache_size()
        A.block(np.arange(2, 50))
        assert A.cache_size() == n

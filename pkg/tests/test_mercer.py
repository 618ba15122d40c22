import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specreg.mercer import (
    EigenSystem,
    dot_product_embedding_check,
    get_eigensystem,
    get_kernel,
    h1_reproducing_residual,
    mercer_partial_sum,
    orthonormality_error,
    periodic_kernel,
    periodic_kernel_eigensystem,
    sphere_dot_product_kernel,
    sphere_eigenvalues,
    sphere_harmonic_dims,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


class TestMinKernel:
    def test_values(self, kmin):
        assert kmin(0.3, 0.7) == 0.3
        assert kmin(0.5, 0.5) == 0.5
        assert kmin.kappa_sq == 1.0

    def test_gram_diagonal_and_psd(self, kmin):
        K = kmin.gram([0.25, 0.5, 0.75])
        np.testing.assert_array_equal(np.diag(K), [0.25, 0.5, 0.75])
        assert np.linalg.eigvalsh(K).min() >= -1e-12

    @given(unit, unit)
    def test_symmetry(self, x, y):
        from specreg.mercer import min_kernel

        k = min_kernel()
        assert k(x, y) == k(y, x)


class TestMinEigensystem:
    def test_first_eigenpair(self, min_es):
        assert min_es.lam([1])[0] == pytest.approx(0.405285, abs=1e-6)
        assert min_es.lam([1])[0] == pytest.approx(4 / math.pi**2, rel=1e-15)
        assert min_es.eval([1], 1.0)[0, 0] == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_monotone_positive(self, min_es):
        lam = min_es.lam(np.arange(1, 10_001))
        assert np.all(lam > 0)
        assert np.all(np.diff(lam) < 0)

    def test_trace_at_one(self, min_es):
        # sum 1/(2n-1)^2 = pi^2/8, so 2 sum lambda_n = 1 = k(1, 1)
        assert mercer_partial_sum(min_es, 1.0, 1.0, 100_000) == pytest.approx(1.0, abs=1e-3)

    def test_partial_sums(self, min_es):
        for N in (1, 10, 1000):
            assert mercer_partial_sum(min_es, 0.0, 0.37, N) == 0.0
        assert mercer_partial_sum(min_es, 0.5, 0.25, 100_000) == pytest.approx(0.25, abs=1e-3)

    def test_one_based(self, min_es):
        with pytest.raises(IndexError):
            min_es.lam([0])

    def test_reconstruction_grid(self, min_es, kmin):
        g = np.linspace(0, 1, 20)
        S = mercer_partial_sum(min_es, g, g, 100_000)
        assert np.abs(S - kmin.gram(g)).max() <= 1e-3

    def test_orthonormality(self, min_es):
        assert orthonormality_error(min_es, 10, panels=10_000) <= 1e-6

    def test_decay_exponent(self, min_es):
        i = np.arange(100, 1001)
        slope = np.polyfit(np.log(i), np.log(min_es.lam(i)), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.02)


class TestSobolevH1:
    def test_origin_value(self, kh1):
        expected = float(mpmath.coth(1))
        assert kh1(0.0, 0.0) == pytest.approx(expected, rel=1e-14)
        assert kh1(0.0, 0.0) == pytest.approx(1.3130, abs=1e-4)
        assert kh1.kappa_sq == pytest.approx(expected, rel=1e-14)

    def test_symmetric(self, kh1):
        assert kh1(0.2, 0.9) == kh1(0.9, 0.2)

    def test_psd(self, kh1, rng):
        K = kh1.gram(rng.random(20))
        assert np.linalg.eigvalsh(K).min() >= -1e-9

    @pytest.mark.parametrize("x,y", [(0.2, 0.7), (0.5, 0.5), (0.1, 0.9), (0.0, 0.3)])
    def test_reproducing_property(self, kh1, x, y):
        assert abs(h1_reproducing_residual(kh1, x, y)) < 1e-7

    def test_printed_variant_is_not_reproducing(self):
        def variant(x, y):
            return math.cosh(1 - max(x, y)) * math.cosh(1 - min(x, y)) / math.sinh(1)

        assert abs(h1_reproducing_residual(variant, 0.2, 0.7)) > 0.1

    def test_bounded_by_kappa(self, kh1):
        g = np.linspace(0, 1, 201)
        assert np.all(np.diag(kh1.gram(g)) <= kh1.kappa_sq + 1e-15)


class TestPeriodic:
    def test_constant_kernel(self):
        es = periodic_kernel_eigensystem(lambda z: np.ones_like(z), d=1, max_freq=4)
        lam = es.lam(np.arange(1, es.size + 1))
        assert lam[0] == pytest.approx(1.0, abs=1e-12)
        assert es.labels[0] == (0,)
        assert np.abs(lam[1:]).max() < 1e-12

    def test_cosine_kernel(self):
        # (1/2pi) int cos(z) e^{imz} dz = 1/2 for m = +-1
        es = periodic_kernel_eigensystem(np.cos, d=1, max_freq=6)
        lam = es.lam(np.arange(1, es.size + 1))
        np.testing.assert_allclose(lam[:2], [0.5, 0.5], atol=1e-12)
        assert set(es.labels[:2]) == {(1,), (-1,)}
        assert np.abs(lam[2:]).max() < 1e-12

    def test_not_psd_rejected(self):
        with pytest.raises(ValueError, match="not PSD"):
            periodic_kernel_eigensystem(lambda z: -np.cos(z), d=1, max_freq=3)

    def test_coefficient_rule(self):
        es = periodic_kernel_eigensystem(coefficient_rule=lambda m: 2.0 ** -abs(m[0]), d=1, max_freq=5)
        np.testing.assert_allclose(es.lam(np.arange(1, 4)), [1.0, 0.5, 0.5])

    def test_eigenfunctions_bounded(self):
        es = periodic_kernel_eigensystem(lambda z: np.exp(np.cos(z)), d=1, max_freq=8)
        x = np.linspace(-np.pi, np.pi, 401)
        E = es.eval(np.arange(1, es.size + 1), x)
        # real orthonormal Fourier basis: |sqrt(2) cos| <= sqrt(2)
        assert np.abs(E).max() <= math.sqrt(2) + 1e-12

    @pytest.mark.parametrize("d", [1, 2])
    def test_orthonormal(self, d):
        es = get_eigensystem("periodic", beta=2.0, d=d, max_freq=3)
        assert orthonormality_error(es, 10, panels=1000) <= 1e-6

    def test_orthonormal_monte_carlo_3d(self):
        es = periodic_kernel_eigensystem(coefficient_rule=lambda m: 1.0, d=3, max_freq=1)
        # Monte Carlo error ~ 1/sqrt(points)
        assert orthonormality_error(es, 10, mc_points=400_000) <= 0.02

    def test_mercer_reconstruction(self):
        g = lambda z: np.exp(np.cos(z))
        es = periodic_kernel_eigensystem(g, d=1, max_freq=20)
        k = periodic_kernel(g)
        x = np.linspace(-np.pi, np.pi, 20, endpoint=False)
        S = mercer_partial_sum(es, x, x, 100_000)
        assert np.abs(S - k.gram(x)).max() <= 1e-2
        assert np.abs(S - k.gram(x)).max() <= 1e-10

    def test_two_dimensional_reconstruction(self):
        g = lambda z: np.exp(np.cos(z[..., 0]) + np.cos(z[..., 1]))
        es = periodic_kernel_eigensystem(g, d=2, max_freq=12)
        k = periodic_kernel(g, d=2)
        pts = np.random.default_rng(3).uniform(-np.pi, np.pi, (15, 2))
        assert np.abs(mercer_partial_sum(es, pts, pts, 10**5) - k.gram(pts)).max() < 1e-8

    def test_deterministic_order(self):
        a = get_eigensystem("periodic", beta=1.5, max_freq=10)
        b = get_eigensystem("periodic", beta=1.5, max_freq=10)
        assert a.labels == b.labels
        assert a.labels[:5] == ((0,), (1,), (-1,), (2,), (-2,))


class TestSphere:
    @pytest.mark.parametrize("d,n,expected", [(2, 0, 1), (2, 1, 3), (2, 2, 5), (3, 2, 9), (4, 3, 30)])
    def test_dims(self, d, n, expected):
        assert sphere_harmonic_dims(d, n) == expected

    def test_dims_identities(self):
        for d in range(2, 6):
            for n in range(1, 21):
                assert sphere_harmonic_dims(d, n) >= sphere_harmonic_dims(d, n - 1)
            for n in range(0, 21):
                direct = sum(sphere_harmonic_dims(d, r) for r in range(n + 1))
                closed = math.comb(n + d, n) + (math.comb(n - 1 + d, n - 1) if n >= 1 else 0)
                assert direct == closed

    def test_embedding_convergent_d3(self):
        chk = dot_product_embedding_check(lambda n: (n + 1.0) ** -6, d=3, beta=2, alpha=0.75)
        assert chk.verdict == "convergent" == chk.predicted
        sums = [v for _, v in chk.partial_sums]
        assert max(sums) - min(sums) < 1e-3

    def test_embedding_convergent_d2(self):
        chk = dot_product_embedding_check(lambda n: (n + 1.0) ** -4, d=2, beta=2, alpha=0.75)
        assert chk.verdict == "convergent"

    @pytest.mark.parametrize("d", [2, 3])
    def test_embedding_divergent(self, d):
        chk = dot_product_embedding_check(lambda n: (n + 1.0) ** (-2 * d), d=d, beta=2, alpha=0.25)
        assert chk.verdict == "divergent" == chk.predicted
        sums = [v for _, v in chk.partial_sums]
        assert sums[0] < sums[1] < sums[2]

    def test_implied_edr(self):
        chk = dot_product_embedding_check(lambda n: (n + 1.0) ** -4, d=2, beta=2, alpha=0.75)
        assert chk.implied_edr == pytest.approx(2.0, abs=0.1)

    def test_sorted_eigenvalues(self):
        lam = sphere_eigenvalues(lambda n: (n + 1.0) ** -4, d=2, max_degree=10)
        assert len(lam) == 121
        assert lam[0] == 1.0 and np.all(lam[1:4] == 2.0**-4)

    def test_dot_product_kernel_psd(self):
        k = sphere_dot_product_kernel(lambda n: (n + 1.0) ** -4, d=2, max_degree=40)
        pts = k.domain.uniform(np.random.default_rng(0), 20)
        K = k.gram(pts)
        assert np.allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-9
        assert np.diag(K).max() <= k.kappa_sq + 1e-9


def test_kernel_psd_random(rng):
    for name in ("min", "sobolev_h1", "periodic", "sphere"):
        k = get_kernel(name)
        pts = k.domain.uniform(rng, 20)
        assert np.linalg.eigvalsh(k.gram(pts)).min() >= -1e-9, name


def test_explicit_values_system():
    es = EigenSystem.from_values([1.0, 0.5])
    assert es.size == 2
    with pytest.raises(IndexError):
        es.lam([3])


@settings(max_examples=30)
@given(st.lists(unit, min_size=2, max_size=6))
def test_min_reconstruction_property(xs):
    from specreg.mercer import min_kernel_eigensystem

    es = min_kernel_eigensystem()
    xs = np.array(xs)
    S = mercer_partial_sum(es, xs, xs, 20_000)
    assert np.abs(S - np.minimum.outer(xs, xs)).max() < 1e-3

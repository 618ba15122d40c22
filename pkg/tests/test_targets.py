import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specreg.targets import (
    PackingError,
    evaluate_target,
    get_target,
    hard_instance,
    interpolation_norm,
    min_series_target,
    pack_hypercube,
    read_hard_instance,
    sample_data,
    series_target,
    sobolev_series_target,
    write_hard_instance,
)


def _direct_min_series(x, s, N):
    k = np.arange(1, N + 1)
    n = 2 * k - 1
    return float(np.sum(k ** -(s + 0.5) * math.sqrt(2) * np.sin((2 * n - 1) * np.pi * x / 2)))


def _direct_sobolev_series(x, s, N):
    k = np.arange(1, N + 1)
    return float(np.sum(k ** -(s + 0.5) * (np.sin(2 * np.pi * k * x) + np.cos(2 * np.pi * k * x))))


class TestMinSeries:
    def test_zero_at_origin(self):
        for N in (10, 3000, 6000):
            assert evaluate_target(min_series_target(0.4, N), 0.0) == 0.0

    def test_sign_pattern_at_one(self):
        k = np.arange(1, 101)
        vals = math.sqrt(2) * np.sin((4 * k - 3) * np.pi / 2)
        np.testing.assert_allclose(vals, math.sqrt(2), rtol=1e-12)

    def test_matches_direct_sum(self):
        t = min_series_target(0.4, 500)
        for x in (0.1, 0.5, 0.93):
            assert evaluate_target(t, x) == pytest.approx(_direct_min_series(x, 0.4, 500), abs=1e-11)

    def test_truncation_stable_midpoint(self):
        a = evaluate_target(min_series_target(0.4, 3000), 0.5)
        b = evaluate_target(min_series_target(0.4, 6000), 0.5)
        assert abs(a - b) < 1e-3

    def test_unbounded_at_one(self):
        Ns = [10, 100, 1000, 10_000, 100_000]
        vals = [evaluate_target(min_series_target(0.4, N), 1.0) for N in Ns]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        # grows like sqrt(2) * N^0.1 / 0.1
        assert vals[-1] > 2 * vals[0]

    def test_monotone_partial_sums_at_one(self):
        k = np.arange(1, 100_001)
        assert np.all(np.diff(np.cumsum(math.sqrt(2) * k**-0.9)) > 0)

    def test_grid_values_match_pointwise(self):
        t = min_series_target(0.4, 3000)
        panels = 4000
        x = np.linspace(0, 1, panels + 1)
        np.testing.assert_allclose(t.grid_values(panels), evaluate_target(t, x), atol=1e-9)

    def test_rejects_out_of_range_s(self):
        with pytest.raises(ValueError):
            min_series_target(0.6)


class TestSobolevSeries:
    def test_origin_grows(self):
        # every term at 0 equals k^-(s+1/2)
        vals = [evaluate_target(sobolev_series_target(0.4, N), 0.0) for N in (100, 1000, 10_000)]
        expected = [float(np.sum(np.arange(1, N + 1) ** -0.9)) for N in (100, 1000, 10_000)]
        np.testing.assert_allclose(vals, expected, rtol=1e-12)

    def test_truncation_stable_midpoint(self):
        a = evaluate_target(sobolev_series_target(0.4, 3000), 0.5)
        b = evaluate_target(sobolev_series_target(0.4, 6000), 0.5)
        assert abs(a - b) < 1e-3
        assert a == pytest.approx(_direct_sobolev_series(0.5, 0.4, 3000), abs=1e-10)

    def test_grid_values_match_pointwise(self):
        t = sobolev_series_target(0.4, 3000)
        panels = 10_000
        x = np.linspace(0, 1, panels + 1)
        np.testing.assert_allclose(t.grid_values(panels), evaluate_target(t, x), atol=1e-9)

    def test_no_eigensystem(self):
        with pytest.raises(ValueError):
            interpolation_norm(sobolev_series_target(), 0.2)


@pytest.mark.parametrize("x", [0.1, 0.3, 0.7, 0.9])
def test_interior_partial_sums_cauchy(x):
    for make in (min_series_target, sobolev_series_target):
        diffs = [abs(evaluate_target(make(0.4, 2 * N), x) - evaluate_target(make(0.4, N), x)) for N in (500, 2000, 8000)]
        assert diffs[-1] < 1e-3
        assert diffs[-1] < diffs[0]


def test_single_term_at_one(min_es):
    t = series_target(min_es, [1.0])
    assert evaluate_target(t, 1.0) == pytest.approx(math.sqrt(2), rel=1e-14)


def test_get_target():
    assert get_target("min_series", 0.3, 100).truncation == 100
    assert get_target("sobolev_series").smoothness_s == 0.4
    with pytest.raises(KeyError):
        get_target("step")


class TestInterpolationNorm:
    def test_single_term_unit(self, min_es):
        s = 0.4
        t = series_target(min_es, [min_es.lam([1])[0] ** (s / 2)])
        res = interpolation_norm(t, s)
        assert res.value == pytest.approx(1.0, rel=1e-14)
        assert res.verdict == "converged"

    def test_min_series_below_s_converges(self):
        res = interpolation_norm(min_series_target(0.4), 0.3)
        assert res.verdict == "converged"

    @pytest.mark.parametrize("s_prime", [0.4, 0.45])
    def test_min_series_at_or_above_s_diverges(self, s_prime):
        res = interpolation_norm(min_series_target(0.4), s_prime)
        assert res.verdict == "diverging"

    def test_squared_norm_terms_are_harmonic_at_s(self):
        # c_k^2 lambda_{2k-1}^-s = k^-1.8 ((4k-3) pi / 2)^0.8 ~ k^-1
        t = min_series_target(0.4)
        a = interpolation_norm(t, 0.4, truncation=1000).value ** 2
        b = interpolation_norm(t, 0.4, truncation=2000).value ** 2
        k = np.arange(1001, 2001)
        expected = np.sum(k**-1.8 * ((4 * k - 3) * np.pi / 2) ** 0.8)
        assert b - a == pytest.approx(expected, rel=1e-10)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            interpolation_norm(min_series_target(), -0.1)


class TestSampleData:
    def test_noiseless(self):
        t = min_series_target()
        d = sample_data(t, 50, 0.0, seed=1)
        np.testing.assert_array_equal(d.y, evaluate_target(t, d.x))

    def test_deterministic(self):
        t = min_series_target()
        a, b = sample_data(t, 30, 1.0, 7), sample_data(t, 30, 1.0, 7)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
        c = sample_data(t, 30, 1.0, 8)
        assert not np.array_equal(a.x, c.x)

    def test_noise_variance(self):
        t = min_series_target(0.4, 200)
        d = sample_data(t, 100_000, 1.0, 3)
        v = np.var(d.y - evaluate_target(t, d.x), ddof=1)
        assert 0.98 <= v <= 1.02

    def test_uniform_design(self):
        d = sample_data(min_series_target(), 20_000, 0.0, 5)
        assert d.x.min() >= 0 and d.x.max() <= 1
        assert abs(d.x.mean() - 0.5) < 0.01


def _pairwise_min(words):
    return min(sum(a != b for a, b in zip(u, v)) for u, v in combinations(words, 2))


@pytest.mark.parametrize("m", [8, 16, 24, 32])
def test_pack_hypercube(m):
    words = pack_hypercube(m)
    assert words[0] == "0" * m
    assert len(set(words)) == len(words)
    assert all(len(w) == m and set(w) <= {"0", "1"} for w in words)
    assert len(words) >= 2 ** (m / 8)
    assert _pairwise_min(words) >= math.ceil(m / 8)


def test_pack_deterministic():
    assert pack_hypercube(24, seed=3) == pack_hypercube(24, seed=3)


def test_pack_budget_exhaustion():
    # m = 64 needs 257 words at distance 8; a handful of draws cannot supply them
    with pytest.raises(PackingError) as info:
        pack_hypercube(64, budget=5)
    assert info.value.achieved < info.value.needed


def test_pack_rejects_small_m():
    with pytest.raises(ValueError):
        pack_hypercube(4)


@settings(max_examples=10, deadline=None)
@given(st.integers(8, 40), st.integers(0, 1000))
def test_pack_property(m, seed):
    words = pack_hypercube(m, seed=seed)
    assert words[0] == "0" * m
    assert len(words) >= 2 ** (m / 8)
    assert _pairwise_min(words) >= math.ceil(m / 8)


class TestHardInstance:
    def test_single_codeword_edge(self, min_es):
        eps = 0.04
        fam = hard_instance(min_es, 1, s=0.4, gamma=0.0, epsilon=eps)
        assert fam.codewords == ("1",)
        c, idx = fam.functions[0].terms()
        assert idx.tolist() == [2]
        assert c[0] == pytest.approx(math.sqrt(eps))
        assert interpolation_norm(fam.functions[0], 0.0).value == pytest.approx(math.sqrt(eps), rel=1e-14)

    @pytest.mark.parametrize("gamma", [0.0, 0.2])
    def test_distance_identity(self, min_es, gamma):
        fam = hard_instance(min_es, 16, s=0.4, gamma=gamma, epsilon=0.01)
        assert all(np.isfinite(fam.norms_s))
        for (i, j), d2 in fam.pairwise.items():
            assert d2 == pytest.approx(0.01 * fam.hamming(i, j), abs=1e-10)
            assert d2 >= 0.01 * 16 / 8 - 1e-12

    def test_coefficient_space_oracle(self, min_es):
        fam = hard_instance(min_es, 16, s=0.4, gamma=0.0, epsilon=0.01)
        # direct oracle: sum over positions of eps * (omega_i - omega_j)^2
        for (i, j), d2 in fam.pairwise.items():
            wi = np.array(list(fam.codewords[i]), dtype=int)
            wj = np.array(list(fam.codewords[j]), dtype=int)
            assert abs(d2 - 0.01 * np.sum((wi - wj) ** 2)) <= 1e-10

    def test_default_epsilon(self, min_es):
        fam = hard_instance(min_es, 16, s=0.4, gamma=0.0)
        assert fam.epsilon == pytest.approx(0.01 * 16 ** (-0.4 * 2 - 1))

    def test_gamma_range(self, min_es):
        with pytest.raises(ValueError):
            hard_instance(min_es, 8, s=0.4, gamma=0.5)

    def test_export_roundtrip(self, min_es, tmp_path):
        fam = hard_instance(min_es, 8, s=0.4, gamma=0.0, epsilon=0.02)
        path = tmp_path / "family.txt"
        write_hard_instance(fam, path)
        parsed = read_hard_instance(path)
        assert parsed["header"]["m"] == 8
        assert parsed["header"]["epsilon"] == 0.02
        assert [w["codeword"] for w in parsed["codewords"]] == list(fam.codewords)
        for w, f in zip(parsed["codewords"], fam.functions):
            c, idx = f.terms()
            assert w["terms"] == [(int(j), float(v)) for j, v in zip(idx, c)]

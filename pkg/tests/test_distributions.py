import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pid_decomp.distributions import (
    FinitePmf,
    MvPoissonParams,
    build_a_matrix,
    compositions,
    enum_index_tuples,
    format_index_tuple,
    generator_caps,
    generator_set,
    multinomial_distribution,
    multinomial_pmf,
    mv_poisson_pmf,
    mv_poisson_pmf_bruteforce,
    parse_index_tuple,
    scalar_poisson_pmf,
    truncated_support,
)
from pid_decomp.errors import InvalidArgumentError

from strategies import mv_params


class TestIndexTuples:
    def test_pairs_of_three(self):
        assert enum_index_tuples(3, 2) == [(1, 2), (1, 3), (2, 3)]

    def test_trivial_cases(self):
        assert enum_index_tuples(1, 1) == [(1,)]
        assert enum_index_tuples(4, 4) == [(1, 2, 3, 4)]

    def test_round_trip(self):
        assert parse_index_tuple(format_index_tuple((1, 3))) == (1, 3)
        assert parse_index_tuple(" 2 ") == (2,)

    @pytest.mark.parametrize("bad", ["", "0", "2,1", "1,1", "a", "1,-2"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(InvalidArgumentError):
            parse_index_tuple(bad)

    @given(st.integers(1, 6), st.data())
    def test_strictly_increasing_and_in_range(self, d, data):
        j = data.draw(st.integers(1, d))
        tuples = enum_index_tuples(d, j)
        assert len(tuples) == math.comb(d, j)
        assert tuples == sorted(tuples)
        for t in tuples:
            assert all(a < b for a, b in zip(t, t[1:]))
            assert 1 <= t[0] and t[-1] <= d


class TestAMatrix:
    def test_bivariate(self):
        a = build_a_matrix(2, 2)
        assert list(a.column_index) == [(1,), (2,), (1, 2)]
        np.testing.assert_array_equal(a.entries, [[1, 0, 1], [0, 1, 1]])

    def test_independent_is_identity(self):
        np.testing.assert_array_equal(build_a_matrix(3, 1).entries, np.eye(3, dtype=int))

    def test_three_by_six(self):
        a = build_a_matrix(3, 2)
        assert a.entries.shape == (3, 6)
        np.testing.assert_array_equal(a.entries[:, a.column_index.index((1, 3))], [1, 0, 1])

    @given(st.integers(1, 5), st.data())
    def test_columns_match_tuples(self, d, data):
        dp = data.draw(st.integers(1, d))
        a = build_a_matrix(d, dp)
        np.testing.assert_array_equal(a.entries[:, :d], np.eye(d, dtype=int))
        lengths = [len(t) for t in a.column_index]
        assert lengths == sorted(lengths)
        for col, t in enumerate(a.column_index):
            expected = np.zeros(d, dtype=int)
            expected[[i - 1 for i in t]] = 1
            np.testing.assert_array_equal(a.entries[:, col], expected)

    def test_entries_read_only(self):
        with pytest.raises(ValueError):
            build_a_matrix(2, 2).entries[0, 0] = 5

    def test_bad_dims(self):
        with pytest.raises(InvalidArgumentError):
            build_a_matrix(2, 3)


class TestParams:
    def test_missing_rate(self):
        with pytest.raises(InvalidArgumentError):
            MvPoissonParams(2, 2, {(1,): 1.0, (2,): 1.0})

    def test_negative_rate(self):
        with pytest.raises(InvalidArgumentError):
            MvPoissonParams.from_rates(2, 1, [1.0, -0.5])

    def test_rates_canonical_order(self):
        p = MvPoissonParams(2, 2, {(1, 2): 3.0, (2,): 2.0, (1,): 1.0})
        np.testing.assert_array_equal(p.rates, [1.0, 2.0, 3.0])


class TestScalarPmfs:
    def test_poisson_values(self, expected):
        assert scalar_poisson_pmf(1.0, 0) == pytest.approx(math.exp(-1), rel=1e-15)
        assert scalar_poisson_pmf(0.0, 0) == 1.0
        assert scalar_poisson_pmf(0.0, 2) == 0.0
        assert scalar_poisson_pmf(2.0, 3) == pytest.approx(expected["scalar_poisson_2_3"], rel=1e-14)

    def test_multinomial_values(self):
        assert multinomial_pmf(2, [0.5, 0.5], [1, 1]) == pytest.approx(0.5)
        assert multinomial_pmf(3, [1.0, 0.0], [3, 0]) == 1.0
        assert multinomial_pmf(2, [0.2, 0.8], [0, 2]) == pytest.approx(0.64, rel=1e-14)
        assert multinomial_pmf(2, [0.2, 0.8], [1, 2]) == 0.0

    def test_multinomial_bad_probs(self):
        with pytest.raises(InvalidArgumentError):
            multinomial_pmf(2, [0.5, 0.6], [1, 1])

    @pytest.mark.parametrize("n", range(9))
    def test_multinomial_sums_to_one(self, n):
        p = [0.1, 0.2, 0.3, 0.4]
        total = sum(multinomial_pmf(n, p, k) for k in compositions(n, 4))
        assert total == pytest.approx(1.0, abs=1e-13)

    def test_compositions_count(self):
        assert len(compositions(3, 2)) == 4
        assert len(compositions(5, 3)) == math.comb(7, 2)

    def test_distribution_matches_scipy(self):
        law = multinomial_distribution(4, [0.2, 0.3, 0.5])
        for point, p in law.as_dict().items():
            assert p == pytest.approx(stats.multinomial.pmf(point, 4, [0.2, 0.3, 0.5]), rel=1e-12)


class TestMvPoissonPmf:
    bivariate = MvPoissonParams.from_rates(2, 2, [1.0, 1.0, 1.0])

    def test_bivariate_points(self, expected):
        assert mv_poisson_pmf(self.bivariate, (0, 0)) == pytest.approx(expected["bivariate_pmf_00"], rel=1e-14)
        assert mv_poisson_pmf(self.bivariate, (1, 1)) == pytest.approx(expected["bivariate_pmf_11"], rel=1e-14)
        assert mv_poisson_pmf_bruteforce(self.bivariate, (1, 1)) == pytest.approx(expected["bivariate_pmf_11"], rel=1e-14)

    def test_generator_set_bivariate(self):
        got = {tuple(g) for g in generator_set(self.bivariate, (1, 1))}
        assert got == {(1, 1, 0), (0, 0, 1)}

    def test_independent_is_product(self):
        p = MvPoissonParams.from_rates(3, 1, [1.0, 2.0, 3.0])
        want = stats.poisson.pmf(1, 1.0) * stats.poisson.pmf(0, 2.0) * stats.poisson.pmf(2, 3.0)
        assert mv_poisson_pmf(p, (1, 0, 2)) == pytest.approx(want, rel=1e-13)
        assert mv_poisson_pmf_bruteforce(p, (1, 0, 2)) == pytest.approx(want, rel=1e-13)

    def test_zero_base_rate_falls_back(self):
        p = MvPoissonParams.from_rates(2, 2, [0.0, 1.0, 0.5])
        # K1 = K1g + K12g with K1g = 0, so K1 = K12g <= K2.
        assert mv_poisson_pmf(p, (2, 1)) == 0.0
        assert mv_poisson_pmf(p, (1, 1)) == pytest.approx(mv_poisson_pmf_bruteforce(p, (1, 1)), rel=1e-14)

    def test_invalid_point(self):
        assert mv_poisson_pmf(self.bivariate, (1, -1)) == 0.0
        with pytest.raises(InvalidArgumentError):
            mv_poisson_pmf(self.bivariate, (1, 1, 1))

    @settings(max_examples=60, deadline=None)
    @given(mv_params(max_d=3), st.data())
    def test_closed_form_matches_enumeration(self, params, data):
        k = data.draw(st.lists(st.integers(0, 4), min_size=params.d, max_size=params.d))
        a, b = mv_poisson_pmf(params, k), mv_poisson_pmf_bruteforce(params, k)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-300)

    def test_bivariate_covariance(self):
        p = MvPoissonParams.from_rates(2, 2, [0.7, 1.1, 0.4])
        pmf = truncated_support(p, 1e-12)
        k = pmf.support.astype(float)
        mean = pmf.probs @ k
        cov = pmf.probs @ (k[:, 0] * k[:, 1]) - mean[0] * mean[1]
        assert cov == pytest.approx(0.4, abs=1e-9)


class TestTruncation:
    def test_all_zero_rates(self):
        pmf = truncated_support(MvPoissonParams.from_rates(2, 2, [0, 0, 0]), 1e-10)
        np.testing.assert_array_equal(pmf.support, [[0, 0]])
        assert pmf.tail_mass == 0.0

    def test_scalar_cap(self, expected):
        p = MvPoissonParams.from_rates(1, 1, [1.0])
        pmf = truncated_support(p, 1e-10)
        assert pmf.support.max() == expected["poisson1_kmax_1e-10"]
        assert pmf.mass >= 1 - 1e-10

    def test_caps_split_epsilon(self):
        p = MvPoissonParams.from_rates(2, 2, [1.0, 2.0, 0.5])
        caps = generator_caps(p, 1e-9)
        for lam, cap in zip(p.rates, caps):
            assert stats.poisson.sf(cap, lam) <= 1e-9 / 3

    @pytest.mark.parametrize("eps", [0.0, 1.0, -1e-3])
    def test_bad_epsilon(self, eps):
        with pytest.raises(InvalidArgumentError):
            truncated_support(MvPoissonParams.from_rates(1, 1, [1.0]), eps)

    @settings(max_examples=25, deadline=None)
    @given(mv_params(max_d=3, max_dp=2, max_rate=2.0, allow_zero=True), st.sampled_from([1e-6, 1e-10]), st.booleans())
    def test_normalization(self, params, eps, prune):
        pmf = truncated_support(params, eps, prune=prune)
        assert pmf.mass + pmf.tail_mass == pytest.approx(1.0, abs=1e-12)
        assert pmf.mass >= 1 - eps

    def test_probs_agree_with_pmf(self):
        p = MvPoissonParams.from_rates(2, 2, [0.8, 0.6, 0.3])
        pmf = truncated_support(p, 1e-8)
        for point, prob in list(pmf.as_dict().items())[:25]:
            assert prob == pytest.approx(mv_poisson_pmf(p, point), rel=1e-11)


class TestFinitePmf:
    def test_rejects_bad_mass(self):
        with pytest.raises(InvalidArgumentError):
            FinitePmf(np.array([[0], [1]]), np.array([0.5, 0.6]))

    def test_rejects_duplicates(self):
        with pytest.raises(InvalidArgumentError):
            FinitePmf(np.array([[0], [0]]), np.array([0.5, 0.5]))

    def test_lookup(self):
        pmf = FinitePmf(np.array([[0, 1], [1, 0]]), np.array([0.25, 0.75]))
        assert pmf.prob((1, 0)) == 0.75
        assert pmf.prob((2, 2)) == 0.0

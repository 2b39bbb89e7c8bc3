"""Poisson reference laws, TV metric, and the two analytic brackets.

scipy.stats.poisson is the independent oracle for pmf values; the bracket
formulas are pinned to hand-computed constants.
"""

import math

import numpy as np
import pytest
from scipy import stats

from poissonlab.errors import InsufficientDataError
from poissonlab.poisson_stats import (EmpiricalDistribution, chen_stein_bracket,
                                      fold_histogram, histogram_j_max,
                                      kallenberg_check, poisson_avg,
                                      poisson_param_shift, poisson_pmf,
                                      poisson_pmf_vector, poisson_reference,
                                      sample_poisson_counts, tv_distance)


class TestPmf:
    def test_matches_scipy(self):
        for lam in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0):
            for j in range(30):
                assert poisson_pmf(lam, j) == pytest.approx(
                    stats.poisson.pmf(j, lam), rel=1e-12, abs=1e-300)

    def test_vector_consistent_with_scalar(self):
        v = poisson_pmf_vector(2.5, 40)
        assert v.shape == (41,)
        for j in (0, 1, 17, 40):
            assert v[j] == pytest.approx(poisson_pmf(2.5, j), rel=1e-14)

    def test_mass_sums_to_one(self):
        for lam in (0.5, 1.0, 2.0, 5.0, 10.0):
            total = sum(poisson_pmf(lam, j) for j in range(201))
            assert abs(total - 1.0) < 1e-12

    def test_zero_rate_is_point_mass(self):
        assert poisson_pmf(0.0, 0) == 1.0
        assert poisson_pmf(0.0, 3) == 0.0

    def test_avg_of_indicator_is_pmf(self):
        for j in (0, 4, 30):
            got = poisson_avg(1.7, lambda n: 1.0 if n == j else 0.0)
            assert got == pytest.approx(poisson_pmf(1.7, j), abs=1e-12)

    def test_avg_of_identity_is_lambda(self):
        assert poisson_avg(3.2, lambda n: float(n)) == pytest.approx(3.2, abs=1e-9)


class TestTvDistance:
    def test_symmetry_and_identity(self):
        p = {0: 0.5, 1: 0.3, 2: 0.2}
        q = {0: 0.4, 1: 0.4, 2: 0.2}
        assert tv_distance(p, q) == tv_distance(q, p)
        assert tv_distance(p, p) == 0.0
        assert tv_distance(p, q) == pytest.approx(0.1)

    def test_disjoint_support_handled(self):
        assert tv_distance({0: 1.0}, {5: 1.0}) == pytest.approx(1.0)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            raw = rng.random((3, 6))
            p, q, r = (dict(enumerate(row / row.sum())) for row in raw)
            assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            tv_distance({0: 0.5, 1: 0.2}, {0: 0.5, 1: 0.5})

    def test_rejects_negative_mass(self):
        with pytest.raises(ValueError):
            tv_distance({0: 1.5, 1: -0.5}, {0: 1.0})


class TestParamShift:
    def test_zero_when_equal(self):
        assert poisson_param_shift(1.3, 1.3, lambda n: float(n % 2)) == 0.0

    def test_indicator_example(self):
        got = poisson_param_shift(1.0, 1.1, lambda n: 1.0 if n == 0 else 0.0)
        want = abs(math.exp(-1.0) - math.exp(-1.1))
        assert got == pytest.approx(want, abs=1e-9)
        assert got == pytest.approx(0.03501, abs=1e-4)
        assert got <= 0.2

    def test_constant_h_shifts_nothing(self):
        assert poisson_param_shift(0.0, 2.0, lambda n: 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_bounded_by_twice_rate_gap(self):
        # |E_lam h - E_t h| <= 2 |lam - t| for 0 <= h <= 1
        rng = np.random.default_rng(7)
        table = rng.random(64)
        h = lambda n: float(table[min(n, 63)])
        for _ in range(100):
            lam = rng.uniform(0.0, 6.0)
            t = rng.uniform(0.0, 6.0)
            assert poisson_param_shift(lam, t, h) <= 2.0 * abs(lam - t) + 1e-9


class TestChenSteinBracket:
    def test_pinned_values(self):
        assert chen_stein_bracket(1.0, 1.0, 3) == pytest.approx(1.4648, abs=2e-4)
        assert chen_stein_bracket(4.0, 4.0, 10**6) == pytest.approx(1.727e-4, rel=2e-3)
        assert chen_stein_bracket(1.0, 1.125, 4) == pytest.approx(1.5113, abs=2e-4)

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            chen_stein_bracket(1.0, 1.0, 2)

    def test_decreases_in_n(self):
        vals = [chen_stein_bracket(2.0, 2.0, n) for n in (10, 100, 10**4, 10**6)]
        for a, b in zip(vals, vals[1:]):
            assert b < a


class TestHistogramTools:
    def test_j_max_grows_with_rate(self):
        assert histogram_j_max(0.5) < histogram_j_max(5.0) < histogram_j_max(50.0)

    def test_reference_tail_in_overflow_bucket(self):
        jm = 6
        ref = poisson_reference(2.0, jm)
        assert set(ref) == set(range(jm + 2))
        assert math.fsum(ref.values()) == pytest.approx(1.0, abs=1e-12)
        assert ref[jm + 1] == pytest.approx(
            1.0 - stats.poisson.cdf(jm, 2.0), rel=1e-9, abs=1e-12)

    def test_fold_histogram(self):
        folded = fold_histogram([0, 1, 1, 2, 5, 9], 3)
        assert folded == {0: 1, 1: 2, 2: 1, 4: 2}
        assert sum(folded.values()) == 6
        with pytest.raises(ValueError):
            fold_histogram([-1], 3)

    def test_empirical_distribution(self):
        emp = EmpiricalDistribution.from_counts(np.array([0, 0, 1, 3]))
        assert emp.n == 4
        probs = emp.probabilities()
        assert math.fsum(probs.values()) == pytest.approx(1.0)
        assert probs[0] == pytest.approx(0.5)
        assert emp.mean == pytest.approx(1.0)
        assert EmpiricalDistribution.from_counts([]).n == 0


class TestSampling:
    def test_deterministic_per_seed(self):
        a = sample_poisson_counts(1.5, 1000, 33)
        b = sample_poisson_counts(1.5, 1000, 33)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_poisson_counts(1.5, 1000, 34))

    def test_moments(self):
        x = sample_poisson_counts(2.0, 200000, 8)
        assert x.min() >= 0
        assert x.mean() == pytest.approx(2.0, abs=0.03)
        assert x.var() == pytest.approx(2.0, abs=0.05)

    def test_law_close_in_tv(self):
        x = sample_poisson_counts(1.0, 100000, 12)
        jm = histogram_j_max(1.0)
        folded = fold_histogram(x, jm)
        emp = {j: f / len(x) for j, f in folded.items()}
        assert tv_distance(emp, poisson_reference(1.0, jm),
                           check_normalization=False) < 0.01


class TestKallenberg:
    def test_poisson_samples_pass(self):
        sets = [0.5, 1.0]
        counts = [sample_poisson_counts(s, 5000, 100 + i)
                  for i, s in enumerate(sets)]
        rows = kallenberg_check(counts, sets, [0.0, 0.0])
        assert len(rows) == 2
        for row in rows:
            assert row["condition1"] == "PASS"
            assert row["condition2"] == "PASS"

    def test_degenerate_zero_counts_fail_void(self):
        rows = kallenberg_check([np.zeros(400, dtype=np.int64)], [1.0], [0.0])
        row = rows[0]
        assert row["condition2"] == "FAIL"
        # empirical void prob 1 against Poisson(1) void prob 1/e
        assert row["void_empirical"] == pytest.approx(1.0)
        assert row["void_target"] == pytest.approx(math.exp(-1.0))

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            kallenberg_check([np.zeros(50, dtype=np.int64)], [1.0], [0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            kallenberg_check([np.zeros(400, dtype=np.int64)], [1.0, 2.0])

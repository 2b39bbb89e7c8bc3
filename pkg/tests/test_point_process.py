"""Interval unions, index sets J = {i : i*mu in S}, occurrence counting.

The sandwich |#J - |S|/mu| <= m (number of intervals) is the load-bearing
combinatorial fact; it gets a large randomized exact check here.
"""

import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissonlab.errors import ResourceError
from poissonlab.point_process import (IntervalUnion, count_occurrences,
                                      count_word_occurrences, j_set,
                                      required_prefix_length, unit_interval)


class TestIntervalUnion:
    def test_unit_interval(self):
        S = unit_interval()
        assert S.m == 1
        assert S.total_length == 1
        assert S.sup == 1
        assert not S.contains(Fraction(0))
        assert S.contains(Fraction(1))
        assert S.contains(Fraction(1, 2))

    def test_from_spec_dicts_and_tuples(self):
        S = IntervalUnion.from_spec([
            {"lo": "1/2", "hi": "1", "lo_closed": True, "hi_closed": False},
            ("2", "5/2", False, True),
        ])
        assert S.m == 2
        assert S.total_length == Fraction(1)
        assert S.sup == Fraction(5, 2)
        assert S.contains(Fraction(1, 2))
        assert not S.contains(Fraction(1))
        assert not S.contains(Fraction(2))
        assert S.contains(Fraction(5, 2))

    def test_label_and_spec_roundtrip(self):
        S = IntervalUnion.from_spec([("0", "1", False, True)])
        assert S.label() == "(0, 1]"
        S2 = IntervalUnion.from_spec(S.to_spec())
        assert S2.intervals == S.intervals

    def test_empty_union(self):
        S = IntervalUnion.from_spec([])
        assert S.m == 0
        assert S.total_length == 0
        assert S.label() == "{}"

    def test_validation_errors_carry_index(self):
        with pytest.raises(ValueError, match=r"interval \[0\]"):
            IntervalUnion.from_spec([("1", "0", False, True)])
        with pytest.raises(ValueError, match=r"interval \[1\]"):
            IntervalUnion.from_spec([("0", "1", False, True), ("-1", "0", False, True)])

    def test_overlapping_intervals_merge_canonically(self):
        S = IntervalUnion.from_spec([("0", "1", False, True),
                                     ("1/2", "2", False, True)])
        assert S.m == 1
        assert S.total_length == 2
        assert S.sup == 2

    def test_touching_intervals(self):
        # covered junction point: merged
        S = IntervalUnion.from_spec([("0", "1", False, True),
                                     ("1", "2", False, True)])
        assert S.m == 1
        assert S.total_length == 2
        # uncovered junction point: stays a genuine union
        S2 = IntervalUnion.from_spec([("0", "1", False, False),
                                      ("1", "2", False, True)])
        assert S2.m == 2
        assert not S2.contains(Fraction(1))


class TestJSet:
    def test_worked_example(self):
        # mu = 1/2, S = [0.5, 1) u (2, 2.5] -> J = {1, 5}
        S = IntervalUnion.from_spec([
            {"lo": "1/2", "hi": "1", "lo_closed": True, "hi_closed": False},
            ("2", "5/2", False, True),
        ])
        J = j_set(Fraction(1, 2), S)
        assert list(J.indices()) == [1, 5]
        assert J.count == 2

    def test_unit_interval_fair_word(self):
        J = j_set(Fraction(1, 4), unit_interval())
        assert J.ranges == ((1, 4),)
        assert J.count == 4
        assert required_prefix_length(2, J) == 5

    def test_empty_when_mu_exceeds_sup(self):
        J = j_set(Fraction(3, 4), IntervalUnion.from_spec([("0", "1/2", False, True)]))
        assert J.is_empty()
        assert required_prefix_length(3, J) == 0

    def test_open_closed_boundaries_exact(self):
        S = IntervalUnion.from_spec([("1/4", "1", True, False)])  # [1/4, 1)
        J = j_set(Fraction(1, 4), S)
        # i/4 in [1/4, 1): i in {1, 2, 3}; i = 4 gives 1, excluded
        assert list(J.indices()) == [1, 2, 3]

    def test_float_path_matches_exact_on_dyadics(self):
        S = unit_interval()
        for k in range(1, 30):
            mu = Fraction(1, 2**k)
            exact = j_set(mu, S)
            via_float = j_set(float(mu), S, lambda dps, m=mu: m)
            assert exact.ranges == via_float.ranges

    def test_float_guard_band_consults_high_precision(self):
        # mu float is slightly off 1/3; boundary i = 3 must be decided exactly
        mu = Fraction(1, 3)
        J = j_set(float(mu), unit_interval(), lambda dps: mu)
        assert J.ranges == ((1, 3),)

    def test_sandwich_randomized_exact(self):
        rng = random.Random(987)
        for _ in range(2000):
            num = rng.randint(1, 1000)
            den = rng.randint(num, 10**6)
            mu = Fraction(num, den)
            ivs = []
            lo = Fraction(0)
            m = rng.randint(1, 3)
            for _ in range(m):
                lo = lo + Fraction(rng.randint(0, 50), rng.randint(1, 40))
                hi = lo + Fraction(rng.randint(1, 60), rng.randint(1, 7))
                if hi / mu > 10**7:
                    break
                ivs.append((str(lo), str(hi), bool(rng.getrandbits(1)),
                            bool(rng.getrandbits(1))))
                lo = hi
            if not ivs:
                continue
            S = IntervalUnion.from_spec(ivs)
            J = j_set(mu, S)
            assert abs(J.count - S.total_length / mu) <= S.m


class TestCounting:
    def test_count_word_occurrences_basic(self):
        x = np.array([0, 1, 0, 1, 1, 0, 1], dtype=np.int64)
        assert count_word_occurrences(x, (0, 1), [(1, 6)]) == 3
        assert count_word_occurrences(x, (0, 1), [(2, 3)]) == 1
        assert count_word_occurrences(x, (1, 1), [(1, 6)]) == 1
        assert count_word_occurrences(x, (0, 1), [(1, 2), (5, 6)]) == 2

    def test_count_occurrences_flags_truncation(self):
        x = np.array([0, 1, 0, 1], dtype=np.int64)
        J = j_set(Fraction(1, 4), unit_interval())  # needs prefix length 5
        sample = count_occurrences(x, (0, 1), J)
        assert sample.truncated
        assert sample.count == 2  # starts 1 and 3 fit
        full = count_occurrences(np.array([0, 1, 0, 1, 0], dtype=np.int64), (0, 1), J)
        assert not full.truncated
        assert full.count == 2

    def test_materialization_guard(self):
        J = j_set(Fraction(1, 10**8), unit_interval())
        with pytest.raises(ResourceError):
            J.indices()


mu_st = st.fractions(min_value=Fraction(1, 10**6), max_value=1)
len_st = st.fractions(min_value=Fraction(1, 100), max_value=10)


@given(mu_st, len_st, st.booleans(), st.booleans())
@settings(max_examples=200, deadline=None)
def test_sandwich_property_single_interval(mu, length, lo_closed, hi_closed):
    if length / mu > 10**7:
        return
    S = IntervalUnion.from_spec([(str(Fraction(0)), str(length), lo_closed, hi_closed)])
    J = j_set(mu, S)
    assert abs(J.count - S.total_length / mu) <= S.m


@given(mu_st)
@settings(max_examples=100, deadline=None)
def test_j_set_indices_exactly_characterized(mu):
    S = unit_interval()
    J = j_set(mu, S)
    if J.count > 10**4:
        return
    members = set(int(i) for i in J.indices())
    top = J.max_index() + 2
    for i in range(1, min(top, 10**4) + 1):
        assert (i in members) == S.contains(i * mu)

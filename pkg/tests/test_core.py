"""Core numeric primitives against independent references."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weavecache.core import (
    DISTRIBUTION_SUM_TOL,
    Distribution,
    cosine,
    dot,
    entropy,
    exact_mean,
    mean_pool,
    softmax,
)
from weavecache.errors import (
    DimensionError,
    EmptyInputError,
    InvalidDistributionError,
    InvalidParameterError,
    ZeroNormError,
)

from conftest import ref_dot, ref_entropy, ref_mean_fraction

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


class TestDot:
    def test_known_value(self):
        assert dot([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]) == 32.0

    def test_orthogonal(self):
        assert dot([1.0, 0.0], [0.0, 1.0]) == 0.0

    @given(st.lists(finite_floats, min_size=1, max_size=16))
    def test_matches_reference(self, values):
        other = [v + 0.5 for v in values]
        assert dot(values, other) == ref_dot(values, other)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            dot([1.0], [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(DimensionError):
            dot([], [])


class TestCosine:
    def test_parallel(self):
        assert cosine([2.0, 0.0], [5.0, 0.0]) == pytest.approx(1.0, abs=1e-12)

    def test_antiparallel(self):
        assert cosine([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(-1.0, abs=1e-12)

    def test_scale_invariance(self, rng):
        for _ in range(50):
            a = rng.standard_normal(8)
            b = rng.standard_normal(8)
            s = float(rng.uniform(0.1, 100.0))
            assert cosine(a, s * b) == pytest.approx(cosine(a, b), abs=1e-9)

    def test_zero_norm(self):
        with pytest.raises(ZeroNormError):
            cosine([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ZeroNormError):
            cosine([1.0, 0.0], [0.0, 0.0])


class TestExactMean:
    def test_copies_recover_value_exactly(self):
        # The motivating case: naive summation drifts, this must not.
        for v in (0.1, 1 / 3, 2.875, -7.3e-9, 1e155):
            for k in (1, 2, 3, 7, 64):
                assert exact_mean([v] * k) == v

    def test_known_halves(self):
        assert exact_mean([0.5, 1.5]) == 1.0

    @given(st.lists(finite_floats, min_size=1, max_size=32))
    @settings(max_examples=300)
    def test_matches_fraction_oracle(self, values):
        assert exact_mean(values) == ref_mean_fraction(values)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            exact_mean([])

    def test_mixed_magnitudes(self):
        vals = [1e300, -1e300, 3.0]
        assert exact_mean(vals) == ref_mean_fraction(vals)


class TestMeanPool:
    def test_single_vector_identity(self):
        assert mean_pool([[0.1, 0.2, 0.3]]) == (0.1, 0.2, 0.3)

    def test_copies_identity(self):
        assert mean_pool([[0.1, 0.7]] * 5) == (0.1, 0.7)

    def test_columnwise(self):
        got = mean_pool([[1.0, 10.0], [3.0, 30.0]])
        assert got == (2.0, 20.0)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            mean_pool([])

    def test_ragged(self):
        with pytest.raises(DimensionError):
            mean_pool([[1.0, 2.0], [1.0]])

    def test_zero_dim(self):
        with pytest.raises(DimensionError):
            mean_pool([[], []])


class TestDistribution:
    def test_valid(self):
        d = Distribution([0.25, 0.75])
        assert d.probs == (0.25, 0.75)
        assert len(d) == 2

    def test_argmax_tie_smallest_index(self):
        assert Distribution([0.4, 0.4, 0.2]).argmax() == 0

    def test_argmax_plain(self):
        assert Distribution([0.1, 0.2, 0.7]).argmax() == 2

    def test_empty(self):
        with pytest.raises(InvalidDistributionError):
            Distribution([])

    def test_negative(self):
        with pytest.raises(InvalidDistributionError):
            Distribution([1.1, -0.1])

    def test_sum_off(self):
        with pytest.raises(InvalidDistributionError):
            Distribution([0.5, 0.5 + 1e-6])

    def test_sum_within_tol(self):
        Distribution([0.5, 0.5 + 0.5 * DISTRIBUTION_SUM_TOL])

    def test_non_finite(self):
        with pytest.raises(InvalidDistributionError):
            Distribution([math.nan, 1.0])


class TestEntropy:
    @pytest.mark.parametrize("n", [2, 4, 16, 256])
    def test_uniform_is_ln_n(self, n):
        h = entropy([1.0 / n] * n)
        assert abs(h - math.log(n)) <= 1e-9

    def test_point_mass_zero(self):
        assert entropy([1.0, 0.0, 0.0]) == 0.0

    def test_known_two_point(self):
        h = entropy([0.25, 0.75])
        expect = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
        assert h == pytest.approx(expect, abs=1e-15)

    @given(st.lists(st.floats(min_value=1e-9, max_value=1.0), min_size=1, max_size=16))
    @settings(max_examples=200)
    def test_bounds_and_reference(self, weights):
        total = sum(weights)
        probs = [w / total for w in weights]
        d = Distribution(probs)
        h = entropy(d)
        assert -1e-12 <= h <= math.log(len(probs)) + 1e-9
        assert h == pytest.approx(ref_entropy(d.probs), abs=1e-12)

    def test_rejects_invalid(self):
        with pytest.raises(InvalidDistributionError):
            entropy([0.9, 0.3])


class TestSoftmax:
    def test_uniform_from_equal_scores(self):
        d = softmax([3.0, 3.0, 3.0])
        assert d.probs == pytest.approx([1 / 3] * 3, abs=1e-15)

    def test_shift_invariance(self, rng):
        for _ in range(30):
            scores = rng.standard_normal(6)
            shift = float(rng.uniform(-100, 100))
            a = softmax(list(scores), 0.7)
            b = softmax(list(scores + shift), 0.7)
            assert a.probs == pytest.approx(b.probs, abs=1e-12)

    def test_low_tau_sharpens(self):
        scores = [1.0, 0.5, 0.0]
        sharp = softmax(scores, 0.05)
        soft = softmax(scores, 5.0)
        assert sharp.probs[0] > soft.probs[0]
        assert sharp.argmax() == soft.argmax() == 0

    def test_large_scores_stable(self):
        d = softmax([1e4, 0.0], 1.0)
        assert d.probs[0] == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            softmax([])

    @pytest.mark.parametrize("tau", [0.0, -1.0, math.nan, math.inf])
    def test_bad_tau(self, tau):
        with pytest.raises(InvalidParameterError):
            softmax([1.0], tau)

    @given(
        st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=12),
        st.floats(min_value=0.01, max_value=10.0),
    )
    @settings(max_examples=200)
    def test_valid_distribution_and_order(self, scores, tau):
        d = softmax(scores, tau)
        assert abs(sum(d.probs) - 1.0) <= DISTRIBUTION_SUM_TOL
        # Monotone up to float resolution: score gaps smaller than exp
        # can represent collapse to exact ties, so the argmax is only
        # guaranteed to sit within epsilon of the best raw score.
        assert max(scores) - scores[d.argmax()] <= 1e-9
        order = sorted(range(len(scores)), key=lambda i: scores[i])
        for lo, hi in zip(order, order[1:]):
            assert d.probs[lo] <= d.probs[hi] + 1e-12


class TestExactMeanIsExactlyRounded:
    """The one-rounding claim, spelled out against exact rationals."""

    @given(st.lists(finite_floats, min_size=1, max_size=8))
    @settings(max_examples=200)
    def test_single_rounding(self, values):
        exact = Fraction(0)
        for v in values:
            exact += Fraction(float(v))
        exact /= len(values)
        got = exact_mean(values)
        # Correct rounding: the result is the float nearest the rational.
        lower = math.nextafter(got, -math.inf)
        upper = math.nextafter(got, math.inf)
        assert abs(Fraction(got) - exact) <= abs(Fraction(lower) - exact)
        assert abs(Fraction(got) - exact) <= abs(Fraction(upper) - exact)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardylab.scalars import (
    AlphaBranch,
    DegenerateDimensionError,
    OutOfRangeError,
    PExponent,
    alpha_of_lambda,
    barrier_A_constant,
    beta_residual,
    beta_root_at_infinity,
    exterior_alpha_pair,
    exterior_threshold,
    hardy_one_d_constant,
    hardy_point_constant,
    lambda_of_alpha,
)

P_VALUES = [1.5, 2.0, 3.0, 4.0]


class TestConstants:
    @pytest.mark.parametrize("p, expected", [(2.0, 0.25), (4.0, 0.31640625)])
    def test_one_d(self, p, expected):
        assert hardy_one_d_constant(PExponent(p)) == pytest.approx(expected, abs=1e-15)

    def test_one_d_near_one(self):
        assert hardy_one_d_constant(PExponent(1.0001)) < 1e-3

    @pytest.mark.parametrize(
        "p, n, expected", [(2.0, 2, 0.0), (2.0, 4, 1.0), (3.0, 2, 1.0 / 27.0)]
    )
    def test_point(self, p, n, expected):
        assert hardy_point_constant(PExponent(p, n)) == pytest.approx(expected, abs=1e-15)

    def test_point_exact_zero(self):
        assert hardy_point_constant(PExponent(3.0, 3)) == 0.0

    @pytest.mark.parametrize("p, n, expected", [(2.0, 3, 0.25), (2.0, 2, 0.0), (2.0, 5, 0.25)])
    def test_threshold(self, p, n, expected):
        assert exterior_threshold(PExponent(p, n)) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
    def test_threshold_degenerate(self, p):
        assert exterior_threshold(PExponent(p, int(p))) == 0.0

    @pytest.mark.parametrize("p, n", [(1.0, 2), (0.5, 2), (2.0, 0), (2.0, 1.5)])
    def test_bad_exponent(self, p, n):
        with pytest.raises(ValueError):
            PExponent(p, n)


class TestLambdaAlpha:
    @pytest.mark.parametrize("p", P_VALUES)
    def test_zeros(self, p):
        pe = PExponent(p)
        assert lambda_of_alpha(pe, 0.0) == 0.0
        assert lambda_of_alpha(pe, 1.0) == 0.0

    def test_peak_p2(self):
        assert lambda_of_alpha(PExponent(2.0), 0.5) == 0.25

    @pytest.mark.parametrize("p", P_VALUES)
    def test_monotone_branches(self, p):
        pe = PExponent(p)
        a_star = (p - 1) / p
        lo = np.linspace(0.0, a_star, 1000)
        hi = np.linspace(a_star, 1.0, 1000)
        vlo = np.array([lambda_of_alpha(pe, a) for a in lo])
        vhi = np.array([lambda_of_alpha(pe, a) for a in hi])
        assert np.all(np.diff(vlo) > 0)
        assert np.all(np.diff(vhi) < 0)

    @pytest.mark.parametrize("p", P_VALUES)
    def test_max_is_cp(self, p):
        pe = PExponent(p)
        grid = np.linspace(0.0, 1.0, 100_001)
        vals = np.array([lambda_of_alpha(pe, a) for a in grid])
        assert abs(max(vals.max(), lambda_of_alpha(pe, pe.critical_alpha)) - hardy_one_d_constant(pe)) <= 1e-12
        assert abs(lambda_of_alpha(pe, pe.critical_alpha) - hardy_one_d_constant(pe)) <= 1e-12

    @pytest.mark.parametrize("alpha", [-0.1, 1.1])
    def test_domain(self, alpha):
        with pytest.raises(OutOfRangeError):
            lambda_of_alpha(PExponent(2.0), alpha)


class TestAlphaOfLambda:
    @pytest.mark.parametrize(
        "lam, branch, expected",
        [
            (0.25, AlphaBranch.UPPER, 0.5),
            (0.25, AlphaBranch.LOWER, 0.5),
            (0.0, AlphaBranch.UPPER, 1.0),
            (0.0, AlphaBranch.LOWER, 0.0),
            (0.16, AlphaBranch.UPPER, 0.8),
            (0.16, AlphaBranch.LOWER, 0.2),
        ],
    )
    def test_examples_p2(self, lam, branch, expected):
        assert alpha_of_lambda(PExponent(2.0), lam, branch) == pytest.approx(expected, abs=1e-10)

    def test_branch_strings(self):
        assert alpha_of_lambda(PExponent(2.0), 0.16, "upper") == pytest.approx(0.8, abs=1e-10)

    @pytest.mark.parametrize("p", P_VALUES)
    def test_above_cp(self, p):
        pe = PExponent(p)
        with pytest.raises(OutOfRangeError):
            alpha_of_lambda(pe, hardy_one_d_constant(pe) + 1e-9, AlphaBranch.UPPER)

    def test_tolerance_at_cp(self):
        pe = PExponent(3.0)
        a = alpha_of_lambda(pe, hardy_one_d_constant(pe) + 5e-13, AlphaBranch.LOWER)
        assert a == pytest.approx(2.0 / 3.0, abs=1e-5)

    @settings(max_examples=200, deadline=None)
    @given(
        p=st.floats(1.1, 6.0),
        t=st.floats(0.0, 1.0),
        upper=st.booleans(),
    )
    def test_round_trip(self, p, t, upper):
        pe = PExponent(p)
        a_star = pe.critical_alpha
        # stay off the fold where the inverse is ill-conditioned
        alpha = a_star + t * (1 - a_star) if upper else t * a_star
        if abs(alpha - a_star) < 1e-3:
            alpha = a_star + (1e-3 if upper else -1e-3)
        branch = AlphaBranch.UPPER if upper else AlphaBranch.LOWER
        back = alpha_of_lambda(pe, lambda_of_alpha(pe, alpha), branch)
        assert abs(back - alpha) <= 1e-10

    @settings(max_examples=200, deadline=None)
    @given(p=st.floats(1.1, 6.0), s=st.floats(0.0, 1.0), upper=st.booleans())
    def test_residual(self, p, s, upper):
        pe = PExponent(p)
        lam = s * hardy_one_d_constant(pe)
        branch = AlphaBranch.UPPER if upper else AlphaBranch.LOWER
        a = alpha_of_lambda(pe, lam, branch)
        assert abs(lambda_of_alpha(pe, a) - lam) <= 1e-12
        if upper:
            assert a >= pe.critical_alpha
        else:
            assert a <= pe.critical_alpha


class TestBetaRoot:
    @pytest.mark.parametrize(
        "p, n, mu, expected",
        [(2.0, 3, 0.25, -0.5), (2.0, 3, 0.0, -1.0), (4.0, 2, 0.0, 0.0)],
    )
    def test_examples(self, p, n, mu, expected):
        assert beta_root_at_infinity(PExponent(p, n), mu) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("p, n", [(2.0, 3), (2.0, 4), (3.0, 2), (4.0, 2)])
    def test_threshold_value(self, p, n):
        pe = PExponent(p, n)
        assert abs(beta_root_at_infinity(pe, hardy_point_constant(pe)) - (p - n) / p) <= 1e-10

    def test_degenerate(self):
        with pytest.raises(DegenerateDimensionError):
            beta_root_at_infinity(PExponent(2.0, 2), 0.0)

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeError):
            beta_root_at_infinity(PExponent(2.0, 3), 0.26)

    @settings(max_examples=200, deadline=None)
    @given(p=st.floats(1.2, 6.0), n=st.integers(1, 6), s=st.floats(0.0, 1.0))
    def test_residual_and_side(self, p, n, s):
        if abs(p - n) < 0.05:
            return
        pe = PExponent(p, n)
        mu = s * hardy_point_constant(pe)
        beta = beta_root_at_infinity(pe, mu)
        assert abs(beta_residual(pe, beta) - mu) <= 1e-10
        assert beta <= (p - n) / p + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(p=st.floats(1.2, 6.0), n=st.integers(2, 6), s=st.floats(0.0, 1.0))
    def test_matches_alpha_pair(self, p, n, s):
        # beta(mu) = alpha (p-n)/(p-1), with alpha1 for p<n and alpha2 for p>n
        if abs(p - n) < 0.05:
            return
        pe = PExponent(p, n)
        mu = s * exterior_threshold(pe)
        a1, a2 = exterior_alpha_pair(pe, mu)
        alpha = a1 if p < n else a2
        assert beta_root_at_infinity(pe, mu) == pytest.approx(alpha * (p - n) / (p - 1), abs=1e-8)


class TestExteriorAlphaPair:
    def test_threshold_p2_n3(self):
        # |(p-1)/(p-n)|^p = 1, so lambda = 0.25 maps onto c_2 itself
        a1, a2 = exterior_alpha_pair(PExponent(2.0, 3), 0.25)
        assert a1 == pytest.approx(0.5, abs=1e-7)
        assert a2 == pytest.approx(0.5, abs=1e-7)

    def test_above_threshold(self):
        with pytest.raises(OutOfRangeError):
            exterior_alpha_pair(PExponent(2.0, 3), 0.3)

    def test_sixteenth(self):
        a1, a2 = exterior_alpha_pair(PExponent(2.0, 3), 1.0 / 16.0)
        assert a1 == pytest.approx((1 + math.sqrt(0.75)) / 2, abs=1e-10)
        assert a2 == pytest.approx((1 - math.sqrt(0.75)) / 2, abs=1e-10)

    def test_zero(self):
        a1, a2 = exterior_alpha_pair(PExponent(2.0, 4), 0.0)
        assert (a1, a2) == (pytest.approx(1.0), pytest.approx(0.0))

    def test_degenerate(self):
        with pytest.raises(DegenerateDimensionError):
            exterior_alpha_pair(PExponent(2.0, 2), 0.1)


class TestBarrierConstant:
    def test_p2_reduces_to_lambda_beta(self):
        pe = PExponent(2.0)
        assert barrier_A_constant(pe, 0.3, 0.5) == pytest.approx(lambda_of_alpha(pe, 0.5))

    @pytest.mark.parametrize("p", P_VALUES)
    def test_window_condition(self, p):
        # inside the window beta slightly above alpha >= (p-1)/p, A < (p-1) lambda_alpha
        pe = PExponent(p)
        a = pe.critical_alpha + 0.05
        b = a + 0.05
        assert barrier_A_constant(pe, a, b) < (p - 1) * lambda_of_alpha(pe, a)

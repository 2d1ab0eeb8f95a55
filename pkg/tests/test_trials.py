import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from hardylab.geometry import Annulus, Disk, Dumbbell, ExteriorBall, Interval, ParabolicGraph
from hardylab.scalars import PExponent, hardy_one_d_constant, hardy_point_constant
from hardylab.trials import (
    DEFAULT_S,
    Patch,
    boundary_patches,
    boundary_trial_quotient,
    tail_trial_quotient,
    trial_quotients,
)


def _cut(tau):
    if tau <= 0.5:
        return 1.0, 0.0
    if tau >= 1.0:
        return 0.0, 0.0
    z = 2.0 * tau - 1.0
    return math.cos(0.5 * math.pi * z) ** 2, -math.pi * math.sin(math.pi * z)


def _interval_quad(p, s, eta):
    """Quotient of t^(a+s) chi(t/eta) on (0, eta); on (0, eta/2) both integrands are t^(sp-1) times a constant."""
    e = (p - 1.0) / p + s

    def du(t):
        c, dc = _cut(t / eta)
        return abs(e * t ** (e - 1.0) * c + t ** e * dc / eta) ** p

    def u(t):
        return (t ** e * _cut(t / eta)[0]) ** p * t ** (-p)

    head = (0.5 * eta) ** (s * p) / (s * p)
    E = e ** p * head + quad(du, 0.5 * eta, eta, epsabs=0, epsrel=1e-13)[0]
    M = head + quad(u, 0.5 * eta, eta, epsabs=0, epsrel=1e-13)[0]
    return E / M


def _tail_quad(p, n, s, M, R=1.0):
    e = (p - n) / p - s

    def parts(r):
        c, dc = _cut(0.5 * r / M)
        z, dz = 1.0 - c, -0.5 * dc / M
        return (abs(e * r ** (e - 1.0) * z + r ** e * dz) ** p * r ** (n - 1.0),
                abs(r ** e * z) ** p * (r - R) ** (-p) * r ** (n - 1.0))

    E = quad(lambda r: parts(r)[0], M, 2 * M)[0] + quad(lambda r: parts(r)[0], 2 * M, math.inf, limit=400)[0]
    Ms = quad(lambda r: parts(r)[1], M, 2 * M)[0] + quad(lambda r: parts(r)[1], 2 * M, math.inf, limit=400)[0]
    return E / Ms


INTERVAL_PATCH = boundary_patches(Interval(0.0, 1.0))[0]


class TestBoundaryTrials:
    @pytest.mark.parametrize("p, s", [(2.0, 0.1), (3.0, 0.05), (1.5, 0.2)])
    def test_interval_against_adaptive_quadrature(self, p, s):
        got = boundary_trial_quotient(INTERVAL_PATCH, PExponent(p), s)
        assert got == pytest.approx(_interval_quad(p, s, INTERVAL_PATCH.depth), rel=1e-7)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
    def test_interval_tends_to_one_d_constant(self, p):
        pe = PExponent(p)
        q = [boundary_trial_quotient(INTERVAL_PATCH, pe, s) for s in DEFAULT_S]
        cp = hardy_one_d_constant(pe)
        assert all(x >= cp for x in q)
        assert np.all(np.diff(q) < 0)
        # the cutoff adds an O(s) excess
        excess = np.array(q) - cp
        assert excess[-2] / excess[-1] == pytest.approx(10.0, rel=0.05)
        assert q[-1] == pytest.approx(cp, rel=5e-3)

    @settings(max_examples=40, deadline=None)
    @given(p=st.floats(1.2, 6.0), s=st.floats(1e-4, 0.5))
    def test_one_d_hardy_inequality(self, p, s):
        pe = PExponent(p)
        assert boundary_trial_quotient(INTERVAL_PATCH, pe, s) >= hardy_one_d_constant(pe) * (1 - 1e-12)

    @pytest.mark.parametrize("d", [Disk(1.0), Annulus(1.0, 3.0), Dumbbell(), ParabolicGraph()],
                             ids=lambda d: d.name)
    def test_concentration_recovers_constant(self, d):
        pe = PExponent(2.0)
        for patch in boundary_patches(d):
            assert boundary_trial_quotient(patch, pe, 1e-5) == pytest.approx(0.25, abs=2e-3)

    def test_disk_rim_above_constant(self):
        # the disk is convex, so the Hardy quotient never drops below c_p
        patch = boundary_patches(Disk(1.0))[0]
        assert all(boundary_trial_quotient(patch, PExponent(2.0), s) >= 0.25 for s in DEFAULT_S)

    def test_flat_patch_matches_interval(self):
        flat = Patch("flat", 0.0, 0.5, None, 2)
        pe = PExponent(3.0)
        assert boundary_trial_quotient(flat, pe, 0.1) == pytest.approx(
            boundary_trial_quotient(INTERVAL_PATCH, pe, 0.1), rel=1e-12)

    def test_narrower_cutoff(self):
        pe = PExponent(2.0)
        wide = boundary_trial_quotient(INTERVAL_PATCH, pe, 0.01)
        narrow = boundary_trial_quotient(INTERVAL_PATCH, pe, 0.01, eta=0.1)
        # the quotient is scale invariant on a flat patch
        assert narrow == pytest.approx(wide, rel=1e-10)

    def test_nonpositive_s(self):
        with pytest.raises(ValueError):
            boundary_trial_quotient(INTERVAL_PATCH, PExponent(2.0), 0.0)

    def test_unknown_shape(self):
        with pytest.raises(TypeError):
            boundary_patches(object())


class TestTailTrials:
    @pytest.mark.parametrize("p, n, s, M", [(2.0, 3, 0.1, 2.0), (4.0, 2, 0.05, 5.0), (1.5, 4, 0.2, 3.0)])
    def test_against_adaptive_quadrature(self, p, n, s, M):
        got = tail_trial_quotient(ExteriorBall(1.0), PExponent(p, n), s, M)
        assert got == pytest.approx(_tail_quad(p, n, s, M), rel=1e-5)

    @pytest.mark.parametrize("p, n", [(2.0, 3), (2.0, 5), (3.0, 2), (4.0, 2)])
    def test_tends_to_point_constant(self, p, n):
        pe = PExponent(p, n)
        q = tail_trial_quotient(ExteriorBall(1.0), pe, 1e-5, 20.0)
        assert q == pytest.approx(hardy_point_constant(pe), rel=0.02)

    def test_critical_dimension_tends_to_zero(self):
        pe = PExponent(2.0, 2)
        q = [tail_trial_quotient(ExteriorBall(1.0), pe, s, 20.0) for s in DEFAULT_S]
        assert np.all(np.diff(q) < 0) and q[-1] < 1e-3

    def test_tail_start_inside_ball(self):
        with pytest.raises(ValueError):
            tail_trial_quotient(ExteriorBall(1.0), PExponent(2.0, 3), 0.1, 0.5)


class TestCollection:
    def test_bounded_has_only_boundary_trials(self):
        rows = trial_quotients(Annulus(1.0, 3.0), PExponent(2.0))
        assert len(rows) == 2 * len(DEFAULT_S)
        assert all("tail" not in r.name for r in rows)

    def test_exterior_includes_tails(self):
        rows = trial_quotients(ExteriorBall(1.0), PExponent(2.0, 3), s_values=(0.1, 0.01))
        names = [r.name for r in rows]
        assert sum(n.startswith("tail") for n in names) == 4
        assert all(isinstance(r.as_tuple()[1], float) for r in rows)

    def test_infimum_above_exterior_threshold(self):
        pe = PExponent(2.0, 3)
        assert min(r.quotient for r in trial_quotients(ExteriorBall(1.0), pe)) >= 0.25 * (1 - 1e-9)

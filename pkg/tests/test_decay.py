import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from hardylab.decay import (
    MIN_BAND_LEVELS,
    BandError,
    ExistenceVerdict,
    Side,
    existence_verdict,
    fit_boundary_exponent,
    fit_infinity_exponent,
    predicted_exponent,
    write_fit_table,
)
from hardylab.discretization import GridField, QuadratureRule, build_mesh, sample, weight_vector
from hardylab.geometry import Disk, ExteriorBall, Interval
from hardylab.hardy import GapVerdict, MeshParams, estimate_hardy
from hardylab.scalars import (
    AlphaBranch,
    PExponent,
    alpha_of_lambda,
    beta_root_at_infinity,
    exterior_alpha_pair,
)
from hardylab.solvers import ground_state


@pytest.fixture(scope="module")
def disk_mesh():
    return build_mesh(Disk(1.0), 1.0 / 128)


@pytest.fixture(scope="module")
def exterior_mesh():
    return build_mesh(ExteriorBall(1.0), 0.01, "radial1d", n=3, r_max=100.0)


def _power_of_delta(mesh, a, perturb=0.0):
    d = mesh.delta
    return GridField(mesh, np.where(d > 0, d ** a * (1.0 + perturb * d), 0.0))


class TestBoundaryFit:
    def test_exact_power(self, disk_mesh):
        f = fit_boundary_exponent(_power_of_delta(disk_mesh, 0.7))
        assert f.exponent == pytest.approx(0.7, abs=1e-3)
        assert f.side is Side.BOUNDARY
        assert f.envelope_ratio == pytest.approx(1.0, abs=1e-9)
        assert f.residual < 1e-9

    def test_default_band(self, disk_mesh):
        f = fit_boundary_exponent(_power_of_delta(disk_mesh, 0.7))
        h = disk_mesh.h
        assert f.band == pytest.approx((3 * h, 30 * h))
        assert f.num_nodes > 100

    def test_perturbation_vanishes_as_band_shrinks(self, disk_mesh):
        u = _power_of_delta(disk_mesh, 0.7, perturb=1.0)
        h = disk_mesh.h
        errs = [abs(fit_boundary_exponent(u, (3 * h, k * h)).exponent - 0.7) for k in (60, 30, 15)]
        assert errs[0] > errs[1] > errs[2]
        # d log(1 + t) / d log t = t / (1 + t) is below the band top
        assert errs[2] < 15 * h

    def test_constant_from_intercept(self, disk_mesh):
        f = fit_boundary_exponent(GridField(disk_mesh, 3.0 * _power_of_delta(disk_mesh, 0.6).values))
        assert f.constant == pytest.approx(3.0, rel=1e-6)

    def test_nonpositive_values_rejected(self, disk_mesh):
        u = _power_of_delta(disk_mesh, 0.7)
        v = u.values.copy()
        v[(disk_mesh.delta > 0.05) & (disk_mesh.delta < 0.1)] *= -1.0
        with pytest.raises(BandError, match="non-positive"):
            fit_boundary_exponent(GridField(disk_mesh, v))

    @pytest.mark.parametrize("band", [(0.05, 0.06), (0.1, 0.05), (0.0, 0.2)])
    def test_bad_band(self, disk_mesh, band):
        with pytest.raises(BandError):
            fit_boundary_exponent(_power_of_delta(disk_mesh, 0.7), band)

    def test_resolution_rule(self, disk_mesh):
        h = disk_mesh.h
        fit_boundary_exponent(_power_of_delta(disk_mesh, 0.7), (3 * h, (3 + MIN_BAND_LEVELS) * h))

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(0.2, 2.0))
    def test_recovers_any_power(self, disk_mesh, a):
        assert fit_boundary_exponent(_power_of_delta(disk_mesh, a)).exponent == pytest.approx(a, abs=1e-6)


class TestInfinityFit:
    def test_exact_power(self, exterior_mesh):
        u = sample(exterior_mesh, lambda r: np.ravel(r) ** -0.8)
        f = fit_infinity_exponent(u)
        assert f.exponent == pytest.approx(-0.8, abs=1e-3)
        assert f.side is Side.INFINITY
        assert f.band == pytest.approx((12.5, 50.0))

    def test_band_beyond_truncation(self, exterior_mesh):
        u = sample(exterior_mesh, lambda r: np.ravel(r) ** -0.8)
        with pytest.raises(BandError, match="beyond"):
            fit_infinity_exponent(u, (10.0, 200.0))

    def test_bounded_shape_rejected(self, disk_mesh):
        with pytest.raises(BandError):
            fit_infinity_exponent(_power_of_delta(disk_mesh, 0.5))

    def test_boundary_fit_stays_clear_of_truncation(self, exterior_mesh):
        u = sample(exterior_mesh, lambda r: (np.ravel(r) - 1.0) ** 0.6)
        f = fit_boundary_exponent(u, (0.05, 90.0))
        assert f.exponent == pytest.approx(0.6, abs=1e-9)


def _shoot(p, n, lam, R, d0=1e-5):
    """Radial Euler-Lagrange ODE in s = log r for (log u, |w|^(p-2) w), w = r u'/u."""
    a = alpha_of_lambda(PExponent(p), lam, AlphaBranch.UPPER)

    def rhs(s, y):
        r = math.exp(s)
        phi = y[1]
        w = math.copysign(abs(phi) ** (1.0 / (p - 1.0)), phi)
        return [w, -(n - p) * phi - (p - 1.0) * abs(w) ** p - lam * (r / (r - 1.0)) ** p]

    def collapse(s, y):
        return y[1] + 20.0

    collapse.terminal = True
    r0 = 1.0 + d0
    return solve_ivp(rhs, [math.log(r0), math.log(R)], [a * math.log(d0), (a * r0 / d0) ** (p - 1.0)],
                     method="LSODA", rtol=1e-11, atol=1e-12, dense_output=True, events=collapse)


TOY_P, TOY_N, TOY_R = 4.0, 2, 100.0


def _toy_minimizer(h):
    pe = PExponent(TOY_P, TOY_N)
    mesh = build_mesh(ExteriorBall(1.0), h, "radial1d", n=TOY_N, r_max=TOY_R)
    res = ground_state(mesh, TOY_P, weight_vector(mesh, pe, QuadratureRule()))
    return res.value, GridField(mesh, res.vector)


@pytest.fixture(scope="module")
def toy():
    lam_h, u = _toy_minimizer(0.005)

    def end_slope(lam):
        s = _shoot(TOY_P, TOY_N, lam, TOY_R)
        return s.y[1, -1] if s.status == 0 else -20.0

    lam = brentq(end_slope, 0.08, 0.3, xtol=1e-12)
    sol = _shoot(TOY_P, TOY_N, lam, TOY_R)
    r = np.maximum(u.mesh.nodes.ravel(), 1.0 + 1e-5)
    oracle = GridField(u.mesh, np.exp(sol.sol(np.log(r))[0]))
    return lam_h, u, lam, oracle


class TestRadialGrowthToy:
    """p > n: the truncated minimizer grows at infinity; compared with a shooting oracle."""

    def test_eigenvalue_matches_shooting(self, toy):
        lam_h, _, lam, _ = toy
        assert lam_h == pytest.approx(lam, rel=1e-3)

    def test_exponent_matches_shooting(self, toy):
        _, u, _, oracle = toy
        fu, fo = fit_infinity_exponent(u), fit_infinity_exponent(oracle)
        assert fu.exponent >= 0.0
        assert fu.exponent == pytest.approx(fo.exponent, abs=0.01)

    def test_boundary_exponent_matches_prediction(self, toy):
        lam_h, u, _, _ = toy
        pred = predicted_exponent(PExponent(TOY_P, TOY_N), lam_h, Side.BOUNDARY)
        assert fit_boundary_exponent(u).exponent == pytest.approx(pred, abs=0.02)

    def test_stable_under_refinement_and_band_halving(self, toy):
        _, u, _, _ = toy
        _, coarse = _toy_minimizer(0.01)
        h = u.mesh.h
        b = fit_boundary_exponent(u).exponent
        assert abs(fit_boundary_exponent(u, (3 * h, 16.5 * h)).exponent - b) <= 0.02
        assert abs(fit_boundary_exponent(coarse).exponent - b) <= 0.02
        assert abs(fit_infinity_exponent(coarse).exponent - fit_infinity_exponent(u).exponent) <= 0.02


class TestPrediction:
    @pytest.mark.parametrize("p, lam", [(2.0, 0.2), (3.0, 0.25), (1.5, 0.15)])
    def test_boundary_is_upper_branch(self, p, lam):
        pe = PExponent(p)
        assert predicted_exponent(pe, lam, "Boundary") == alpha_of_lambda(pe, lam, AlphaBranch.UPPER)

    @settings(max_examples=30, deadline=None)
    @given(frac=st.floats(0.05, 0.95))
    def test_infinity_matches_beta_root(self, frac):
        pe = PExponent(2.0, 3)
        mu = frac * 0.25
        assert predicted_exponent(pe, mu, Side.INFINITY) == pytest.approx(beta_root_at_infinity(pe, mu), abs=1e-8)

    def test_growth_branch(self):
        pe = PExponent(4.0, 2)
        a1, a2 = exterior_alpha_pair(pe, 0.05)
        b = predicted_exponent(pe, 0.05, Side.INFINITY)
        assert b == pytest.approx(a2 * 2.0 / 3.0)
        assert 0.0 <= b <= 0.5

    def test_critical_dimension(self):
        assert predicted_exponent(PExponent(2.0, 2), 0.0, Side.INFINITY) == 0.0


@pytest.fixture(scope="module")
def interval_run():
    return estimate_hardy(Interval(0.0, 1.0), PExponent(2.0), MeshParams(h=1.0 / 1024), bounds=False)


class TestExistence:
    def test_interval_has_no_minimizer(self, interval_run):
        r = interval_run
        assert r.gap_verdict is GapVerdict.NO_GAP
        fit = fit_boundary_exponent(r.minimizer)
        rec = existence_verdict(r, [fit], tol=0.1)
        assert rec.verdict is ExistenceVerdict.NO_MINIMIZER
        side, fitted, pred, dev, ok = rec.rows[0]
        assert pred == 0.5
        assert ok and rec.consistent

    def test_mismatched_run(self, interval_run, disk_mesh):
        alien = fit_boundary_exponent(_power_of_delta(disk_mesh, 0.5))
        with pytest.raises(ValueError, match="does not match"):
            existence_verdict(interval_run, [alien])

    def test_weak_slack_only_relaxes_downwards(self, interval_run):
        fit = fit_boundary_exponent(interval_run.minimizer)
        strict = existence_verdict(interval_run, [fit], tol=1e-6)
        loose = existence_verdict(interval_run, [fit], tol=1e-6, weak_slack=1.0)
        dev = strict.rows[0][3]
        assert loose.rows[0][4] == (dev <= 1e-6)

    def test_as_dict(self, interval_run):
        rec = existence_verdict(interval_run, [fit_boundary_exponent(interval_run.minimizer)], tol=0.1)
        d = rec.as_dict()
        assert d["verdict"] == "NoMinimizer"
        assert set(d["rows"][0]) == {"side", "fitted", "predicted", "deviation", "consistent"}


class TestFitTable:
    def test_csv(self, tmp_path, disk_mesh):
        f = fit_boundary_exponent(_power_of_delta(disk_mesh, 0.7))
        path = tmp_path / "fits.csv"
        write_fit_table(path, [f], [0.75])
        rows = list(csv.DictReader(open(path)))
        assert len(rows) == 1
        assert float(rows[0]["exponent"]) == f.exponent
        assert float(rows[0]["deviation"]) == pytest.approx(f.exponent - 0.75)
        assert rows[0]["side"] == "Boundary"

    def test_missing_predictions(self, tmp_path, disk_mesh):
        f = fit_boundary_exponent(_power_of_delta(disk_mesh, 0.7))
        path = tmp_path / "fits.csv"
        write_fit_table(path, [f])
        assert math.isnan(float(next(csv.DictReader(open(path)))["prediction"]))

"""The ten primary acceptance criteria, each at its stated tolerance and time budget."""

import math
import time

import numpy as np
from scipy.optimize import minimize_scalar

from hardylab.barriers import Sign, WeightKind, window_scan
from hardylab.decay import fit_boundary_exponent
from hardylab.geometry import Annulus, Disk, Dumbbell, ExteriorBall, Interval
from hardylab.hardy import GAP_FACTOR, GapVerdict, MeshParams, estimate_hardy, lambda_infinity_bounds
from hardylab.pharmonic import radial_exterior_reference, ratio_asymptotics, solve_collar_green
from hardylab.scalars import (
    AlphaBranch,
    PExponent,
    alpha_of_lambda,
    beta_root_at_infinity,
    exterior_alpha_pair,
    exterior_threshold,
    hardy_one_d_constant,
    hardy_point_constant,
    lambda_of_alpha,
)
from test_barriers import _fd_gap, _random_barriers


def test_criterion_01_interval_constant(acceptance):
    worst, slowest = 0.0, 0.0
    for p in (1.5, 2.0, 3.0):
        pe = PExponent(p)
        t0 = time.perf_counter()
        r = estimate_hardy(Interval(0.0, 1.0), pe, MeshParams(h=1.0 / 4096))
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, abs(r.h_p_estimate / hardy_one_d_constant(pe) - 1.0))
    acceptance(1, "interval estimate within 2% of c_p, <= 10 s per p", worst <= 0.02 and slowest <= 10.0,
               f"max rel. error {worst:.2e}, slowest {slowest:.1f} s")


def test_criterion_02_convex_disk(acceptance):
    t0 = time.perf_counter()
    r = estimate_hardy(Disk(1.0), PExponent(2.0), MeshParams(h=1.0 / 256))
    dt = time.perf_counter() - t0
    ok = abs(r.h_p_estimate - 0.25) <= 0.02 * 0.25 and dt <= 60.0 and len(r.ladders["fine"]) >= 3
    acceptance(2, "disk p=2 estimate 0.25 +/- 2%, <= 60 s", ok,
               f"H={r.h_p_estimate:.5f} +/- {r.error:.1e}, {dt:.1f} s")


def test_criterion_03_lambda_algebra(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    max_err = rt_err = beta_err = 0.0
    for p in (1.5, 2.0, 3.0, 4.0, 6.0):
        pe = PExponent(p)
        # independent maximiser of lambda_alpha
        best = minimize_scalar(lambda a: -lambda_of_alpha(pe, a), bounds=(0.0, 1.0), method="bounded",
                               options={"xatol": 1e-12})
        max_err = max(max_err, abs(-best.fun - hardy_one_d_constant(pe)))
        for lam in rng.uniform(0.0, hardy_one_d_constant(pe), 20):
            for branch in AlphaBranch:
                rt_err = max(rt_err, abs(lambda_of_alpha(pe, alpha_of_lambda(pe, lam, branch)) - lam))
    for p, n in ((2.0, 3), (2.0, 4), (3.0, 2), (4.0, 2)):
        pe = PExponent(p, n)
        beta_err = max(beta_err, abs(beta_root_at_infinity(pe, hardy_point_constant(pe)) - (p - n) / p))
    dt = time.perf_counter() - t0
    ok = max_err <= 1e-12 and rt_err <= 1e-10 and beta_err <= 1e-10 and dt < 1.0
    acceptance(3, "lambda_alpha maximum, branch round trips, beta at c*", ok,
               f"{max_err:.1e} / {rt_err:.1e} / {beta_err:.1e}, {dt:.2f} s")


def test_criterion_04_closed_form_vs_finite_differences(acceptance):
    t0 = time.perf_counter()
    gaps = [_fd_gap(p, a, b, s) for p, a, b, s in _random_barriers(20)]
    dt = time.perf_counter() - t0
    acceptance(4, "closed-form barrier p-Laplacian vs discrete operator within 1%", max(gaps) <= 0.01 and dt <= 30.0,
               f"worst {max(gaps):.2e} over {len(gaps)} samples, {dt:.1f} s")


def test_criterion_05_exterior_windows(acceptance):
    t0 = time.perf_counter()
    pe = PExponent(2.0, 3)
    g = radial_exterior_reference(pe, ExteriorBall(1.0))
    inside = []
    for alpha in (0.5, 0.6, 0.7, 0.8, 0.9, 0.95):
        betas = [b for b in (0.55, 0.65, 0.75, 0.85, 0.95, 1.0) if b > alpha]
        rows = window_scan(g, pe, alpha, betas, mode="infinity", weight=WeightKind.ABS_X_INFINITY)
        inside += [(alpha, r.beta, r.certified and r.plus and r.minus and math.isfinite(r.extent)) for r in rows]
    outside = []
    for alpha, beta in ((0.3, 0.5), (0.2, 0.45)):
        (row,) = window_scan(g, pe, alpha, [beta], mode="infinity", weight=WeightKind.ABS_X_INFINITY,
                             signs=(Sign.PLUS, Sign.MINUS))
        outside.append(row.certified)
    dt = time.perf_counter() - t0
    ok = all(c for *_, c in inside) and not all(outside) and dt <= 60.0
    acceptance(5, "exterior barrier windows certify inside, fail outside", ok,
               f"{sum(c for *_, c in inside)}/{len(inside)} inside certified, "
               f"{outside.count(False)}/{len(outside)} outside fail, {dt:.1f} s")


def test_criterion_06_brackets(acceptance):
    t0 = time.perf_counter()
    disk = lambda_infinity_bounds(Disk(1.0), PExponent(2.0))
    ok = disk.lower <= 0.25 <= disk.upper and disk.upper - disk.lower <= 0.04
    detail = [f"disk [{disk.lower:.5f}, {disk.upper:.5f}]"]
    for n in (3, 5):
        pe = PExponent(2.0, n)
        b = lambda_infinity_bounds(ExteriorBall(1.0), pe)
        c = exterior_threshold(pe)
        ok &= b.lower <= c <= b.upper
        detail.append(f"n={n} [{b.lower:.5f}, {b.upper:.5f}]")
    dt = time.perf_counter() - t0
    acceptance(6, "lambda at infinity brackets contain the threshold", ok and dt <= 300.0,
               ", ".join(detail) + f", {dt:.1f} s")


def test_criterion_07_ratio_asymptotics(acceptance):
    t0 = time.perf_counter()
    pe = PExponent(2.0)
    finest = []
    for d, h in ((Disk(1.0), 1.0 / 512), (Annulus(1.0, 3.0), 1.0 / 256)):
        g = solve_collar_green(d, pe, 0.3, h, quadrant=True)
        finest.append(ratio_asymptotics(g, [0.1, 0.05, 0.02, 0.01])[-1])
    dt = time.perf_counter() - t0
    ok = all(0.95 <= b.lo and b.hi <= 1.05 for b in finest) and dt <= 60.0
    acceptance(7, "|grad G| delta / G within [0.95, 1.05] at the finest band", ok,
               ", ".join(f"[{b.lo:.4f}, {b.hi:.4f}]" for b in finest) + f", {dt:.1f} s")


def test_criterion_08_dumbbell_decay(acceptance, dumbbell_report):
    t0 = time.perf_counter()
    r = dumbbell_report
    fit = fit_boundary_exponent(r.minimizer)
    lam = lambda_of_alpha(r.pe, fit.exponent)
    rel = abs(lam - r.h_p_estimate) / r.h_p_estimate
    # the H estimate itself, re-verified one level coarser
    coarse = estimate_hardy(Dumbbell(), PExponent(2.0), MeshParams(h=1.0 / 256))
    agree = abs(coarse.h_p_estimate - r.h_p_estimate) <= GAP_FACTOR * math.hypot(coarse.error, r.error)
    dt = time.perf_counter() - t0
    ok = (rel <= 0.1 and agree and r.gap_verdict is GapVerdict.GAP_POSITIVE
          and coarse.gap_verdict is GapVerdict.GAP_POSITIVE and dt <= 600.0)
    acceptance(8, "dumbbell fitted exponent matches the estimate", ok,
               f"alpha={fit.exponent:.4f}, |lambda_alpha - H|/H={rel:.3f}, H={r.h_p_estimate:.5f} "
               f"vs {coarse.h_p_estimate:.5f} at 2h")


def test_criterion_09_exponent_cross_check(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst, count = 0.0, 0
    for p, n in ((2.0, 3), (1.5, 4), (3.0, 5), (3.0, 2), (4.0, 2), (5.0, 3)):
        pe = PExponent(p, n)
        for mu in rng.uniform(0.0, exterior_threshold(pe), 100):
            a1, a2 = exterior_alpha_pair(pe, mu)
            alpha = a1 if p < n else a2
            worst = max(worst, abs(alpha * (p - n) / (p - 1.0) - beta_root_at_infinity(pe, mu)))
            count += 1
    dt = time.perf_counter() - t0
    acceptance(9, "exterior exponent from the alpha pair equals the root at infinity", worst <= 1e-8 and dt < 1.0,
               f"worst {worst:.1e} over {count} samples, {dt:.2f} s")


def test_criterion_10_invariance_suite(acceptance, default_suite):
    _, rows, _ = default_suite
    names = ("homogeneity", "dilation", "sign_constancy", "el_residual")
    bad = [f"{r['shape']} p={r['p']:g}: {k}" for r in rows for k in names if not r["checks"].get(k, False)]
    acceptance(10, "invariants green on the default suite", len(rows) == 15 and not bad,
               f"{len(rows)} rows" + (f"; failing {bad}" if bad else ""))

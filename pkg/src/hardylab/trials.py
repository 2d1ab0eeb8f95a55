"""Concentrated trial functions and their Hardy quotients by quadrature.

Boundary trials are ``t^(a+s) chi(t/eta) psi(sigma)`` in tubular coordinates
``(t, sigma)`` (distance to the boundary, arclength along it) with
``a = (p-1)/p``; tail trials for exterior shapes are ``r^(b-s) zeta(r/M)``
with ``b = (p-n)/p``.  In both cases the energy and mass integrands behave
like ``t^(sp-1)`` (or ``r^(-sp-1)``) near the concentration point, so they are
integrated with Gauss-Jacobi rules carrying that factor exactly.  As ``s -> 0``
the quotients tend to c_p and c* respectively, from above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .geometry import (Annulus, Disk, DomainSpec, Dumbbell, ExteriorBall, Interval,
                       ParabolicGraph)
from .scalars import PExponent, _pe

__all__ = ["TrialResult", "Patch", "boundary_patches", "boundary_trial_quotient",
           "tail_trial_quotient", "trial_quotients", "DEFAULT_S"]

DEFAULT_S = (0.1, 0.01, 1e-3, 1e-4, 1e-5)
_NODES = 96


@dataclass(frozen=True)
class TrialResult:
    name: str
    quotient: float

    def as_tuple(self):
        return (self.name, self.quotient)


@dataclass(frozen=True)
class Patch:
    """A boundary piece with tubular coordinates valid for t < depth.

    ``curvature`` is signed so the area element is ``(1 - curvature t)^(n-1)``
    (positive when the domain lies on the centre side).  ``length`` is the
    tangential extent used by the bump ``psi``; ``None`` means the trial is
    constant along the boundary (radial shapes and intervals), and then
    ``dim`` is the number of space dimensions entering the area element.
    """

    name: str
    curvature: float
    depth: float
    length: float | None = None
    dim: int = 1


def _cutoff(tau):
    """1 on [0, 1/2], 0 on [1, inf), C^1 cosine ramp between; returns (value, derivative)."""
    tau = np.asarray(tau, dtype=float)
    z = np.clip(2.0 * tau - 1.0, 0.0, 1.0)
    val = np.cos(0.5 * math.pi * z) ** 2
    der = np.where((z > 0) & (z < 1), -math.pi * np.sin(math.pi * z), 0.0)
    return val, der


def _bump(x):
    """sin^2(pi x) on [0, 1]; returns (value, derivative)."""
    return np.sin(math.pi * x) ** 2, math.pi * np.sin(2.0 * math.pi * x)


def boundary_patches(d: DomainSpec, n: int = 2) -> list[Patch]:
    """Patches on which the distance to the boundary equals the normal coordinate."""
    if isinstance(d, Interval):
        return [Patch("interval-end", 0.0, 0.5 * (d.b - d.a), None, 1)]
    if isinstance(d, Disk):
        return [Patch("disk-rim", 1.0 / d.R, 0.5 * d.R, None, n)]
    if isinstance(d, Annulus):
        w = 0.5 * (d.R - d.r)
        return [Patch("annulus-outer", 1.0 / d.R, w, None, n), Patch("annulus-inner", -1.0 / d.r, w, None, n)]
    if isinstance(d, ExteriorBall):
        return [Patch("sphere", -1.0 / d.R, 0.5 * d.R, None, n)]
    if isinstance(d, Dumbbell):
        # far side of a bulb: a quarter of its circumference centred on the axis
        R = d.bulb_radius
        return [Patch("bulb-arc", 1.0 / R, 0.25 * R, 0.5 * math.pi * R, 2)]
    if isinstance(d, ParabolicGraph):
        a = d.height ** (1.0 / (1.0 + d.gamma))
        return [Patch("lid", 0.0, 0.25 * d.height, a, 2)]
    raise TypeError(f"no boundary patches for {type(d).__name__}")


def _jacobi_rule(lo, hi, power, N=_NODES):
    """Nodes/weights for int_lo^hi f(t) (t - lo)^power dt, power > -1."""
    x, w = roots_jacobi(N, 0.0, power)
    half = 0.5 * (hi - lo)
    t = lo + half * (1.0 + x)
    return t, w * half ** (power + 1.0)


def _legendre_rule(lo, hi, N=_NODES):
    x, w = roots_legendre(N)
    half = 0.5 * (hi - lo)
    return lo + half * (1.0 + x), w * half


def boundary_trial_quotient(patch: Patch, pe: PExponent, s: float, eta: float | None = None) -> float:
    """Hardy quotient of t^(a+s) chi(t/eta) psi along one patch."""
    pe = _pe(pe)
    p = pe.p
    if not s > 0:
        raise ValueError("s must be positive")
    eta = patch.depth if eta is None else min(eta, patch.depth)
    e = (p - 1.0) / p + s
    sp_ = s * p
    kap = patch.curvature

    def parts(t, sing):
        # integrands divided by t^(sp-1) when ``sing`` (the Jacobi factor)
        chi, dchi = _cutoff(t / eta)
        ut = t ** e * chi
        ut_t = e * t ** (e - 1.0) * chi + t ** e * dchi / eta
        jac = (1.0 - kap * t)
        if patch.length is None:
            area = jac ** (patch.dim - 1)
            energy = np.abs(ut_t) ** p * area
            mass = np.abs(ut) ** p * t ** (-p) * area
        else:
            sig, ws = _legendre_rule(0.0, 1.0, 48)
            psi, dpsi = _bump(sig)
            g_t = ut_t[:, None] * psi[None, :]
            g_s = (ut / jac)[:, None] * dpsi[None, :] / patch.length
            gp = (g_t ** 2 + g_s ** 2) ** (0.5 * p)
            area = jac[:, None] * patch.length
            energy = (gp * area) @ ws
            mass = ((np.abs(ut)[:, None] * psi[None, :]) ** p * area) @ ws * t ** (-p)
        if sing:
            scale = t ** (1.0 - sp_)
            return energy * scale, mass * scale
        return energy, mass

    t1, w1 = _jacobi_rule(0.0, 0.5 * eta, sp_ - 1.0)
    t2, w2 = _legendre_rule(0.5 * eta, eta)
    E1, M1 = parts(t1, True)
    E2, M2 = parts(t2, False)
    return float((w1 @ E1 + w2 @ E2) / (w1 @ M1 + w2 @ M2))


def tail_trial_quotient(d: ExteriorBall, pe: PExponent, s: float, M: float | None = None) -> float:
    """Hardy quotient (weight delta^-p) of r^(b-s) zeta(r/M) on an exterior ball, radial in R^n."""
    pe = _pe(pe)
    p, n = pe.p, pe.n
    if not s > 0:
        raise ValueError("s must be positive")
    R = d.R
    M = 2.0 * R if M is None else M
    if not M > R:
        raise ValueError("tail start must lie outside the ball")
    e = (p - n) / p - s
    sp_ = s * p

    def integrands(r):
        # zeta rises from 0 at r = M to 1 at r = 2M
        c, dc = _cutoff(0.5 * r / M)
        z, dz = 1.0 - c, -0.5 * dc / M
        u = r ** e * z
        du = e * r ** (e - 1.0) * z + r ** e * dz
        area = r ** (n - 1.0)
        return np.abs(du) ** p * area, np.abs(u) ** p * (r - R) ** (-p) * area

    r1, w1 = _legendre_rule(M, 2.0 * M)
    E1, M1 = integrands(r1)
    # r = 2M / z maps [2M, inf) to (0, 1]; the integrands times dr carry z^(sp-1)
    z, wz = _jacobi_rule(0.0, 1.0, sp_ - 1.0)
    r2 = 2.0 * M / z
    E2, M2 = integrands(r2)
    jac = 2.0 * M / z ** 2 * z ** (1.0 - sp_)
    E = w1 @ E1 + wz @ (E2 * jac)
    Mass = w1 @ M1 + wz @ (M2 * jac)
    return float(E / Mass)


def trial_quotients(d: DomainSpec, pe: PExponent, s_values=DEFAULT_S) -> list[TrialResult]:
    """All boundary (and, for exterior shapes, tail) trial quotients."""
    pe = _pe(pe)
    n = 1 if d.dim == 1 else pe.n
    out = []
    for patch in boundary_patches(d, n):
        for s in s_values:
            out.append(TrialResult(f"{patch.name} s={s:g}", boundary_trial_quotient(patch, pe, s)))
    if d.is_exterior:
        for s in s_values:
            for M in (2.0 * d.R, 20.0 * d.R):
                out.append(TrialResult(f"tail M={M:g} s={s:g}", tail_trial_quotient(d, pe, s, M)))
    return out

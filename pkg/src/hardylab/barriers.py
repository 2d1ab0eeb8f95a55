"""Barriers G^alpha +- G^beta, their p-Laplacian and sub/supersolution certificates.

For a positive G the p-Laplacian of f(G) follows from the chain rule,

    Delta_p f(G) = |f'(G)|^(p-2) [ f'(G) Delta_p G + (p-1) f''(G) |grad G|^p ],

evaluated pointwise from G, |grad G| and Delta_p G.  ``certify`` checks the
sign of  -Delta_p v - lambda v^(p-1) / w^p  with ``w`` the distance to the
boundary or ``|x|``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .discretization import GridField, Mesh, radial_mesh_from_nodes
from .pharmonic import GKind, ReferenceG, _boundary_circles
from .scalars import exterior_scale, lambda_of_alpha

__all__ = [
    "Sign",
    "Verdict",
    "WeightKind",
    "Region",
    "BarrierSpec",
    "ResidualReport",
    "WindowRow",
    "NonPositiveBarrierError",
    "EmptyRegionError",
    "barrier_values",
    "plap_of_barrier",
    "certify",
    "window_scan",
    "barrier_lambda",
    "CERT_TOL",
]

CERT_TOL = 1e-8


class NonPositiveBarrierError(ValueError):
    """G or the barrier is not positive somewhere in the region."""


class EmptyRegionError(ValueError):
    """The region contains no sample node."""


class Sign(enum.Enum):
    PLUS = "Plus"    # subsolution candidate
    MINUS = "Minus"  # supersolution candidate


class Verdict(enum.Enum):
    CERTIFIED_SUB = "CertifiedSub"
    CERTIFIED_SUPER = "CertifiedSuper"
    VIOLATED = "Violated"


class WeightKind(enum.Enum):
    DELTA_BOUNDARY = "DeltaBoundary"
    ABS_X_INFINITY = "AbsXInfinity"


@dataclass(frozen=True)
class Region:
    """Collar {lo < delta <= hi} or exterior {lo <= |x| <= hi}.

    For closed-form G the region is sampled at ``samples`` geometrically
    spaced radii; for numerical G it selects interior mesh nodes.
    """

    kind: str
    lo: float
    hi: float
    samples: int = 600

    def __post_init__(self):
        if self.kind not in ("collar", "exterior"):
            raise ValueError("region kind must be 'collar' or 'exterior'")
        if not (0 <= self.lo < self.hi):
            raise ValueError(f"region bounds must satisfy 0 <= lo < hi, got {self.lo}, {self.hi}")

    @classmethod
    def collar(cls, width: float, delta_min: float | None = None, samples: int = 600) -> "Region":
        return cls("collar", 1e-9 * width if delta_min is None else delta_min, width, samples)

    @classmethod
    def exterior(cls, radius: float, r_far: float | None = None, samples: int = 600) -> "Region":
        return cls("exterior", radius, 1e8 * radius if r_far is None else r_far, samples)

    def as_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class BarrierSpec:
    reference: ReferenceG
    alpha: float
    beta: float
    sign: Sign
    lam: float
    region: Region

    def __post_init__(self):
        object.__setattr__(self, "sign", Sign(self.sign))
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {v}")


def barrier_lambda(pe, alpha: float, infinity: bool = False) -> float:
    """lambda_alpha, times |(p-n)/(p-1)|^p for barriers at infinity."""
    lam = lambda_of_alpha(pe, alpha)
    return lam / exterior_scale(pe) if infinity else lam


def _sample_mesh(b: BarrierSpec) -> tuple[Mesh, np.ndarray]:
    """Sampling mesh and the mask of nodes inside the region."""
    g, reg = b.reference, b.region
    if not g.is_closed_form:
        mesh = g.field.mesh
        if reg.kind == "collar":
            mask = mesh.free & (mesh.delta > reg.lo) & (mesh.delta <= reg.hi)
        else:
            rad = mesh.radius()
            mask = mesh.free & (rad >= reg.lo) & (rad <= reg.hi)
        return mesh, mask
    if reg.kind == "collar":
        if g.kind is GKind.RADIAL_EXTERIOR:
            raise ValueError("collar regions need a reference function vanishing on a boundary")
        rb, side = _boundary_circles(g.domain)[0]
        # radii closer than ~1e-10 rb collide in floating point
        dist = np.geomspace(max(reg.lo, 1e-10 * max(rb, 1.0)), reg.hi, reg.samples)
        r = np.sort(rb + side * dist)
    else:
        r = np.geomspace(reg.lo, reg.hi, reg.samples)
    mesh = radial_mesh_from_nodes(g.domain, r, n=g.pe.n, fixed_ends=False)
    return mesh, np.ones(len(r), dtype=bool)


def barrier_values(b: BarrierSpec, mesh: Mesh | None = None):
    """(mesh, mask, barrier values, Delta_p barrier) with NaN outside the region."""
    G, gn, lapG = (None, None, None)
    if mesh is None:
        mesh, mask = _sample_mesh(b)
        G, gn, lapG = b.reference.nodal(mesh if b.reference.is_closed_form else None)
    else:
        G, gn, lapG = b.reference.nodal(mesh)
        mask = G > 0
    if not np.any(mask):
        raise EmptyRegionError("region contains no sample node")
    Gm = G[mask]
    if np.any(~(Gm > 0)):
        raise NonPositiveBarrierError("reference function is not positive in the region")
    p = b.reference.pe.p
    a, be = b.alpha, b.beta
    s = 1.0 if b.sign is Sign.PLUS else -1.0
    v = Gm ** a + s * Gm ** be
    d1 = a * Gm ** (a - 1.0) + s * be * Gm ** (be - 1.0)
    d2 = (a * a - a) * Gm ** (a - 2.0) + s * (be * be - be) * Gm ** (be - 2.0)
    lap = np.abs(d1) ** (p - 2.0) * (d1 * lapG[mask] + (p - 1.0) * gn[mask] ** p * d2)
    vals = np.full(mesh.num_nodes, np.nan)
    laps = np.full(mesh.num_nodes, np.nan)
    vals[mask] = v
    laps[mask] = lap
    return mesh, mask, vals, laps


def plap_of_barrier(b: BarrierSpec, mesh: Mesh | None = None) -> GridField:
    """Closed-form Delta_p (G^alpha +- G^beta) on the region (NaN elsewhere).

    With ``mesh`` given (closed-form G only) the formula is evaluated at its
    free nodes instead of the default region sampling.
    """
    mesh, _, _, laps = barrier_values(b, mesh)
    return GridField(mesh, laps)


@dataclass(frozen=True)
class ResidualReport:
    min_residual: float
    max_residual: float
    sign_verdict: Verdict
    violation_locus: list
    margin: float
    weight: WeightKind
    region: Region
    num_nodes: int
    error_budget: float = 0.0

    @property
    def certified(self) -> bool:
        return self.sign_verdict is not Verdict.VIOLATED

    def as_dict(self) -> dict:
        return {
            "min_residual": self.min_residual,
            "max_residual": self.max_residual,
            "verdict": self.sign_verdict.value,
            "violation_locus": self.violation_locus,
            "margin": self.margin,
            "weight": self.weight.value,
            "region": self.region.as_dict(),
            "num_nodes": self.num_nodes,
            "error_budget": self.error_budget,
        }


def certify(b: BarrierSpec, weight: WeightKind | str = WeightKind.DELTA_BOUNDARY,
            tol: float = CERT_TOL) -> ResidualReport:
    """Sign of -Delta_p v - lambda v^(p-1)/w^p over the region.

    CertifiedSub iff the residual is <= tol * (local size of the two terms)
    everywhere, CertifiedSuper iff >= -tol * size; when both hold the barrier
    sign decides.  ``margin`` is the smallest normalized residual in the
    direction expected from the sign (positive means strict).
    """
    weight = WeightKind(weight)
    mesh, mask, vals, laps = barrier_values(b)
    v = vals[mask]
    if np.any(~(v > 0)):
        raise NonPositiveBarrierError("barrier is not positive in the region (need G^alpha > G^beta)")
    p = b.reference.pe.p
    if weight is WeightKind.DELTA_BOUNDARY:
        w = mesh.delta[mask]
    else:
        w = mesh.radius()[mask]
    if np.any(~(w > 0)):
        raise NonPositiveBarrierError("weight distance vanishes inside the region")
    lap = laps[mask]
    zeroth = b.lam * v ** (p - 1.0) / w ** p
    res = -lap - zeroth
    scale = np.abs(lap) + np.abs(zeroth)
    scale = np.where(scale > 0, scale, 1.0)
    normalized = res / scale
    sub = bool(np.all(normalized <= tol))
    sup = bool(np.all(normalized >= -tol))
    if sub and sup:
        verdict = Verdict.CERTIFIED_SUB if b.sign is Sign.PLUS else Verdict.CERTIFIED_SUPER
    elif sub:
        verdict = Verdict.CERTIFIED_SUB
    elif sup:
        verdict = Verdict.CERTIFIED_SUPER
    else:
        verdict = Verdict.VIOLATED
    expected = -normalized if b.sign is Sign.PLUS else normalized
    margin = float(expected.min())
    pts = mesh.nodes[mask]
    bad = np.flatnonzero(expected < -tol)
    locus = [np.atleast_1d(pts[k]).tolist() for k in bad[:10]]
    budget = 0.0
    if not b.reference.is_closed_form:
        # the p-Laplacian of G is dropped; its size enters through |f'|^(p-1)
        d1 = np.abs(laps[mask])
        budget = float(b.reference.residual * np.max(d1 / np.maximum(scale, 1e-300)))
    return ResidualReport(float(res.min()), float(res.max()), verdict, locus, margin, weight, b.region,
                          int(mask.sum()), budget)


def _success(b: BarrierSpec, weight: WeightKind) -> bool:
    want = Verdict.CERTIFIED_SUB if b.sign is Sign.PLUS else Verdict.CERTIFIED_SUPER
    try:
        return certify(b, weight).sign_verdict is want
    except NonPositiveBarrierError:
        return False


@dataclass(frozen=True)
class WindowRow:
    beta: float
    certified: bool
    extent: float  # largest collar width, or smallest exterior radius M
    plus: bool
    minus: bool

    def as_dict(self):
        return {"beta": self.beta, "certified": self.certified, "extent": self.extent,
                "plus": self.plus, "minus": self.minus}


def window_scan(g: ReferenceG, pe, alpha: float, betas, *, mode: str = "boundary",
                weight: WeightKind | str | None = None, width_max: float | None = None,
                width_min: float = 1e-6, delta_min: float | None = None,
                radius_min: float | None = None, radius_max: float = 1e12,
                signs=(Sign.PLUS, Sign.MINUS), rel_tol: float = 0.01) -> list[WindowRow]:
    """For each beta, the largest collar width (or smallest radius M) on which the pair certifies.

    Success means every requested sign certifies (Plus as sub-, Minus as
    supersolution) with lambda = lambda_alpha (boundary) or lambda_alpha
    |(p-n)/(p-1)|^p (infinity).  The extent is bisected geometrically to
    relative accuracy ``rel_tol``; uncertified rows report extent 0 (boundary)
    or inf (infinity).
    """
    if mode not in ("boundary", "infinity"):
        raise ValueError("mode must be 'boundary' or 'infinity'")
    infinity = mode == "infinity"
    if weight is None:
        weight = WeightKind.DELTA_BOUNDARY
    weight = WeightKind(weight)
    lam = barrier_lambda(pe, alpha, infinity)
    signs = tuple(Sign(s) for s in signs)
    if infinity:
        if radius_min is None:
            radius_min = (_boundary_circles(g.domain)[0][0] if g.domain.is_exterior else 1.0) * 1.01
    else:
        if width_max is None:
            width_max = g.collar_width
        if delta_min is None and not g.is_closed_form:
            delta_min = 3.0 * g.h

    def region_for(x):
        if infinity:
            return Region.exterior(x, max(1e8 * x, radius_max * 1e2))
        return Region.collar(x, delta_min if delta_min is not None else 1e-9 * x)

    def ok_at(x, beta):
        res = {}
        for s in signs:
            res[s] = _success(BarrierSpec(g, alpha, beta, s, lam, region_for(x)), weight)
        return res

    rows = []
    for beta in betas:
        beta = float(beta)
        if infinity:
            best, lo_ok = ok_at(radius_min, beta), radius_min
            if all(best.values()):
                rows.append(WindowRow(beta, True, radius_min, True, True))
                continue
            top = ok_at(radius_max, beta)
            if not all(top.values()):
                rows.append(WindowRow(beta, False, math.inf, top.get(Sign.PLUS, False), top.get(Sign.MINUS, False)))
                continue
            lo, hi = radius_min, radius_max  # fails at lo, succeeds at hi
            while hi / lo > 1.0 + rel_tol:
                mid = math.sqrt(lo * hi)
                if all(ok_at(mid, beta).values()):
                    hi = mid
                else:
                    lo = mid
            rows.append(WindowRow(beta, True, hi, True, True))
        else:
            top = ok_at(width_max, beta)
            if all(top.values()):
                rows.append(WindowRow(beta, True, width_max, True, True))
                continue
            low_w = max(width_min, (delta_min or 0.0) * 2.0)
            bottom = ok_at(low_w, beta)
            if not all(bottom.values()):
                rows.append(WindowRow(beta, False, 0.0, bottom.get(Sign.PLUS, False),
                                      bottom.get(Sign.MINUS, False)))
                continue
            lo, hi = low_w, width_max  # succeeds at lo, fails at hi
            while hi / lo > 1.0 + rel_tol:
                mid = math.sqrt(lo * hi)
                if all(ok_at(mid, beta).values()):
                    lo = mid
                else:
                    hi = mid
            rows.append(WindowRow(beta, True, lo, True, True))
    return rows

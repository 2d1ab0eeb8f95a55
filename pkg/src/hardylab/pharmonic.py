"""Positive p-harmonic reference functions vanishing on the boundary.

A reference function ``G`` is either a numerical solution on a boundary
collar (``G = 0`` on the boundary, ``G = 1`` on the inner interface) or a
closed form: the affine profile on an interval, radial fundamental-solution
profiles for disks, annuli and ball exteriors, and ``|x|^((p-n)/(p-1))`` at
infinity.  Closed forms are exactly p-harmonic, so their p-Laplacian is
reported as zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field

import numpy as np

from .discretization import (
    KAPPA,
    GridField,
    Mesh,
    Mode,
    NodeKind,
    build_mesh,
    discrete_p_laplacian,
    grad,
)
from .geometry import Annulus, Disk, DomainSpec, ExteriorBall, Interval
from .scalars import PExponent, _pe
from .solvers import SolverError, p_harmonic_extension

__all__ = [
    "GKind",
    "ReferenceG",
    "HopfResult",
    "RatioBand",
    "fundamental_profile",
    "exact_reference",
    "radial_exterior_reference",
    "solve_collar_green",
    "hopf_check",
    "ratio_asymptotics",
    "EmptyBandError",
]


class EmptyBandError(ValueError):
    """No sample point falls in the requested band."""


class GKind(enum.Enum):
    NUMERIC_COLLAR = "NumericCollar"
    RADIAL_EXTERIOR = "RadialExterior"
    EXACT_1D = "Exact1D"
    EXACT_RADIAL = "ExactRadial"


def fundamental_profile(pe: PExponent, r):
    """Radial p-harmonic profile and its derivative: r^q with q=(p-n)/(p-1), or log r if p=n."""
    pe = _pe(pe)
    r = np.asarray(r, dtype=float)
    if pe.p == pe.n:
        return np.log(r), 1.0 / r
    q = (pe.p - pe.n) / (pe.p - 1.0)
    return r ** q, q * r ** (q - 1.0)


def _boundary_circles(d: DomainSpec):
    """(radius, side) of each boundary sphere; side=+1 when the domain lies at larger radius."""
    if isinstance(d, Interval):
        return [(d.a, 1.0), (d.b, -1.0)]
    if isinstance(d, Disk):
        return [(d.R, -1.0)]
    if isinstance(d, Annulus):
        return [(d.r, 1.0), (d.R, -1.0)]
    if isinstance(d, ExteriorBall):
        return [(d.R, 1.0)]
    raise TypeError(f"no closed-form reference function for {d.name}")


@dataclass(frozen=True, eq=False)
class ReferenceG:
    """Positive p-harmonic function vanishing on the boundary.

    ``field`` holds nodal values for the numerical kind; closed-form kinds
    are evaluated on demand with :meth:`evaluate`.
    """

    kind: GKind
    pe: PExponent
    domain: DomainSpec
    collar_width: float | None
    field: GridField | None = None
    residual: float = 0.0
    history: list = dc_field(default_factory=list)

    @property
    def is_closed_form(self) -> bool:
        return self.kind is not GKind.NUMERIC_COLLAR

    @property
    def h(self) -> float:
        return self.field.h if self.field is not None else 0.0

    @classmethod
    def from_field(cls, f: GridField, pe: PExponent, collar_width: float | None = None,
                   residual: float = 0.0) -> "ReferenceG":
        """Wrap nodal values (e.g. a synthetic field) as a numerical reference function."""
        return cls(GKind.NUMERIC_COLLAR, _pe(pe), f.domain, collar_width, f, residual)

    def _radius(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            return np.hypot(x[:, 0], x[:, 1])
        return np.abs(x) if self.domain.dim != 1 else x

    def evaluate(self, x):
        """(G, |grad G|, Delta_p G) at radii (1-D array) or points (N, 2) for closed forms."""
        if not self.is_closed_form:
            raise TypeError("numerical reference functions are only known at their mesh nodes")
        r = self._radius(x)
        if self.kind is GKind.RADIAL_EXTERIOR:
            G, dG = fundamental_profile(self.pe, r)
            return G, np.abs(dG), np.zeros_like(G)
        circles = _boundary_circles(self.domain)
        dist = np.stack([np.abs(r - rb) for rb, _ in circles])
        which = np.argmin(dist, axis=0)
        G = np.empty_like(r)
        dG = np.empty_like(r)
        n_eff = 1 if self.domain.dim == 1 else self.pe.n
        pe = PExponent(self.pe.p, n_eff)
        for k, (rb, side) in enumerate(circles):
            sel = which == k
            # differences of the profile from delta, accurate for tiny delta
            rel = side * dist[k][sel] / rb if rb > 0 else None
            wrel = side * self.collar_width / rb if rb > 0 else None
            if rb == 0 or pe.n == 1:
                num = side * dist[k][sel]
                den = side * self.collar_width
                dphi = np.ones_like(num)
            elif pe.p == pe.n:
                num, den = np.log1p(rel), np.log1p(wrel)
                dphi = 1.0 / r[sel]
            else:
                q = (pe.p - pe.n) / (pe.p - 1.0)
                num = np.expm1(q * np.log1p(rel))
                den = np.expm1(q * np.log1p(wrel))
                dphi = q * (r[sel] / rb) ** (q - 1.0) / rb
            G[sel] = num / den
            dG[sel] = np.abs(dphi / den)
        return G, dG, np.zeros_like(G)

    def nodal(self, mesh: Mesh | None = None):
        """(G, |grad G|, Delta_p G) at mesh nodes; numeric kinds use their own mesh.

        For numerical G the p-Laplacian is set to zero (its size is the solver
        residual, reported separately).
        """
        if self.is_closed_form:
            if mesh is None:
                raise ValueError("closed-form reference functions need a mesh to sample on")
            return self.evaluate(mesh.nodes)
        if mesh is not None and mesh is not self.field.mesh:
            raise ValueError("numerical reference function lives on its own mesh")
        g = grad(self.field)
        return self.field.values, np.sqrt(np.sum(g * g, axis=1)), np.zeros(self.field.mesh.num_nodes)

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "p": self.pe.p, "n": self.pe.n, "collar_width": self.collar_width,
               "domain": self.domain.describe(), "residual": self.residual}
        if self.field is not None:
            out["h"] = self.field.h
            out["mode"] = self.field.mode.value
        return out


def exact_reference(d: DomainSpec, pe: PExponent, collar_width: float) -> ReferenceG:
    """Closed-form collar solution for Interval, Disk, Annulus and ExteriorBall."""
    pe = _pe(pe)
    _boundary_circles(d)
    kind = GKind.EXACT_1D if d.dim == 1 else GKind.EXACT_RADIAL
    return ReferenceG(kind, pe, d, collar_width)


def radial_exterior_reference(pe: PExponent, d: DomainSpec | None = None) -> ReferenceG:
    """G(x) = |x|^((p-n)/(p-1)) (log|x| if p=n), p-harmonic away from the origin."""
    pe = _pe(pe)
    return ReferenceG(GKind.RADIAL_EXTERIOR, pe, d if d is not None else ExteriorBall(1.0), None)


def solve_collar_green(d: DomainSpec, pe: PExponent, collar_width: float, h: float, *,
                       mode: Mode | str | None = None, kappa: float = KAPPA, tol: float = 1e-6,
                       max_iter: int = 200, quadrant: bool = False) -> ReferenceG:
    """p-harmonic G on {0 < delta < collar_width}, G=0 on the boundary and 1 on the interface.

    Starts from delta/collar_width; p=2 is one linear solve, other p use damped
    Newton on the p-energy.  ``quadrant`` solves on the quarter of a shape
    symmetric in both axes (the solution is even).  Raises
    :class:`SolverError` with the residual history if the max-norm residual
    does not reach ``tol``.
    """
    pe = _pe(pe)
    if not collar_width > 0:
        raise ValueError("collar_width must be positive")
    mesh = build_mesh(d, h, mode, collar_width=collar_width, n=pe.n, quadrant=quadrant)
    data = np.where(mesh.kind == NodeKind.INTERFACE, 1.0, 0.0)
    guess = np.clip(mesh.delta / collar_width, 0.0, 1.0)
    u, history = p_harmonic_extension(mesh, pe.p, data, u0=guess, kappa=kappa, tol=tol, max_iter=max_iter)
    f = GridField(mesh, u)
    lap = discrete_p_laplacian(f, pe, kappa=kappa).values
    res = float(np.nanmax(np.abs(lap)))
    if not res <= tol:
        raise SolverError(f"collar solve residual {res:.3e} above {tol:.1e}", history)
    return ReferenceG(GKind.NUMERIC_COLLAR, pe, d, collar_width, f, res, history)


@dataclass(frozen=True)
class HopfResult:
    min_slope: float
    gradient_scale: float
    threshold: float
    positive: bool

    def as_dict(self):
        return {"min_slope": self.min_slope, "gradient_scale": self.gradient_scale,
                "threshold": self.threshold, "positive": self.positive}


def _boundary_adjacent(mesh: Mesh) -> np.ndarray:
    el = mesh.elements
    touches = (mesh.kind[el] == NodeKind.BOUNDARY).any(axis=1)
    nodes = np.unique(el[touches].reshape(-1))
    return nodes[mesh.kind[nodes] == NodeKind.INTERIOR]


def hopf_check(g: ReferenceG) -> HopfResult:
    """Smallest normal slope of G at the boundary and the Hopf verdict.

    Numerically, the slope at a node next to the boundary is the one-sided
    quotient G/delta; the verdict is positive iff the minimum exceeds
    10 h times the median gradient magnitude over the collar.  Closed forms
    use the exact derivative on each boundary component.
    """
    if g.kind is GKind.RADIAL_EXTERIOR:
        raise ValueError("Hopf check needs a reference function vanishing on a boundary")
    if g.is_closed_form:
        radii = np.array([rb for rb, _ in _boundary_circles(g.domain)])
        _, dG, _ = g.evaluate(radii)
        m = float(dG.min())
        return HopfResult(m, float(np.median(dG)), 0.0, m > 0.0)
    mesh = g.field.mesh
    adj = _boundary_adjacent(mesh)
    if len(adj) == 0:
        raise ValueError("no nodes adjacent to the boundary")
    slopes = g.field.values[adj] / mesh.delta[adj]
    _, gn, _ = g.nodal()
    scale = float(np.median(gn[mesh.free]))
    thr = 10.0 * mesh.h * scale
    m = float(slopes.min())
    return HopfResult(m, scale, thr, m > thr)


@dataclass(frozen=True)
class RatioBand:
    level: float
    lo: float
    hi: float
    count: int

    def as_dict(self):
        return {"level": self.level, "min": self.lo, "max": self.hi, "count": self.count}


def ratio_asymptotics(g: ReferenceG, radii, mode: str = "boundary", samples: int = 64) -> list[RatioBand]:
    """Extremes of |grad G| delta / G (boundary) or |grad G| |x| / G (infinity) per band.

    Boundary bands are {level/2 < delta <= level}; infinity bands are
    {level <= |x| < 2 level}.  Closed forms are sampled at ``samples``
    log-spaced radii per band, numerical G at its interior mesh nodes.
    """
    if mode not in ("boundary", "infinity"):
        raise ValueError("mode must be 'boundary' or 'infinity'")
    out = []
    for level in radii:
        level = float(level)
        if g.is_closed_form:
            if mode == "boundary":
                lo_b, hi_b = level / 2.0, level
                rb, side = _boundary_circles(g.domain)[0]
                dist = np.geomspace(lo_b * (1 + 1e-9), hi_b, samples)
                r = rb + side * dist
                weight = dist
            else:
                r = np.geomspace(level, 2.0 * level * (1 - 1e-9), samples)
                weight = r
            G, dG, _ = g.evaluate(r)
        else:
            mesh = g.field.mesh
            G, dG, _ = g.nodal()
            if mode == "boundary":
                sel = mesh.free & (mesh.delta > level / 2.0) & (mesh.delta <= level)
                weight = mesh.delta[sel]
            else:
                rad = mesh.radius()
                sel = mesh.free & (rad >= level) & (rad < 2.0 * level)
                weight = rad[sel]
            G, dG = G[sel], dG[sel]
        if len(G) == 0:
            raise EmptyBandError(f"no samples in the band at level {level}")
        if np.any(G <= 0):
            raise ValueError("reference function is not positive in the band")
        ratio = dG * weight / G
        out.append(RatioBand(level, float(ratio.min()), float(ratio.max()), int(len(ratio))))
    return out

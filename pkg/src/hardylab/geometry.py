"""Domain catalog, distance to the boundary and boundary projection.

Every shape exposes vectorised ``signed_distance`` (positive inside) and
``closest_point`` (nearest boundary point plus inner unit normal) that work for
points on either side of the boundary.  The public operations ``distance`` and
``project_boundary`` add the membership check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "OutsideDomainError",
    "BoundaryPoint",
    "DomainSpec",
    "Interval",
    "Disk",
    "Annulus",
    "Dumbbell",
    "ParabolicGraph",
    "ExteriorBall",
    "distance",
    "project_boundary",
    "tangent_gap_diagnostic",
    "collar",
    "make_domain",
    "CATALOG",
]

TWO_PI = 2.0 * math.pi


class OutsideDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryPoint:
    position: np.ndarray
    inner_normal: np.ndarray


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1:
        if x.ndim >= 1 and x.shape[-1] == 1 and x.ndim > 1:
            x = x[..., 0]
        return x
    if x.shape[-1] != dim:
        raise ValueError(f"expected points with trailing dimension {dim}, got {x.shape}")
    return x


# ---------------------------------------------------------------- pieces
# Piecewise boundaries are built from segments and circular arcs; each piece
# knows its inner normal so distances, projections and signs are exact.

@dataclass(frozen=True)
class _Segment:
    a: tuple
    b: tuple
    normal: tuple  # inner unit normal

    def nearest(self, x):
        a = np.asarray(self.a)
        b = np.asarray(self.b)
        ab = b - a
        t = ((x - a) @ ab) / (ab @ ab)
        t = np.clip(t, 0.0, 1.0)
        P = a + t[..., None] * ab
        N = np.broadcast_to(np.asarray(self.normal, dtype=float), P.shape)
        return P, N.copy()

    def scaled(self, s):
        return _Segment(tuple(s * np.asarray(self.a)), tuple(s * np.asarray(self.b)), self.normal)


@dataclass(frozen=True)
class _Arc:
    center: tuple
    radius: float
    start: float  # angle in radians
    sweep: float  # counter-clockwise extent, > 0
    inward: bool  # True if the domain lies on the center side

    def nearest(self, x):
        c = np.asarray(self.center)
        v = x - c
        ang = np.arctan2(v[..., 1], v[..., 0])
        rel = np.mod(ang - self.start, TWO_PI)
        on = rel <= self.sweep
        u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        P_on = c + self.radius * u
        e0 = c + self.radius * np.array([math.cos(self.start), math.sin(self.start)])
        e1a = self.start + self.sweep
        e1 = c + self.radius * np.array([math.cos(e1a), math.sin(e1a)])
        d0 = np.linalg.norm(x - e0, axis=-1)
        d1 = np.linalg.norm(x - e1, axis=-1)
        P_end = np.where((d0 <= d1)[..., None], e0, e1)
        P = np.where(on[..., None], P_on, P_end)
        radial = (P - c) / self.radius
        N = -radial if self.inward else radial
        return P, N

    def scaled(self, s):
        return _Arc(tuple(s * np.asarray(self.center)), s * self.radius, self.start, self.sweep, self.inward)


def _nearest_over_pieces(pieces, x):
    best_d = None
    for piece in pieces:
        P, N = piece.nearest(x)
        d = np.linalg.norm(x - P, axis=-1)
        if best_d is None:
            best_d, best_P, best_N = d, P, N
        else:
            # strict inequality keeps the earliest piece on ties
            take = d < best_d - 1e-15
            best_d = np.where(take, d, best_d)
            best_P = np.where(take[..., None], P, best_P)
            best_N = np.where(take[..., None], N, best_N)
    return best_d, best_P, best_N


# ---------------------------------------------------------------- shapes

@dataclass(frozen=True)
class DomainSpec:
    """Base class for catalog shapes."""

    name: str = field(init=False, default="domain")
    regularity_gamma: float = field(init=False, default=1.0)
    is_exterior: bool = field(init=False, default=False)
    dim: int = field(init=False, default=2)

    # --- to be provided by subclasses
    def contains(self, x):
        raise NotImplementedError

    def closest_point(self, x):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def scaled(self, s):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    @property
    def inradius(self) -> float:
        raise NotImplementedError

    # radially symmetric shapes override these
    radial = False
    # shapes invariant under x -> -x and y -> -y
    quadrant_symmetric = False

    def radial_interval(self):
        raise TypeError(f"{self.name} is not radially symmetric")

    def radial_delta(self, r):
        raise TypeError(f"{self.name} is not radially symmetric")

    # --- shared
    def unsigned_distance(self, x):
        x = _as_points(x, self.dim)
        P, _ = self.closest_point(x)
        if self.dim == 1:
            return np.abs(x - P)
        return np.linalg.norm(x - P, axis=-1)

    def signed_distance(self, x):
        x = _as_points(x, self.dim)
        d = self.unsigned_distance(x)
        return np.where(self.contains(x), d, -d)

    def describe(self) -> dict:
        return {"shape": self.name, **self.params(), "regularity_gamma": self.regularity_gamma,
                "is_exterior": self.is_exterior}


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be > 0, got {v}")


@dataclass(frozen=True)
class Interval(DomainSpec):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "name", "interval")
        object.__setattr__(self, "dim", 1)
        if not self.b > self.a:
            raise ValueError("Interval requires b > a")

    radial = True

    def contains(self, x):
        x = _as_points(x, 1)
        return (x > self.a) & (x < self.b)

    def closest_point(self, x):
        x = _as_points(x, 1)
        mid = 0.5 * (self.a + self.b)
        left = x <= mid
        P = np.where(left, self.a, self.b)
        N = np.where(left, 1.0, -1.0)
        return P, N

    def unsigned_distance(self, x):
        x = _as_points(x, 1)
        return np.minimum(np.abs(x - self.a), np.abs(self.b - x))

    def bounding_box(self):
        return (self.a, self.b)

    def scaled(self, s):
        return Interval(s * self.a, s * self.b)

    def params(self):
        return {"a": self.a, "b": self.b}

    @property
    def inradius(self):
        return 0.5 * (self.b - self.a)

    def radial_interval(self):
        return self.a, self.b, "dirichlet", "dirichlet"

    def radial_delta(self, r):
        return np.minimum(r - self.a, self.b - r)


@dataclass(frozen=True)
class Disk(DomainSpec):
    R: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "name", "disk")
        _check_positive(R=self.R)

    radial = True
    quadrant_symmetric = True

    def contains(self, x):
        x = _as_points(x, 2)
        return np.hypot(x[..., 0], x[..., 1]) < self.R

    def closest_point(self, x):
        x = _as_points(x, 2)
        ang = np.arctan2(x[..., 1], x[..., 0])  # center maps to angle 0
        u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        return self.R * u, -u

    def unsigned_distance(self, x):
        x = _as_points(x, 2)
        return np.abs(self.R - np.hypot(x[..., 0], x[..., 1]))

    def bounding_box(self):
        return (-self.R, self.R, -self.R, self.R)

    def scaled(self, s):
        return Disk(s * self.R)

    def params(self):
        return {"R": self.R}

    @property
    def inradius(self):
        return self.R

    def radial_interval(self):
        return 0.0, self.R, "center", "dirichlet"

    def radial_delta(self, r):
        return self.R - r


@dataclass(frozen=True)
class Annulus(DomainSpec):
    r: float = 1.0
    R: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "name", "annulus")
        _check_positive(r=self.r, R=self.R)
        if not self.R > self.r:
            raise ValueError("Annulus requires R > r")

    radial = True
    quadrant_symmetric = True

    def contains(self, x):
        x = _as_points(x, 2)
        rho = np.hypot(x[..., 0], x[..., 1])
        return (rho > self.r) & (rho < self.R)

    def closest_point(self, x):
        x = _as_points(x, 2)
        rho = np.hypot(x[..., 0], x[..., 1])
        ang = np.arctan2(x[..., 1], x[..., 0])
        u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        # ties on the mid circle go to the inner circle
        inner = np.abs(rho - self.r) <= np.abs(self.R - rho)
        P = np.where(inner[..., None], self.r * u, self.R * u)
        N = np.where(inner[..., None], u, -u)
        return P, N

    def unsigned_distance(self, x):
        x = _as_points(x, 2)
        rho = np.hypot(x[..., 0], x[..., 1])
        return np.minimum(np.abs(rho - self.r), np.abs(self.R - rho))

    def bounding_box(self):
        return (-self.R, self.R, -self.R, self.R)

    def scaled(self, s):
        return Annulus(s * self.r, s * self.R)

    def params(self):
        return {"r": self.r, "R": self.R}

    @property
    def inradius(self):
        return 0.5 * (self.R - self.r)

    def radial_interval(self):
        return self.r, self.R, "dirichlet", "dirichlet"

    def radial_delta(self, r):
        return np.minimum(r - self.r, self.R - r)


@dataclass(frozen=True)
class ExteriorBall(DomainSpec):
    R: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "name", "exterior_ball")
        object.__setattr__(self, "is_exterior", True)
        _check_positive(R=self.R)

    radial = True
    quadrant_symmetric = True

    def contains(self, x):
        x = _as_points(x, 2)
        return np.hypot(x[..., 0], x[..., 1]) > self.R

    def closest_point(self, x):
        x = _as_points(x, 2)
        ang = np.arctan2(x[..., 1], x[..., 0])
        u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        return self.R * u, u

    def unsigned_distance(self, x):
        x = _as_points(x, 2)
        return np.abs(np.hypot(x[..., 0], x[..., 1]) - self.R)

    def bounding_box(self, r_max=None):
        m = 4.0 * self.R if r_max is None else r_max
        return (-m, m, -m, m)

    def scaled(self, s):
        return ExteriorBall(s * self.R)

    def params(self):
        return {"R": self.R}

    @property
    def inradius(self):
        return math.inf

    def radial_interval(self):
        return self.R, math.inf, "dirichlet", "free"

    def radial_delta(self, r):
        return r - self.R


@dataclass(frozen=True)
class Dumbbell(DomainSpec):
    """Two disks joined by a straight neck with circular fillets (C^{1,1}).

    ``neck_length`` is the gap between the two bulbs along the axis.
    """

    bulb_radius: float = 1.0
    neck_half_width: float = 0.15
    neck_length: float = 1.5
    fillet_radius: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "name", "dumbbell")
        _check_positive(bulb_radius=self.bulb_radius, neck_half_width=self.neck_half_width,
                        neck_length=self.neck_length, fillet_radius=self.fillet_radius)
        if not self.neck_half_width < self.bulb_radius:
            raise ValueError("Dumbbell neck half-width must be smaller than the bulb radius")
        R, w, rho = self.bulb_radius, self.neck_half_width, self.fillet_radius
        cx = 0.5 * self.neck_length + R
        xf = cx - math.sqrt((R + rho) ** 2 - (w + rho) ** 2)
        if xf <= 0:
            raise ValueError("fillet radius too large for this neck length")
        F = np.array([xf, w + rho])
        C = np.array([cx, 0.0])
        T = F + rho * (C - F) / np.linalg.norm(C - F)
        object.__setattr__(self, "_geom", {"cx": cx, "xf": xf, "T": T})
        phi = math.atan2(C[1] - F[1], C[0] - F[0])  # in (-pi/2, 0)
        psi = math.atan2(T[1] - C[1], T[0] - C[0])  # in (pi/2, pi)
        pieces = [
            _Segment((-xf, w), (xf, w), (0.0, -1.0)),
            _Segment((-xf, -w), (xf, -w), (0.0, 1.0)),
            # right side: fillets then bulb
            _Arc((xf, w + rho), rho, -0.5 * math.pi, phi + 0.5 * math.pi, False),
            _Arc((xf, -(w + rho)), rho, -phi, phi + 0.5 * math.pi, False),
            _Arc((cx, 0.0), R, -psi, 2 * psi, True),
            # left side by mirror symmetry x -> -x
            _Arc((-xf, w + rho), rho, math.pi - phi, phi + 0.5 * math.pi, False),
            _Arc((-xf, -(w + rho)), rho, 0.5 * math.pi, phi + 0.5 * math.pi, False),
            _Arc((-cx, 0.0), R, math.pi - psi, 2 * psi, True),
        ]
        object.__setattr__(self, "_pieces", tuple(pieces))

    def contains(self, x):
        x = _as_points(x, 2)
        g = self._geom
        R, w, rho = self.bulb_radius, self.neck_half_width, self.fillet_radius
        ax = np.abs(x[..., 0])
        ay = np.abs(x[..., 1])
        in_bulb = np.hypot(ax - g["cx"], x[..., 1]) < R
        s = np.clip(ax - g["xf"], 0.0, rho)
        yb = np.where(ax <= g["xf"], w, w + rho - np.sqrt(np.maximum(rho * rho - s * s, 0.0)))
        in_neck = (ax <= g["T"][0]) & (ay < yb)
        return in_bulb | in_neck

    def closest_point(self, x):
        x = _as_points(x, 2)
        _, P, N = _nearest_over_pieces(self._pieces, x)
        return P, N

    quadrant_symmetric = True

    def bounding_box(self):
        g = self._geom
        R = self.bulb_radius
        return (-g["cx"] - R, g["cx"] + R, -R, R)

    def scaled(self, s):
        return Dumbbell(s * self.bulb_radius, s * self.neck_half_width, s * self.neck_length,
                        s * self.fillet_radius)

    def params(self):
        return {"bulb_radius": self.bulb_radius, "neck_half_width": self.neck_half_width,
                "neck_length": self.neck_length, "fillet_radius": self.fillet_radius}

    @property
    def inradius(self):
        return self.bulb_radius

    @property
    def bulb_centers(self):
        cx = self._geom["cx"]
        return np.array([[cx, 0.0], [-cx, 0.0]])


@dataclass(frozen=True)
class ParabolicGraph(DomainSpec):
    """{(x, y): |x|^(1+gamma) < y < height}.

    The graph part is C^{1,gamma} at the origin; the two corners where the
    graph meets the lid are only Lipschitz.
    """

    gamma: float = 0.5
    height: float = 1.0
    samples_per_unit: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "name", "parabolic_graph")
        _check_positive(gamma=self.gamma, height=self.height)
        if self.gamma > 1.0:
            raise ValueError("ParabolicGraph gamma must lie in (0, 1]")
        object.__setattr__(self, "regularity_gamma", float(self.gamma))
        a = self.height ** (1.0 / (1.0 + self.gamma))
        object.__setattr__(self, "_a", a)
        # arc length of the graph is at most a + height on each side
        n = int(self.samples_per_unit * 2 * (a + self.height)) + 1
        t = np.linspace(-a, a, n)
        object.__setattr__(self, "_t", t)
        pts = np.stack([t, self._g(t)], axis=-1)
        object.__setattr__(self, "_tree", cKDTree(pts))

    def _g(self, t):
        return np.abs(t) ** (1.0 + self.gamma)

    def _dg(self, t):
        return (1.0 + self.gamma) * np.sign(t) * np.abs(t) ** self.gamma

    def contains(self, x):
        x = _as_points(x, 2)
        y = x[..., 1]
        return (y > self._g(x[..., 0])) & (y < self.height)

    def _graph_nearest(self, x):
        flat = x.reshape(-1, 2)
        _, idx = self._tree.query(flat)
        t = self._t
        lo = t[np.maximum(idx - 1, 0)]
        hi = t[np.minimum(idx + 1, len(t) - 1)]

        def f(s):
            return (s - flat[:, 0]) ** 2 + (self._g(s) - flat[:, 1]) ** 2

        # golden-section refinement inside the bracketing samples
        gr = (math.sqrt(5.0) - 1.0) / 2.0
        c = hi - gr * (hi - lo)
        d = lo + gr * (hi - lo)
        fc, fd = f(c), f(d)
        for _ in range(80):
            left = fc < fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            d_new = np.where(left, c, lo + gr * (hi - lo))
            c_new = np.where(left, hi - gr * (hi - lo), d)
            fc, fd = np.where(left, f(c_new), fd), np.where(left, fc, f(d_new))
            c, d = c_new, d_new
        s = 0.5 * (lo + hi)
        # the vertex is a candidate the bracket may straddle
        s = np.where(f(np.zeros_like(s)) < f(s), 0.0, s)
        P = np.stack([s, self._g(s)], axis=-1)
        slope = self._dg(s)
        N = np.stack([-slope, np.ones_like(s)], axis=-1)
        N /= np.linalg.norm(N, axis=-1, keepdims=True)
        return P.reshape(x.shape), N.reshape(x.shape)

    def closest_point(self, x):
        x = _as_points(x, 2)
        Pg, Ng = self._graph_nearest(x)
        lid = _Segment((-self._a, self.height), (self._a, self.height), (0.0, -1.0))
        Pl, Nl = lid.nearest(x)
        dg = np.linalg.norm(x - Pg, axis=-1)
        dl = np.linalg.norm(x - Pl, axis=-1)
        take = dl < dg
        return np.where(take[..., None], Pl, Pg), np.where(take[..., None], Nl, Ng)

    def bounding_box(self):
        return (-self._a, self._a, 0.0, self.height)

    def scaled(self, s):
        # {y > |x|^(1+g)} is not dilation invariant; scaling changes the graph
        raise NotImplementedError("ParabolicGraph has no closed-form dilation in the catalog")

    def params(self):
        return {"gamma": self.gamma, "height": self.height}

    @property
    def inradius(self):
        return 0.5 * self.height


CATALOG = {
    "interval": Interval,
    "disk": Disk,
    "annulus": Annulus,
    "dumbbell": Dumbbell,
    "parabolic_graph": ParabolicGraph,
    "exterior_ball": ExteriorBall,
}


def make_domain(name: str, **params) -> DomainSpec:
    try:
        cls = CATALOG[name.lower()]
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(CATALOG)}") from None
    return cls(**params)


# ---------------------------------------------------------------- operations

def distance(d: DomainSpec, x) -> np.ndarray | float:
    """Euclidean distance to the boundary for points inside ``d``."""
    x = _as_points(x, d.dim)
    inside = d.contains(x)
    if not np.all(inside):
        raise OutsideDomainError(f"point(s) outside {d.name}: {np.asarray(x)[~inside][:3]}")
    out = d.unsigned_distance(x)
    return float(out) if np.ndim(out) == 0 else out


def project_boundary(d: DomainSpec, x) -> BoundaryPoint:
    """Nearest boundary point and inner unit normal for points inside ``d``.

    Ties (cut locus) resolve deterministically: the smallest polar angle for
    disks, the inner circle on the annulus mid-circle, the first catalog piece
    for piecewise boundaries.
    """
    x = _as_points(x, d.dim)
    if not np.all(d.contains(x)):
        raise OutsideDomainError(f"point(s) outside {d.name}")
    P, N = d.closest_point(x)
    return BoundaryPoint(np.asarray(P), np.asarray(N))


def tangent_gap_diagnostic(d: DomainSpec, P, radii, n_radial: int = 64, n_angular: int = 256):
    """sup over sampled x in the domain, |x-P| <= r, of |dist(x, Pi) - delta(x)| / |x - P|.

    ``Pi`` is the tangent line at the boundary point ``P``.  Returns a list of
    ``(r, ratio)`` pairs.
    """
    if d.dim == 1:
        P = float(np.asarray(P, dtype=float).reshape(-1)[0])
        if abs(float(d.signed_distance(np.array([P]))[0])) > 1e-12:
            raise ValueError(f"point {P} is not on the boundary of {d.name}")
        out = []
        for r in radii:
            xs = P + r * np.linspace(-1.0, 1.0, 2 * n_radial + 1)
            xs = xs[d.contains(xs)]
            gap = np.abs(np.abs(xs - P) - d.unsigned_distance(xs)) / np.abs(xs - P)
            out.append((float(r), float(gap.max()) if len(gap) else float("nan")))
        return out
    P = np.asarray(P, dtype=float)
    if abs(float(d.signed_distance(P[None, :])[0])) > 1e-9 * max(1.0, np.linalg.norm(P)):
        raise ValueError(f"point {P} is not on the boundary of {d.name}")
    _, nu = d.closest_point(P[None, :])
    nu = nu[0]
    out = []
    for r in radii:
        rho = r * (np.arange(1, n_radial + 1) / n_radial)
        th = np.linspace(0.0, TWO_PI, n_angular, endpoint=False)
        pts = P + rho[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)[None, :, :]
        pts = pts.reshape(-1, 2)
        pts = pts[d.contains(pts)]
        if len(pts) == 0:
            out.append((float(r), float("nan")))
            continue
        plane = np.abs((pts - P) @ nu)
        delta = d.unsigned_distance(pts)
        ratio = np.abs(plane - delta) / np.linalg.norm(pts - P, axis=-1)
        out.append((float(r), float(ratio.max())))
    return out


def collar(d: DomainSpec, x, width: float | None = None, beyond: float | None = None):
    """Mask of points in the boundary collar ``{delta < width}``.

    For exterior shapes ``beyond=M`` selects ``{|x| > M}`` instead (or in
    addition, when both are given the union is returned).
    """
    if width is None and beyond is None:
        raise ValueError("give a collar width and/or an exterior radius")
    x = _as_points(x, d.dim)
    inside = d.contains(x)
    mask = np.zeros(inside.shape, dtype=bool)
    if width is not None:
        if not width > 0:
            raise ValueError("collar width must be positive")
        if not d.is_exterior and width >= d.inradius:
            warnings.warn(f"collar width {width} >= inradius {d.inradius}: collar covers the whole domain",
                          stacklevel=2)
        mask |= inside & (d.unsigned_distance(x) < width)
    if beyond is not None:
        if not d.is_exterior:
            raise ValueError("the far-field region only exists for exterior shapes")
        rad = np.abs(x) if d.dim == 1 else np.linalg.norm(x, axis=-1)
        mask |= inside & (rad > beyond)
    return mask

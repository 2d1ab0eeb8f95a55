"""Meshes, grid fields, p-Dirichlet energy, discrete p-Laplacian and singular-weight quadrature.

Two discretizations share one interface:

* ``Cartesian2D``: lattice nodes of spacing ``h``; nodes within ``snap*h`` of
  the boundary are moved onto it and carry Dirichlet data, each lattice square
  is split into two P1 triangles (Courant split, which reproduces the 5-point
  Laplacian for p=2 at regular nodes).
* ``Radial1D``: P1 elements in the radial variable with the exact measure
  ``omega * r^(n-1) dr``; used for intervals and radially symmetric shapes.

Every mesh stores element gradient operators, element measures and lumped
nodal measures, so energies and p-Laplacians are assembled the same way.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma as gamma_fn
from scipy.special import zeta as zeta_fn

from .geometry import DomainSpec
from .scalars import PExponent, _pe

__all__ = [
    "Mode",
    "Scheme",
    "NodeKind",
    "Mesh",
    "GridField",
    "QuadratureRule",
    "DegenerateMeshError",
    "SingularIntegralError",
    "KAPPA",
    "build_cartesian_mesh",
    "build_radial_mesh",
    "build_mesh",
    "radial_mesh_from_nodes",
    "sphere_measure",
    "sample",
    "grad",
    "element_gradients",
    "p_energy",
    "weighted_p_norm",
    "discrete_p_laplacian",
    "rayleigh_quotient",
    "quadrature_energy",
    "stiffness_matrix",
    "weight_vector",
    "dump_grid",
]

KAPPA = 1e-9


class DegenerateMeshError(ValueError):
    """Mesh has no free nodes or no elements."""


class SingularIntegralError(ArithmeticError):
    """Non-finite value met while integrating against the singular weight."""


class Mode(enum.Enum):
    CARTESIAN_2D = "cartesian2d"
    RADIAL_1D = "radial1d"


class Scheme(enum.Enum):
    MIDPOINT = "midpoint"
    NODE_SUM = "node_sum"
    CORRECTED = "corrected"   # node sum with power-law end corrections (Radial1D)


class NodeKind(enum.IntEnum):
    INTERIOR = 0
    BOUNDARY = 1   # Dirichlet 0 on the domain boundary
    INTERFACE = 2  # Dirichlet data on an inner collar interface


@dataclass(frozen=True)
class QuadratureRule:
    """Singular-weight quadrature: nodes with delta <= epsilon_strip are dropped.

    With ``ramp`` the cut-off is smoothed linearly over one grid spacing,
    which keeps eigenvalues continuous in ``epsilon_strip``.  ``CORRECTED``
    removes the leading boundary-layer error of the node sum (and of the P1
    energy in ``rayleigh_quotient``) for fields behaving like ``C delta^a``
    at the Dirichlet ends of a Radial1D mesh; it needs ``epsilon_strip = 0``.
    """

    epsilon_strip: float = 0.0
    scheme: Scheme = Scheme.NODE_SUM
    ramp: bool = False

    def __post_init__(self):
        if self.epsilon_strip < 0:
            raise ValueError("epsilon_strip must be >= 0")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: DomainSpec
    mode: Mode
    h: float
    nodes: np.ndarray          # (N, 2) or (N,) radial coordinate
    index: np.ndarray          # (N, 2) lattice index or (N,) radial index
    kind: np.ndarray           # NodeKind per node
    elements: np.ndarray       # (E, 3) triangles or (E, 2) segments
    elem_measure: np.ndarray   # (E,)
    grad_ops: tuple            # sparse (E, N) per spatial component
    node_measure: np.ndarray   # lumped measure (N,)
    delta: np.ndarray          # distance to the boundary at nodes (N,)
    elem_delta: np.ndarray     # distance to the boundary at element centroids (E,)
    n: int = 2                 # ambient dimension (radial weight r^(n-1))
    collar_width: float | None = None
    r_max: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def free(self) -> np.ndarray:
        return self.kind == NodeKind.INTERIOR

    @property
    def num_nodes(self) -> int:
        return len(self.kind)

    @property
    def dim(self) -> int:
        return 2 if self.mode is Mode.CARTESIAN_2D else 1

    def radius(self) -> np.ndarray:
        """Distance of nodes to the origin (radial coordinate)."""
        if self.mode is Mode.RADIAL_1D:
            return np.abs(self.nodes)
        return np.hypot(self.nodes[:, 0], self.nodes[:, 1])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)


@dataclass(frozen=True, eq=False)
class GridField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.num_nodes,):
            raise ValueError(f"field has shape {v.shape}, mesh has {self.mesh.num_nodes} nodes")
        object.__setattr__(self, "values", v)

    @property
    def mask(self) -> np.ndarray:
        return self.mesh.kind

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def domain(self) -> DomainSpec:
        return self.mesh.domain

    @property
    def mode(self) -> Mode:
        return self.mesh.mode

    def with_values(self, values) -> "GridField":
        return GridField(self.mesh, values)

    def __mul__(self, c: float) -> "GridField":
        return GridField(self.mesh, c * self.values)

    __rmul__ = __mul__


# ---------------------------------------------------------------- mesh builders

def _triangle_grad_ops(nodes, tris):
    """Element gradient operators and areas for P1 triangles."""
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    e1 = p1 - p0
    e2 = p2 - p0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    # gradients of barycentric coordinates
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    g0 = -(g1 + g2)
    E = len(tris)
    N = len(nodes)
    rows = np.repeat(np.arange(E), 3)
    cols = tris.reshape(-1)
    ops = []
    for k in range(2):
        data = np.stack([g0[:, k], g1[:, k], g2[:, k]], axis=1).reshape(-1)
        ops.append(sp.csr_matrix((data, (rows, cols)), shape=(E, N)))
    return tuple(ops), area


def _lumped(elements, measure, N):
    k = elements.shape[1]
    return np.bincount(elements.reshape(-1), weights=np.repeat(measure / k, k), minlength=N)


def build_cartesian_mesh(
    d: DomainSpec,
    h: float,
    *,
    collar_width: float | None = None,
    r_max: float | None = None,
    snap: float = 0.5,
    outer_dirichlet: bool = False,
    quadrant: bool = False,
) -> Mesh:
    """Snapped Courant triangulation of ``d`` (or of its collar ``{delta < collar_width}``).

    Exterior shapes are truncated to the box ``[-r_max, r_max]^2`` whose edges
    are left free (natural boundary condition) unless ``outer_dirichlet``.
    ``quadrant`` meshes only ``x >= 0, y >= 0`` of a shape symmetric in both
    axes, with natural conditions on the axes: functions even in x and y are
    represented exactly, and every energy or mass is a quarter of the full one.
    """
    if d.dim != 2:
        raise ValueError("Cartesian2D meshes need a planar domain")
    if not h > 0:
        raise ValueError("h must be positive")
    if d.is_exterior:
        if r_max is None:
            raise ValueError("exterior shapes need r_max")
        box = (-r_max, r_max, -r_max, r_max)
    else:
        box = d.bounding_box()
    i0 = math.floor(box[0] / h) - 1
    i1 = math.ceil(box[1] / h) + 1
    j0 = math.floor(box[2] / h) - 1
    j1 = math.ceil(box[3] / h) + 1
    I, J = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    pts = np.stack([I * h, J * h], axis=-1).reshape(-1, 2)
    lat = np.stack([I, J], axis=-1).reshape(-1, 2)
    if d.is_exterior:
        keep_box = np.all(np.abs(pts) <= r_max + 1e-12 * r_max, axis=1)
    else:
        keep_box = np.ones(len(pts), dtype=bool)
    if quadrant:
        if not getattr(d, "quadrant_symmetric", False):
            raise ValueError(f"{d.name} is not symmetric in both axes")
        keep_box &= np.all(lat >= 0, axis=1)

    sd = d.signed_distance(pts)
    tol = snap * h
    kind = np.full(len(pts), -1, dtype=np.int8)  # -1 outside
    coords = pts.copy()
    kind[(sd > tol) & keep_box] = NodeKind.INTERIOR
    on_bd = (np.abs(sd) <= tol) & keep_box
    if np.any(on_bd):
        P, _ = d.closest_point(pts[on_bd])
        coords[on_bd] = P
        kind[on_bd] = NodeKind.BOUNDARY
    if collar_width is not None:
        w = collar_width
        inner = (kind == NodeKind.INTERIOR) & (sd > w + tol)
        kind[inner] = -1
        near_if = (kind == NodeKind.INTERIOR) & (np.abs(sd - w) <= tol)
        if np.any(near_if):
            P, N = d.closest_point(pts[near_if])
            coords[near_if] = P + w * N
            kind[near_if] = NodeKind.INTERFACE

    shape = I.shape
    K = kind.reshape(shape)
    present = K >= 0
    idx = np.arange(len(pts)).reshape(shape)
    a = idx[:-1, :-1]
    b = idx[1:, :-1]
    c = idx[1:, 1:]
    e = idx[:-1, 1:]
    pa, pb, pc, pe_ = present[:-1, :-1], present[1:, :-1], present[1:, 1:], present[:-1, 1:]
    tris = []
    # Courant split along (a, c) whenever possible
    m1 = pa & pb & pc
    m2 = pa & pc & pe_
    tris.append(np.stack([a[m1], b[m1], c[m1]], axis=1))
    tris.append(np.stack([a[m2], c[m2], e[m2]], axis=1))
    # squares missing corner a: use the other diagonal
    m3 = ~pa & pb & pc & pe_
    tris.append(np.stack([b[m3], c[m3], e[m3]], axis=1))
    # squares missing corner c
    m4 = pa & pb & ~pc & pe_
    tris.append(np.stack([a[m4], b[m4], e[m4]], axis=1))
    tris = np.concatenate(tris, axis=0)

    # drop elements with no free node (they carry no unknowns) and degenerate ones
    free_node = kind == NodeKind.INTERIOR
    has_free = free_node[tris].any(axis=1)
    tris = tris[has_free]
    _, area = _triangle_grad_ops(coords, tris)
    good = area > 1e-6 * h * h
    n_bad = int((~good).sum())
    tris = tris[good]

    # free nodes on the edge of the discrete domain would get a spurious
    # natural condition; pin them (Dirichlet 0) unless on the truncation box
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    bd_edges = uniq[counts == 1]
    bd_nodes = np.unique(bd_edges)
    leak = bd_nodes[kind[bd_nodes] == NodeKind.INTERIOR]
    truncated = np.zeros(len(pts), dtype=bool)
    if quadrant:
        leak = leak[~np.any(lat[leak] == 0, axis=1)]
    if d.is_exterior:
        on_box = np.any(np.abs(np.abs(coords[leak]) - r_max) <= 1e-9 * r_max, axis=1)
        if outer_dirichlet:
            truncated[leak[on_box]] = True
        else:
            leak = leak[~on_box]
    kind[leak] = NodeKind.BOUNDARY

    used = np.zeros(len(pts), dtype=bool)
    used[tris.reshape(-1)] = True
    used &= kind >= 0
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    tris = remap[tris]
    coords = coords[used]
    lat = lat[used]
    kind = kind[used].astype(np.int8)
    truncated = truncated[used]
    if not np.any(kind == NodeKind.INTERIOR) or len(tris) == 0:
        raise DegenerateMeshError(f"no interior nodes for {d.name} at h={h}")

    ops, area = _triangle_grad_ops(coords, tris)
    node_meas = _lumped(tris, area, len(coords))
    delta = np.where((kind == NodeKind.BOUNDARY) & ~truncated, 0.0, d.unsigned_distance(coords))
    elem_delta = d.unsigned_distance(coords[tris].mean(axis=1))
    info = {"snap": snap, "pinned_nodes": int(len(leak)), "dropped_degenerate": n_bad, "quadrant": quadrant}
    return Mesh(d, Mode.CARTESIAN_2D, h, coords, lat, kind, tris, area, ops, node_meas, delta, elem_delta,
                n=2, collar_width=collar_width, r_max=r_max, info=info)


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n=1)."""
    return 2.0 * math.pi ** (n / 2.0) / gamma_fn(n / 2.0)


def _radial_pieces(r0, r1, left, right, w):
    kinds = {"dirichlet": NodeKind.BOUNDARY, "center": NodeKind.INTERIOR, "free": NodeKind.INTERIOR}
    if w is None:
        return [(r0, r1, kinds[left], kinds[right])]
    pieces = []
    if left == "dirichlet":
        pieces.append((r0, r0 + w, NodeKind.BOUNDARY, NodeKind.INTERFACE))
    if right == "dirichlet":
        pieces.append((r1 - w, r1, NodeKind.INTERFACE, NodeKind.BOUNDARY))
    if len(pieces) == 2 and pieces[0][1] >= pieces[1][0]:
        raise ValueError("collar wider than half the radial gap")
    return pieces


def build_radial_mesh(
    d: DomainSpec,
    h: float,
    n: int | None = None,
    *,
    collar_width: float | None = None,
    r_max: float | None = None,
    grading: str = "auto",
    outer_dirichlet: bool = False,
) -> Mesh:
    """P1 mesh in the radial variable for Interval, Disk, Annulus and ExteriorBall.

    ``grading='log'`` spaces nodes as ``r_i = R exp(i h / R)`` (spacing ``h``
    at the boundary, proportional to ``r`` far out); ``'auto'`` uses it for
    exterior shapes and a uniform spacing otherwise.  With ``collar_width``
    only the boundary collar is meshed, with an interface node on
    ``delta = collar_width``.  ``outer_dirichlet`` pins the truncation node
    ``r = r_max`` of exterior shapes to zero instead of leaving it free.
    """
    if not d.radial:
        raise ValueError(f"Radial1D mode needs a radially symmetric shape, got {d.name}")
    if not h > 0:
        raise ValueError("h must be positive")
    r0, r1, left, right = d.radial_interval()
    if d.dim == 1:
        n, omega = 1, 1.0
    else:
        n = 2 if n is None else int(n)
        omega = sphere_measure(n)
    if d.is_exterior:
        if r_max is None and collar_width is None:
            raise ValueError("exterior shapes need r_max")
        r1 = r_max if r_max is not None else math.inf
    if grading == "auto":
        grading = "log" if d.is_exterior else "uniform"
    if grading not in ("log", "uniform"):
        raise ValueError(f"unknown grading {grading!r}")

    rs, kinds, segs = [], [], []
    offset = 0
    for a, b, ka, kb in _radial_pieces(r0, r1, left, right, collar_width):
        if grading == "log" and a > 0:
            m = max(1, int(math.ceil(a * math.log(b / a) / h)))
            r = a * np.exp(np.linspace(0.0, math.log(b / a), m + 1))
        else:
            m = max(1, int(round((b - a) / h)))
            r = np.linspace(a, b, m + 1)
        k = np.full(len(r), NodeKind.INTERIOR, dtype=np.int8)
        k[0], k[-1] = ka, kb
        rs.append(r)
        kinds.append(k)
        segs.append(offset + np.stack([np.arange(m), np.arange(1, m + 1)], axis=1))
        offset += len(r)
    r = np.concatenate(rs)
    kind = np.concatenate(kinds)
    segs = np.concatenate(segs)
    delta = np.maximum(d.radial_delta(r), 0.0)
    delta[kind == NodeKind.BOUNDARY] = 0.0
    if d.is_exterior and collar_width is None and outer_dirichlet:
        kind[-1] = NodeKind.BOUNDARY

    info = {"grading": grading, "omega": omega}
    return _radial_from_segments(d, h, r, kind, segs, n, omega, delta, collar_width, r_max, info)


def _radial_from_segments(d, h, r, kind, segs, n, omega, delta, collar_width, r_max, info):
    ra, rb = r[segs[:, 0]], r[segs[:, 1]]
    length = rb - ra
    meas = omega * (rb ** n - ra ** n) / n
    E, N = len(segs), len(r)
    rows = np.repeat(np.arange(E), 2)
    data = np.stack([-1.0 / length, 1.0 / length], axis=1).reshape(-1)
    op = sp.csr_matrix((data, (rows, segs.reshape(-1))), shape=(E, N))
    node_meas = _lumped(segs, meas, N)
    elem_delta = d.radial_delta(0.5 * (ra + rb))
    return Mesh(d, Mode.RADIAL_1D, h, r, np.arange(N), kind, segs, meas, (op,), node_meas, delta,
                elem_delta, n=n, collar_width=collar_width, r_max=r_max, info=info)


def radial_mesh_from_nodes(d: DomainSpec, r, n: int | None = None, *, fixed_ends: bool = True) -> Mesh:
    """Radial1D mesh on the given increasing radii (used for sampling closed forms).

    With ``fixed_ends`` the two end nodes are Dirichlet (kind INTERFACE) so
    every node in between gets a discrete p-Laplacian.
    """
    if not d.radial:
        raise ValueError(f"Radial1D mode needs a radially symmetric shape, got {d.name}")
    r = np.asarray(r, dtype=float)
    if r.ndim != 1 or len(r) < 3 or np.any(np.diff(r) <= 0):
        raise ValueError("radii must be a strictly increasing array of length >= 3")
    if d.dim == 1:
        n, omega = 1, 1.0
    else:
        n = 2 if n is None else int(n)
        omega = sphere_measure(n)
    kind = np.full(len(r), NodeKind.INTERIOR, dtype=np.int8)
    if fixed_ends:
        kind[0] = kind[-1] = NodeKind.INTERFACE
    segs = np.stack([np.arange(len(r) - 1), np.arange(1, len(r))], axis=1)
    delta = np.maximum(d.radial_delta(r), 0.0)
    h = float(np.min(np.diff(r)))
    return _radial_from_segments(d, h, r, kind, segs, n, omega, delta, None, None, {"grading": "given", "omega": omega})


def build_mesh(d: DomainSpec, h: float, mode: Mode | str | None = None, **kw) -> Mesh:
    """Dispatch on ``mode``; the default is Radial1D for intervals and Cartesian2D otherwise."""
    if mode is None:
        mode = Mode.RADIAL_1D if d.dim == 1 else Mode.CARTESIAN_2D
    mode = Mode(mode)
    if mode is Mode.RADIAL_1D:
        kw.pop("quadrant", None)
        return build_radial_mesh(d, h, **kw)
    kw.pop("n", None)
    kw.pop("grading", None)
    return build_cartesian_mesh(d, h, **kw)


# ---------------------------------------------------------------- fields

def sample(mesh: Mesh, func) -> GridField:
    """Evaluate ``func`` at the mesh nodes (radial coordinate or (N, 2) points)."""
    return GridField(mesh, np.asarray(func(mesh.nodes), dtype=float))


def _check_field(f: GridField):
    if not np.any(f.mesh.free):
        raise DegenerateMeshError("field has no interior nodes")


def element_gradients(f: GridField) -> np.ndarray:
    """Constant gradient on each element, shape (E, dim)."""
    return np.stack([op @ f.values for op in f.mesh.grad_ops], axis=1)


def grad(f: GridField) -> np.ndarray:
    """Nodal gradient, shape (N, dim).

    Cartesian2D uses a least-squares fit over the four lattice neighbours,
    which is the centered difference at regular nodes and one-sided where a
    neighbour is missing; it is exact for linear fields even at snapped
    nodes.  Radial1D uses the three-point formula on the (possibly graded)
    radial grid.
    """
    _check_field(f)
    mesh = f.mesh
    u = f.values
    if mesh.mode is Mode.RADIAL_1D:
        r = mesh.nodes
        g = np.empty_like(u)
        if len(r) < 2:
            raise DegenerateMeshError("need at least two nodes")
        hl = r[1:-1] - r[:-2]
        hr = r[2:] - r[1:-1]
        g[1:-1] = (-hr / (hl * (hl + hr)) * u[:-2] + (hr - hl) / (hl * hr) * u[1:-1]
                   + hl / (hr * (hl + hr)) * u[2:])
        g[0] = (u[1] - u[0]) / (r[1] - r[0])
        g[-1] = (u[-1] - u[-2]) / (r[-1] - r[-2])
        return g[:, None]
    # least squares over lattice neighbours, solved as 2x2 normal equations
    nb = _lattice_neighbours(mesh)
    X = mesh.nodes
    ok = nb >= 0
    safe = np.where(ok, nb, 0)
    dx = (X[safe] - X[:, None, :]) * ok[..., None]
    du = (u[safe] - u[:, None]) * ok
    M = np.einsum("nki,nkj->nij", dx, dx)
    b = np.einsum("nki,nk->ni", dx, du)
    det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    G = np.zeros((mesh.num_nodes, 2))
    good = np.abs(det) > 1e-12 * mesh.h ** 4
    G[good, 0] = (M[good, 1, 1] * b[good, 0] - M[good, 0, 1] * b[good, 1]) / det[good]
    G[good, 1] = (M[good, 0, 0] * b[good, 1] - M[good, 1, 0] * b[good, 0]) / det[good]
    return G


def _lattice_neighbours(mesh: Mesh) -> np.ndarray:
    """(N, 4) node ids of the east, west, north, south lattice neighbours (-1 if absent)."""
    cached = mesh.info.get("_lattice_nbrs")
    if cached is not None:
        return cached
    lat = mesh.index
    lo = lat.min(axis=0) - 1
    shape = lat.max(axis=0) - lo + 2
    table = -np.ones(shape, dtype=np.int64)
    table[lat[:, 0] - lo[0], lat[:, 1] - lo[1]] = np.arange(mesh.num_nodes)
    nb = np.empty((mesh.num_nodes, 4), dtype=np.int64)
    for s, (di, dj) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
        nb[:, s] = table[lat[:, 0] - lo[0] + di, lat[:, 1] - lo[1] + dj]
    mesh.info["_lattice_nbrs"] = nb
    return nb


def _flux_weight(gnorm2, p, kappa):
    if p == 2.0:
        return np.ones_like(gnorm2)
    if p < 2.0:
        return (gnorm2 + kappa * kappa) ** ((p - 2.0) / 2.0)
    return gnorm2 ** ((p - 2.0) / 2.0)


def p_energy(f: GridField, pe: PExponent) -> float:
    """sum over elements of |grad f|^p times the element measure."""
    _check_field(f)
    pe = _pe(pe)
    g = element_gradients(f)
    gn = np.sqrt(np.sum(g * g, axis=1))
    return float(np.sum(f.mesh.elem_measure * gn ** pe.p))


def _weights(mesh: Mesh, pe: PExponent, q: QuadratureRule):
    """Nodal weights A_i * delta_i^-p restricted to delta_i > epsilon_strip."""
    delta = mesh.delta
    if q.ramp and q.epsilon_strip > 0:
        theta = np.clip((delta - q.epsilon_strip) / mesh.h + 0.5, 0.0, 1.0)
    else:
        theta = (delta > q.epsilon_strip).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where((theta > 0) & (delta > 0), mesh.node_measure * delta ** (-pe.p) * theta, 0.0)
    return w


def weight_vector(mesh: Mesh, pe: PExponent, q: QuadratureRule | None = None) -> np.ndarray:
    """Lumped singular-weight vector used as the diagonal mass in eigen solves."""
    return _weights(mesh, _pe(pe), q or QuadratureRule())


def _energy_end_constant(a: float, p: float, terms: int = 4096) -> float:
    """lim_M [sum_{k<M} |(k+1)^a - k^a|^p - int_0^M |a t^(a-1)|^p dt] for the unit power law."""
    s = (a - 1.0) * p
    k = np.arange(terms, dtype=float)
    cell = np.abs((k + 1.0) ** a - k ** a) ** p
    exact = abs(a) ** p * ((k + 1.0) ** (s + 1.0) - k ** (s + 1.0)) / (s + 1.0)
    d = cell - exact
    # cell errors decay like k^(s-2); add the integral of that tail
    c = d[-1] / (terms - 0.5) ** (s - 2.0)
    return float(np.sum(d) + c * terms ** (s - 1.0) / (1.0 - s))


def _power_law_ends(f: GridField, pe: PExponent):
    """(jacobian, C, a, h1) for every Dirichlet end of a Radial1D mesh, from the two nearest nodes."""
    mesh = f.mesh
    if mesh.mode is not Mode.RADIAL_1D:
        raise ValueError("the corrected scheme needs a Radial1D mesh")
    out = []
    last = mesh.num_nodes - 1
    for b, step in ((0, 1), (last, -1)):
        if mesh.kind[b] != NodeKind.BOUNDARY or mesh.delta[b] != 0.0:
            continue
        i1, i2 = b + step, b + 2 * step
        d1, d2 = mesh.delta[i1], mesh.delta[i2]
        u1, u2 = abs(f.values[i1]), abs(f.values[i2])
        if not (u1 > 0 and u2 > 0 and d2 > d1 > 0):
            raise SingularIntegralError(f"cannot fit a power law at the end r={mesh.nodes[b]}")
        a = math.log(u2 / u1) / math.log(d2 / d1)
        if not (a - 1.0) * pe.p > -1.0:
            raise SingularIntegralError(f"|f|^p delta^-p is not integrable at r={mesh.nodes[b]} "
                                        f"(local exponent {a:.4g})")
        jac = mesh.node_measure[i1] / (0.5 * (abs(mesh.nodes[i2] - mesh.nodes[b])))
        out.append((jac, u1 / d1 ** a, a, d1))
    return out


def _corrected_mass(f: GridField, pe: PExponent) -> float:
    p = pe.p
    corr = 0.0
    for jac, C, a, h1 in _power_law_ends(f, pe):
        s = (a - 1.0) * p
        # node sum minus integral of C^p t^s is C^p h1^(1+s) zeta(-s)
        corr += jac * C ** p * h1 ** (1.0 + s) * float(zeta_fn(-s))
    return corr


def _corrected_energy(f: GridField, pe: PExponent) -> float:
    p = pe.p
    corr = 0.0
    for jac, C, a, h1 in _power_law_ends(f, pe):
        s = (a - 1.0) * p
        corr += jac * C ** p * h1 ** (1.0 + s) * _energy_end_constant(a, p)
    return corr


def weighted_p_norm(f: GridField, pe: PExponent, q: QuadratureRule | None = None) -> float:
    """Quadrature of |f|^p delta^-p over the part of the mesh with delta > epsilon_strip.

    Returns the integral itself (the p-th power of the weighted norm).
    """
    _check_field(f)
    pe = _pe(pe)
    q = q or QuadratureRule()
    mesh = f.mesh
    if q.scheme is Scheme.CORRECTED:
        if q.epsilon_strip != 0.0 or q.ramp:
            raise ValueError("the corrected scheme integrates down to the boundary (epsilon_strip = 0)")
        base = weighted_p_norm(f, pe, QuadratureRule())
        return base - _corrected_mass(f, pe)
    if q.scheme is Scheme.NODE_SUM:
        w = _weights(mesh, pe, q)
        terms = w * np.abs(f.values) ** pe.p
        loc = mesh.nodes
    else:
        el = mesh.elements
        uc = f.values[el].mean(axis=1)
        dc = mesh.elem_delta
        ok = dc > q.epsilon_strip
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(ok, mesh.elem_measure * np.abs(uc) ** pe.p * dc ** (-pe.p), 0.0)
        loc = mesh.centroids()
    bad = ~np.isfinite(terms)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SingularIntegralError(f"non-finite weighted integrand at {loc[k]}")
    return float(np.sum(terms))


def _flux_divergence(mesh: Mesh, u: np.ndarray, p: float, kappa: float):
    g = np.stack([op @ u for op in mesh.grad_ops], axis=1)
    g2 = np.sum(g * g, axis=1)
    wgt = _flux_weight(g2, p, kappa)
    flux = (mesh.elem_measure * wgt)[:, None] * g
    div = sum(op.T @ flux[:, k] for k, op in enumerate(mesh.grad_ops))
    degenerate = int(np.sum(g2 == 0.0)) if p < 2.0 else 0
    return div, degenerate


def discrete_p_laplacian(f: GridField, pe: PExponent, kappa: float = KAPPA, return_info: bool = False):
    """div(|grad f|^(p-2) grad f) at interior nodes, from element (staggered) fluxes.

    The value at node i is minus the derivative of the energy/p with respect to
    u_i, divided by the lumped nodal measure.  Dirichlet nodes get NaN.
    """
    _check_field(f)
    pe = _pe(pe)
    mesh = f.mesh
    div, degenerate = _flux_divergence(mesh, f.values, pe.p, kappa)
    out = np.full(mesh.num_nodes, np.nan)
    fr = mesh.free
    out[fr] = -div[fr] / mesh.node_measure[fr]
    field_ = GridField(mesh, out)
    if return_info:
        return field_, {"degenerate_elements": degenerate, "kappa": kappa if pe.p < 2 else 0.0}
    return field_


def quadrature_energy(f: GridField, pe: PExponent, q: QuadratureRule | None = None) -> float:
    """p-energy paired with rule ``q``: the end-corrected value under the corrected scheme."""
    num = p_energy(f, pe)
    if q is not None and q.scheme is Scheme.CORRECTED:
        num -= _corrected_energy(f, _pe(pe))
    return num


def rayleigh_quotient(f: GridField, pe: PExponent, q: QuadratureRule | None = None) -> float:
    den = weighted_p_norm(f, pe, q)
    if not den > 0:
        raise ZeroDivisionError("weighted norm vanishes")
    return quadrature_energy(f, pe, q) / den


def stiffness_matrix(mesh: Mesh, weights: np.ndarray | None = None) -> sp.csr_matrix:
    """sum_e w_e m_e D_e^T D_e; with unit weights this is the p=2 stiffness."""
    m = mesh.elem_measure if weights is None else mesh.elem_measure * weights
    W = sp.diags(m)
    K = sum(op.T @ W @ op for op in mesh.grad_ops)
    return K.tocsr()


# ---------------------------------------------------------------- output

def dump_grid(f: GridField, path, extra: dict | None = None) -> None:
    """Write ``path`` as CSV (i, j, x, y, mask, value) and ``path.json`` as sidecar."""
    mesh = f.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "mask", "value"])
        for k in range(mesh.num_nodes):
            if mesh.mode is Mode.CARTESIAN_2D:
                i, j = (int(v) for v in mesh.index[k])
                x, y = mesh.nodes[k]
            else:
                i, j = int(mesh.index[k]), 0
                x, y = mesh.nodes[k], 0.0
            w.writerow([i, j, repr(float(x)), repr(float(y)), NodeKind(mesh.kind[k]).name.lower(),
                        repr(float(f.values[k]))])
    meta = {
        "h": mesh.h,
        "mode": mesh.mode.value,
        "domain": mesh.domain.describe(),
        "n": mesh.n,
        "collar_width": mesh.collar_width,
        "r_max": mesh.r_max,
        "num_nodes": mesh.num_nodes,
        "num_elements": int(len(mesh.elements)),
    }
    if extra:
        meta.update(extra)
    with open(f"{path}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)

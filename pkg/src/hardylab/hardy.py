"""Hardy-constant estimation, the constant at infinity and the spectral-gap verdict.

``estimate_hardy`` minimizes the discrete Hardy quotient on a ladder of
truncations (an eps-strip where the weight is switched off, a truncation
radius R_max for exterior shapes, or both), extrapolates the ladder with the
log-box model of :mod:`hardylab.logbox`, repeats the ladder on a coarser mesh
(and a doubled R_max) for an error budget, and finally solves the untruncated
discrete problem for the minimizer.  ``lambda_infinity_bounds`` brackets the
constant at infinity between barrier certificates and concentrated trials.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .barriers import Sign, WeightKind, window_scan
from .discretization import (KAPPA, GridField, Mesh, Mode, QuadratureRule, build_mesh,
                             quadrature_energy, weight_vector, weighted_p_norm)
from .geometry import DomainSpec, Dumbbell, ParabolicGraph
from .logbox import LogBoxModel, ReducedLogBoxModel, boundary_end, infinity_end
from .pharmonic import exact_reference, radial_exterior_reference, solve_collar_green
from .scalars import (AlphaBranch, PExponent, _pe, alpha_of_lambda, exterior_alpha_pair,
                      exterior_threshold, hardy_one_d_constant, hardy_point_constant)
from .solvers import EigenResult, SolverError, el_residual, ground_state
from .trials import DEFAULT_S, TrialResult, trial_quotients

__all__ = [
    "GapVerdict",
    "CriticalEnd",
    "MeshParams",
    "jsonable",
    "LadderPoint",
    "HardyReport",
    "InfinityBounds",
    "SpotCheck",
    "critical_end",
    "hardy_threshold",
    "estimate_hardy",
    "lambda_infinity_bounds",
    "spectral_gap_verdict",
    "hardy_spotcheck",
    "GAP_FACTOR",
]

GAP_FACTOR = 3.0          # gap tolerance in units of the combined error
_REL_TIE = 1e-12


class GapVerdict(enum.Enum):
    GAP_POSITIVE = "GapPositive"
    NO_GAP = "NoGap"
    INCONCLUSIVE = "Inconclusive"


class CriticalEnd(enum.Enum):
    """Where near-minimizers concentrate when there is no gap."""

    BOUNDARY = "boundary"
    INFINITY = "infinity"
    BOTH = "both"


def critical_end(d: DomainSpec, pe: PExponent) -> CriticalEnd:
    pe = _pe(pe)
    if not d.is_exterior:
        return CriticalEnd.BOUNDARY
    cp, cs = hardy_one_d_constant(pe), hardy_point_constant(pe)
    if abs(cp - cs) <= _REL_TIE * max(cp, cs):
        return CriticalEnd.BOTH
    return CriticalEnd.BOUNDARY if cp < cs else CriticalEnd.INFINITY


def hardy_threshold(d: DomainSpec, pe: PExponent) -> float:
    """c_p for bounded shapes, c_{p,n} for exterior ones."""
    pe = _pe(pe)
    return exterior_threshold(pe) if d.is_exterior else hardy_one_d_constant(pe)


@dataclass(frozen=True)
class MeshParams:
    """Discretization and ladder settings.

    The eps-ladder is ``eps_max * eps_ratio^-k`` down to ``min_strip_cells * h``
    (or ``epsilons`` if given); the R_max-ladder is ``r_max * r_ratio^k`` for
    ``r_count`` values.  Lengths are absolute.  The default ``eps_max`` is
    ``min(0.2, feature_size / 2)`` so that no strip is wider than half the
    thinnest part of the shape.  ``n`` is the ambient dimension for Radial1D
    meshes (default: ``pe.n``).  ``quadrant`` meshes a quarter of shapes
    symmetric in both axes (default: whenever the shape allows it).
    """

    h: float
    mode: str | None = None
    eps_max: float | None = None
    eps_ratio: float = math.sqrt(2.0)
    min_strip_cells: float = 6.0
    epsilons: tuple | None = None
    r_max: float | None = None
    r_ratio: float = 2.0
    r_count: int = 6
    h_pair: bool = True
    r_doubling: bool = True
    kappa: float = KAPPA
    max_iter: int = 3000
    n: int | None = None
    quadrant: bool | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.eps_ratio > 1 or not self.r_ratio > 1:
            raise ValueError("ladder ratios must exceed 1")
        if self.epsilons is not None:
            e = np.asarray(self.epsilons, dtype=float)
            if len(e) == 0 or np.any(e <= 0) or np.any(np.diff(e) >= 0):
                raise ValueError("epsilons must be positive and strictly decreasing")
        if self.r_count < 1:
            raise ValueError("r_count must be >= 1")

    def eps_ladder(self, h: float | None = None, d: DomainSpec | None = None) -> list[float]:
        h = self.h if h is None else h
        floor = self.min_strip_cells * h * (1.0 - 1e-9)
        if self.epsilons is not None:
            return [float(e) for e in self.epsilons if e >= floor]
        if self.eps_max is not None:
            e = self.eps_max
        else:
            e = 0.2 if d is None else min(0.2, 0.5 * feature_size(d))
        out = []
        while e >= floor:
            out.append(e)
            e /= self.eps_ratio
        return out

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class LadderPoint:
    h: float
    epsilon: float
    r_max: float | None
    log_length: float
    value: float
    iterations: int
    residual: float
    converged: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class InfinityBounds:
    lower: float
    upper: float
    trials: list
    lower_boundary: float
    lower_infinity: float | None

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper,
                "lower_boundary": self.lower_boundary, "lower_infinity": self.lower_infinity,
                "trials": [list(t.as_tuple()) for t in self.trials]}


@dataclass
class HardyReport:
    domain: DomainSpec
    pe: PExponent
    h_p_estimate: float
    error: float
    error_terms: dict
    threshold: float
    critical_end: CriticalEnd
    upper_bound_trials: list
    lambda_infinity_lower: float
    lambda_infinity_upper: float
    gap_verdict: GapVerdict
    minimizer: GridField | None
    discrete_minimum: float
    el_residual: float
    mesh: dict
    ladders: dict
    fits: dict
    converged: bool
    notes: list = field(default_factory=list)

    @property
    def gap_tolerance(self) -> float:
        return GAP_FACTOR * self.error

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.describe(),
            "p": self.pe.p,
            "n": self.pe.n,
            "h_p_estimate": self.h_p_estimate,
            "error": self.error,
            "error_terms": self.error_terms,
            "gap_tolerance": self.gap_tolerance,
            "threshold": self.threshold,
            "critical_end": self.critical_end.value,
            "upper_bound_trials": [list(t.as_tuple()) for t in self.upper_bound_trials],
            "lambda_infinity_lower": self.lambda_infinity_lower,
            "lambda_infinity_upper": self.lambda_infinity_upper,
            "gap_verdict": self.gap_verdict.value,
            "discrete_minimum": self.discrete_minimum,
            "el_residual": self.el_residual,
            "mesh": self.mesh,
            "ladders": {k: [pt.as_dict() for pt in v] for k, v in self.ladders.items()},
            "fits": {k: (v.as_dict() if v is not None else None) for k, v in self.fits.items()},
            "converged": self.converged,
            "notes": list(self.notes),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(jsonable(self.to_dict()), sort_keys=True, **kw)


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------- ladders

def feature_size(d: DomainSpec) -> float:
    """Thinnest length scale of the shape: the neck half-width for dumbbells, else the inradius."""
    if isinstance(d, Dumbbell):
        return d.neck_half_width
    return d.inradius


def _mesh_for(d: DomainSpec, pe: PExponent, params: MeshParams, h: float, r_max: float | None) -> Mesh:
    mode = params.mode
    if mode is None and d.is_exterior:
        mode = Mode.RADIAL_1D
    kw = {}
    if mode is not None and Mode(mode) is Mode.RADIAL_1D and d.dim > 1:
        kw["n"] = params.n if params.n is not None else pe.n
    elif d.dim == 2 and pe.n != 2:
        raise ValueError(f"Cartesian2D meshes need n=2, got n={pe.n}")
    if d.is_exterior:
        kw["r_max"] = r_max
        kw["outer_dirichlet"] = pe.p < pe.n
    quad = params.quadrant
    kw["quadrant"] = d.quadrant_symmetric if quad is None else quad
    return build_mesh(d, h, mode, **kw)


def _solve(mesh, pe, eps, params, u0) -> EigenResult:
    w = weight_vector(mesh, pe, QuadratureRule(epsilon_strip=eps, ramp=eps > 0))
    return ground_state(mesh, pe.p, w, u0=u0, kappa=params.kappa, max_iter=params.max_iter)


def _ladder_plan(d, pe, params, h, r_base):
    """(epsilon, r_max, log_length) triples for the critical end(s)."""
    end = critical_end(d, pe)
    if end is CriticalEnd.BOUNDARY:
        return [(e, r_base, math.log(1.0 / e)) for e in params.eps_ladder(h, d)]
    radii = [r_base * params.r_ratio ** k for k in range(params.r_count)]
    if end is CriticalEnd.INFINITY:
        return [(0.0, R, math.log(R)) for R in radii]
    eps = params.eps_ladder(h, d)
    m = min(len(eps), len(radii))
    return [(eps[k], radii[k], math.log(radii[k] / eps[k])) for k in range(m)]


def _run_ladder(d, pe, params, h, r_base):
    points, last, mesh = [], None, None
    cache = {}
    for eps, R, L in _ladder_plan(d, pe, params, h, r_base):
        key = R
        if key not in cache:
            cache.clear()
            cache[key] = _mesh_for(d, pe, params, h, R)
            last = None  # a new mesh: restart from the p=2 guess
        mesh = cache[key]
        res = _solve(mesh, pe, eps, params, None if last is None else last.vector)
        points.append(LadderPoint(h, eps, R, L, res.value, res.iterations, res.residual, res.converged))
        last = res
    return points, last, mesh


def _models(d, pe):
    """(primary, variant) extrapolation models for the ladder of this shape.

    A single critical end uses the exact reduced (Riccati) model with the
    quadratic log-box model as variant; the joint ladder uses the quadratic
    model (exact for p=2) with a cubic term as variant.
    """
    end = critical_end(d, pe)
    A, rho = boundary_end(pe.p)
    if end is CriticalEnd.BOUNDARY:
        return ReducedLogBoxModel(pe.p, 1, None, 1.0), LogBoxModel(A, rho, None)
    dirichlet = pe.p < pe.n
    Ai, sigma = infinity_end(pe.p, pe.n, dirichlet)
    if end is CriticalEnd.INFINITY:
        return (ReducedLogBoxModel(pe.p, pe.n, -math.inf if dirichlet else 0.0, None),
                LogBoxModel(Ai, sigma, None))
    return LogBoxModel(A, rho, sigma), LogBoxModel(A, rho, sigma, cubic=True)


def _fit(model, points):
    if len(points) < model.num_params:
        return None
    L = np.array([pt.log_length for pt in points])
    lam = np.array([pt.value for pt in points])
    return model.fit(L, lam)


def _default_r_max(d: DomainSpec) -> float | None:
    return 20.0 * d.R if d.is_exterior else None


def estimate_hardy(d: DomainSpec, pe: PExponent, params: MeshParams | None = None, *,
                   h: float | None = None, bounds: bool = True,
                   infinity_bounds: InfinityBounds | None = None) -> HardyReport:
    """Extrapolated Hardy constant with minimizer, error budget and gap verdict.

    Error terms (combined in quadrature): ``model`` (refit without the most
    truncated-away point), ``variant`` (the alternative model), ``h`` (same
    ladder on a mesh twice as coarse) and ``r_max`` (boundary ladder at a
    doubled truncation radius, exterior shapes only).  Missing terms are
    skipped; with none available the error is NaN and the verdict Inconclusive.
    """
    pe = _pe(pe)
    if params is None:
        if h is None:
            raise ValueError("give params or h")
        params = MeshParams(h=h)
    end = critical_end(d, pe)
    model, variant = _models(d, pe)
    r_base = params.r_max if params.r_max is not None else _default_r_max(d)
    notes = []
    converged = True

    try:
        fine, last, mesh = _run_ladder(d, pe, params, params.h, r_base)
    except SolverError as exc:
        return _failed_report(d, pe, params, end, str(exc))
    if not fine:
        raise ValueError("empty ladder: h too coarse for the eps ladder")
    converged &= all(pt.converged for pt in fine)
    ladders = {"fine": fine}
    fits = {"fine": _fit(model, fine)}
    terms = {}

    if fits["fine"] is not None:
        estimate = fits["fine"].limit
        if len(fine) > model.num_params:
            fits["drop"] = _fit(model, fine[1:])
            terms["model"] = abs(fits["drop"].limit - estimate)
        if len(fine) > variant.num_params:
            fits["variant"] = _fit(variant, fine)
            terms["variant"] = abs(fits["variant"].limit - estimate)
    else:
        estimate = min(pt.value for pt in fine)
        notes.append("too few ladder points to extrapolate; reporting the smallest ladder value")

    if params.h_pair:
        try:
            coarse, _, _ = _run_ladder(d, pe, params, 2.0 * params.h, r_base)
        except SolverError as exc:
            coarse = []
            notes.append(f"coarse ladder failed: {exc}")
        ladders["coarse"] = coarse
        fc = _fit(model, coarse)
        fits["coarse"] = fc
        if fc is not None and fits["fine"] is not None:
            terms["h"] = abs(fc.limit - estimate)
        else:
            notes.append("coarse ladder too short for the h error term")

    if d.is_exterior and params.r_doubling and end is CriticalEnd.BOUNDARY:
        try:
            far, _, _ = _run_ladder(d, pe, params, params.h, 2.0 * r_base)
        except SolverError as exc:
            far = []
            notes.append(f"doubled-R_max ladder failed: {exc}")
        ladders["r_doubled"] = far
        ff = _fit(model, far)
        fits["r_doubled"] = ff
        if ff is not None and fits["fine"] is not None:
            terms["r_max"] = abs(ff.limit - estimate)

    error = math.sqrt(sum(v * v for v in terms.values())) if terms else math.nan

    # untruncated discrete problem on the finest mesh (largest R_max) for the minimizer
    r_final = fine[-1].r_max
    final_mesh = mesh if (mesh is not None and mesh.r_max == r_final) else _mesh_for(d, pe, params, params.h, r_final)
    try:
        final = _solve(final_mesh, pe, 0.0, params, last.vector if last is not None else None)
    except SolverError as exc:
        notes.append(f"final solve failed: {exc}")
        final = None
    if final is not None:
        converged &= final.converged
        minimizer = GridField(final_mesh, final.vector)
        w0 = weight_vector(final_mesh, pe)
        fr = final_mesh.free
        resid = el_residual(final_mesh, final.vector[fr], final.value, w0[fr], pe.p, params.kappa)
        discrete = final.value
        iterations = final.iterations
    else:
        minimizer, resid, discrete, iterations = None, math.nan, math.nan, 0

    if bounds:
        ib = infinity_bounds or lambda_infinity_bounds(d, pe, h=params.h, mode=params.mode)
    else:
        ib = InfinityBounds(math.nan, math.nan, [], math.nan, None)
    if ib.trials and estimate > min(t.quotient for t in ib.trials) + GAP_FACTOR * (error if math.isfinite(error) else 0.0):
        notes.append("estimate exceeds a trial quotient beyond tolerance")

    report = HardyReport(
        domain=d, pe=pe, h_p_estimate=float(estimate), error=float(error), error_terms=terms,
        threshold=hardy_threshold(d, pe), critical_end=end, upper_bound_trials=list(ib.trials),
        lambda_infinity_lower=ib.lower, lambda_infinity_upper=ib.upper,
        gap_verdict=GapVerdict.INCONCLUSIVE, minimizer=minimizer, discrete_minimum=float(discrete),
        el_residual=float(resid),
        mesh={"h": params.h, "epsilon_strip": 0.0, "iterations": int(iterations),
              "mode": final_mesh.mode.value, "num_nodes": int(final_mesh.num_nodes),
              "r_max": r_final, "kappa": params.kappa if pe.p < 2 else 0.0,
              "params": params.as_dict()},
        ladders=ladders, fits=fits, converged=bool(converged), notes=notes,
    )
    report.gap_verdict = spectral_gap_verdict(report)
    return report


def _failed_report(d, pe, params, end, message) -> HardyReport:
    return HardyReport(
        domain=d, pe=pe, h_p_estimate=math.nan, error=math.nan, error_terms={},
        threshold=hardy_threshold(d, pe), critical_end=end, upper_bound_trials=[],
        lambda_infinity_lower=math.nan, lambda_infinity_upper=math.nan,
        gap_verdict=GapVerdict.INCONCLUSIVE, minimizer=None, discrete_minimum=math.nan,
        el_residual=math.nan, mesh={"h": params.h, "epsilon_strip": math.nan, "iterations": 0},
        ladders={}, fits={}, converged=False, notes=[message],
    )


# ---------------------------------------------------------------- verdicts

def spectral_gap_verdict(r: HardyReport) -> GapVerdict:
    """GapPositive if H < lower - tol; NoGap if |H - threshold| <= tol; else Inconclusive.

    ``tol`` is GAP_FACTOR times the combined error; unconverged or
    error-less reports are Inconclusive.
    """
    tol = r.gap_tolerance
    if not r.converged or not math.isfinite(tol) or not math.isfinite(r.h_p_estimate):
        return GapVerdict.INCONCLUSIVE
    if math.isfinite(r.lambda_infinity_lower) and r.h_p_estimate < r.lambda_infinity_lower - tol:
        return GapVerdict.GAP_POSITIVE
    if abs(r.h_p_estimate - r.threshold) <= tol:
        return GapVerdict.NO_GAP
    return GapVerdict.INCONCLUSIVE


@dataclass(frozen=True)
class SpotCheck:
    index: int
    energy: float
    mass: float
    quotient: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def hardy_spotcheck(d: DomainSpec, pe: PExponent, trials, c: float, *,
                    rel_tol: float = 1e-9, q: QuadratureRule | None = None) -> list[SpotCheck]:
    """Check energy >= c * weighted p-norm for each trial field, both taken with rule ``q``."""
    pe = _pe(pe)
    out = []
    for i, f in enumerate(trials):
        if f.mesh.domain != d:
            raise ValueError(f"trial {i} lives on {f.mesh.domain.name}, not {d.name}")
        E = quadrature_energy(f, pe, q)
        M = weighted_p_norm(f, pe, q)
        quotient = E / M if M > 0 else math.inf
        out.append(SpotCheck(i, E, M, quotient, bool(E >= c * M * (1.0 - rel_tol))))
    return out


# ---------------------------------------------------------------- constant at infinity

def _collar_width(d: DomainSpec) -> float:
    if isinstance(d, Dumbbell):
        return 0.5 * min(d.neck_half_width, d.fillet_radius)
    if isinstance(d, ParabolicGraph):
        return 0.1 * d.height
    if d.is_exterior:
        return 0.5 * d.R
    return 0.5 * d.inradius


def _bisect_lambda(certifies, top, rel_tol):
    """Largest lambda in (0, top] with certifies(lambda), to relative accuracy rel_tol."""
    if certifies(top):
        return top
    lo = None
    for frac in (0.5, 0.25, 0.1, 0.01):
        if certifies(frac * top):
            lo = frac * top
            break
    if lo is None:
        return 0.0
    hi = top
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if certifies(mid):
            lo = mid
        else:
            hi = mid
    return lo


def lambda_infinity_bounds(d: DomainSpec, pe: PExponent, *, h: float | None = None,
                           mode: str | None = None, s_values=DEFAULT_S, rel_tol: float = 0.01,
                           beta_offset: float = 0.1) -> InfinityBounds:
    """Bracket the Hardy constant at infinity.

    Lower: the largest lambda for which a Minus barrier ``G^alpha - G^beta``
    (alpha on the upper branch of lambda_alpha, beta = alpha + beta_offset)
    is a supersolution on some boundary collar, bisected to ``rel_tol``; for
    exterior shapes also at infinity with the radial G, the smaller of the
    two being reported.  Upper: the smallest concentrated trial quotient.
    Shapes without a closed-form G use the numerical collar solution at
    mesh size ``h``.
    """
    pe = _pe(pe)
    cp = hardy_one_d_constant(pe)
    w = _collar_width(d)
    if d.radial:
        g = exact_reference(d, pe, w)
    else:
        if h is None:
            raise ValueError(f"{d.name} needs a mesh size for the numerical collar solution")
        g = solve_collar_green(d, pe, w, h, mode=mode)

    def boundary_ok(lam):
        alpha = alpha_of_lambda(pe, lam, AlphaBranch.UPPER)
        beta = min(alpha + beta_offset, 1.0)
        if beta <= alpha:
            return False
        row = window_scan(g, pe, alpha, [beta], mode="boundary", signs=(Sign.MINUS,),
                          weight=WeightKind.DELTA_BOUNDARY)[0]
        return row.certified

    lower_b = _bisect_lambda(boundary_ok, cp, rel_tol)
    lower_i = None
    if d.is_exterior:
        cs = hardy_point_constant(pe)
        if cs == 0.0:
            lower_i = 0.0
        else:
            ge = radial_exterior_reference(pe, d)

            def infinity_ok(mu):
                a1, a2 = exterior_alpha_pair(pe, mu)
                if pe.p < pe.n:
                    alpha, beta = a1, min(a1 + beta_offset, 1.0)
                else:
                    alpha, beta = a2, a2 - beta_offset
                if not (0.0 < beta <= 1.0) or beta == alpha:
                    return False
                row = window_scan(ge, pe, alpha, [beta], mode="infinity", signs=(Sign.MINUS,),
                                  weight=WeightKind.DELTA_BOUNDARY)[0]
                return row.certified

            lower_i = _bisect_lambda(infinity_ok, cs, rel_tol)
    lower = lower_b if lower_i is None else min(lower_b, lower_i)
    trials = trial_quotients(d, pe, s_values)
    upper = min(t.quotient for t in trials)
    return InfinityBounds(float(lower), float(upper), trials, float(lower_b),
                          None if lower_i is None else float(lower_i))

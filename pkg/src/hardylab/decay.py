"""Decay exponents of computed minimizers and their comparison with predictions.

Near the boundary a minimizer behaves like ``delta^alpha`` with lambda_alpha =
H on the upper branch; at infinity (exterior shapes) like ``|x|^beta`` with
beta = alpha1 (p-n)/(p-1) for p < n and alpha2 (p-n)/(p-1) for p > n.  The
exponents are fitted by log-log least squares over a band of distances.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .discretization import GridField
from .hardy import GapVerdict, HardyReport
from .scalars import AlphaBranch, PExponent, _pe, alpha_of_lambda, exterior_alpha_pair

__all__ = [
    "Side",
    "DecayFit",
    "BandError",
    "ExistenceVerdict",
    "ExistenceRecord",
    "fit_boundary_exponent",
    "fit_infinity_exponent",
    "predicted_exponent",
    "existence_verdict",
    "write_fit_table",
    "MIN_BAND_LEVELS",
]

MIN_BAND_LEVELS = 10


class BandError(ValueError):
    """Band not resolvable, outside the field, or with non-positive values."""


class Side(enum.Enum):
    BOUNDARY = "Boundary"
    INFINITY = "Infinity"


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    constant: float
    band: tuple
    residual: float              # RMS of the log-log fit
    side: Side
    envelope: tuple              # (min, max) of u / t^exponent over the band
    num_nodes: int
    h: float
    domain: str

    @property
    def envelope_ratio(self) -> float:
        lo, hi = self.envelope
        return hi / lo if lo > 0 else math.inf

    def as_dict(self) -> dict:
        return {"exponent": self.exponent, "constant": self.constant, "band": list(self.band),
                "residual": self.residual, "side": self.side.value, "envelope": list(self.envelope),
                "num_nodes": self.num_nodes, "h": self.h, "domain": self.domain}


def _loglog(t, u, band, side, h, domain) -> DecayFit:
    if np.any(u <= 0):
        k = int(np.flatnonzero(u <= 0)[0])
        raise BandError(f"non-positive field value {u[k]:.3e} at distance {t[k]:.4g} in the band")
    x, y = np.log(t), np.log(u)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ np.array([slope, icept]) - y) ** 2)))
    ratio = u / t ** slope
    return DecayFit(float(slope), float(math.exp(icept)), (float(band[0]), float(band[1])), rms, side,
                    (float(ratio.min()), float(ratio.max())), int(len(t)), float(h), domain)


def fit_boundary_exponent(u: GridField, band: tuple | None = None) -> DecayFit:
    """Slope of log u against log delta over nodes with delta in ``band`` (default [3h, 30h])."""
    mesh = u.mesh
    h = mesh.h
    lo, hi = band if band is not None else (3.0 * h, 30.0 * h)
    if not 0 < lo < hi:
        raise BandError(f"invalid band ({lo}, {hi})")
    if (hi - lo) < MIN_BAND_LEVELS * h * (1.0 - 1e-9):
        raise BandError(f"band ({lo:.4g}, {hi:.4g}) spans fewer than {MIN_BAND_LEVELS} grid levels")
    sel = (mesh.delta >= lo) & (mesh.delta <= hi)
    if mesh.domain.is_exterior and mesh.r_max is not None:
        sel &= mesh.radius() < 0.5 * mesh.r_max
    if sel.sum() < 3:
        raise BandError("fewer than 3 nodes in the band")
    return _loglog(mesh.delta[sel], u.values[sel], (lo, hi), Side.BOUNDARY, h, mesh.domain.name)


def fit_infinity_exponent(u: GridField, band: tuple | None = None) -> DecayFit:
    """Slope of log u against log |x| over nodes with |x| in ``band`` (default [R_max/8, R_max/2])."""
    mesh = u.mesh
    if not mesh.domain.is_exterior or mesh.r_max is None:
        raise BandError("infinity fits need a truncated exterior mesh")
    R = mesh.r_max
    lo, hi = band if band is not None else (R / 8.0, R / 2.0)
    if not 0 < lo < hi:
        raise BandError(f"invalid band ({lo}, {hi})")
    if hi > R:
        raise BandError(f"band end {hi:.4g} beyond the truncation radius {R:.4g}")
    r = mesh.radius()
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < MIN_BAND_LEVELS:
        raise BandError(f"band ({lo:.4g}, {hi:.4g}) holds fewer than {MIN_BAND_LEVELS} nodes")
    return _loglog(r[sel], u.values[sel], (lo, hi), Side.INFINITY, mesh.h, mesh.domain.name)


def predicted_exponent(pe: PExponent, lam: float, side: Side | str) -> float:
    """Exponent predicted for H = lam: upper-branch alpha, or the infinity exponent."""
    pe = _pe(pe)
    side = Side(side)
    if side is Side.BOUNDARY:
        return alpha_of_lambda(pe, lam, AlphaBranch.UPPER)
    if pe.p == pe.n:
        return 0.0
    a1, a2 = exterior_alpha_pair(pe, lam)
    a = a1 if pe.p < pe.n else a2
    return a * (pe.p - pe.n) / (pe.p - 1.0)


class ExistenceVerdict(enum.Enum):
    MINIMIZER_EXPECTED = "MinimizerExpected"
    NO_MINIMIZER = "NoMinimizer"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ExistenceRecord:
    verdict: ExistenceVerdict
    consistent: bool
    rows: list                   # (side, fitted, predicted, deviation, consistent)

    def as_dict(self) -> dict:
        return {"verdict": self.verdict.value, "consistent": self.consistent,
                "rows": [dict(zip(("side", "fitted", "predicted", "deviation", "consistent"), r))
                         for r in self.rows]}


def existence_verdict(r: HardyReport, fits, *, tol: float = 0.05, weak_slack: float = 0.0) -> ExistenceRecord:
    """Minimizer existence from the gap verdict, with fitted exponents checked against predictions.

    Gap cases compare to the exponent predicted by the H estimate; no-gap
    cases to the threshold exponent ((p-1)/p, or (p-n)/p at infinity).
    ``weak_slack`` relaxes the lower side of the comparison for shapes with
    only C^1-type regularity, where the decay holds with any smaller power.
    """
    if r.minimizer is None:
        raise ValueError("report has no minimizer")
    mesh = r.minimizer.mesh
    for f in fits:
        if f.domain != mesh.domain.name or f.h != mesh.h:
            raise ValueError(f"fit from {f.domain} at h={f.h} does not match the run "
                             f"({mesh.domain.name} at h={mesh.h})")
    pe = r.pe
    if r.gap_verdict is GapVerdict.GAP_POSITIVE:
        verdict = ExistenceVerdict.MINIMIZER_EXPECTED
    elif r.gap_verdict is GapVerdict.NO_GAP:
        verdict = ExistenceVerdict.NO_MINIMIZER
    else:
        verdict = ExistenceVerdict.UNDETERMINED
    rows = []
    for f in fits:
        if verdict is ExistenceVerdict.NO_MINIMIZER:
            pred = (pe.p - 1.0) / pe.p if f.side is Side.BOUNDARY else (pe.p - pe.n) / pe.p
        else:
            lam = min(r.h_p_estimate, r.threshold)
            pred = predicted_exponent(pe, lam, f.side)
        dev = f.exponent - pred
        ok = -(tol + weak_slack) <= dev <= tol
        rows.append((f.side.value, f.exponent, pred, dev, bool(ok)))
    return ExistenceRecord(verdict, all(row[4] for row in rows), rows)


def write_fit_table(path, fits, predictions=None) -> None:
    """CSV with band, exponent, constant, residual, prediction and deviation per fit."""
    predictions = list(predictions) if predictions is not None else [math.nan] * len(fits)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["side", "band_lo", "band_hi", "exponent", "constant", "residual", "prediction", "deviation"])
        for f, pred in zip(fits, predictions):
            w.writerow([f.side.value, repr(f.band[0]), repr(f.band[1]), repr(f.exponent), repr(f.constant),
                        repr(f.residual), repr(pred), repr(f.exponent - pred)])

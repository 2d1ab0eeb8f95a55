"""Command-line driver: experiment configs, the full pipeline and the catalog suite.

The pipeline for one config runs geometry, the reference p-harmonic function,
barrier scans, the Hardy estimate over the mesh ladder, decay fits and the
invariant checks, writing ``report.json`` plus CSV dumps to the output
directory.  Exit codes: 0 completed, 1 acceptance failure (suite), 2 invalid
config or arguments, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .barriers import (BarrierSpec, NonPositiveBarrierError, Region, Sign, WeightKind, barrier_lambda,
                       certify, window_scan)
from .decay import BandError, existence_verdict, fit_boundary_exponent, fit_infinity_exponent, write_fit_table
from .discretization import KAPPA, GridField, Mode, dump_grid, rayleigh_quotient
from .geometry import CATALOG, Annulus, Disk, DomainSpec, ExteriorBall, Interval, make_domain
from .hardy import (GAP_FACTOR, MeshParams, estimate_hardy, feature_size, hardy_spotcheck, hardy_threshold,
                    jsonable, lambda_infinity_bounds)
from .pharmonic import (EmptyBandError, exact_reference, hopf_check, radial_exterior_reference,
                        ratio_asymptotics, solve_collar_green)
from .scalars import PExponent, exterior_threshold, hardy_one_d_constant, hardy_point_constant
from .solvers import SolverError

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "suite_config",
    "run_suite",
    "acceptance_checks",
    "main",
    "EXIT_OK",
    "EXIT_FAILED",
    "EXIT_INVALID",
    "EXIT_SOLVER",
    "THREADS_ENV",
    "SUITE_SHAPES",
    "SUITE_PS",
]

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3
THREADS_ENV = "HARDYLAB_THREADS"
SUITE_SHAPES = ("interval", "disk", "annulus", "dumbbell", "exterior_ball")
SUITE_PS = (1.5, 2.0, 3.0)
_CLOSED_FORM = (Interval, Disk, Annulus, ExteriorBall)


class ConfigError(ValueError):
    """Invalid experiment config; ``field`` is the dotted name of the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ---------------------------------------------------------------- config

# TOML table -> {key: (config attribute, kind)}
_SCHEMA = {
    "exponent": {"p": ("p", "float"), "n": ("n", "int")},
    "mesh": {"h": ("h", "floats"), "mode": ("mode", "str"), "epsilons": ("epsilons", "floats"),
             "eps_max": ("eps_max", "float"), "eps_ratio": ("eps_ratio", "float"),
             "min_strip_cells": ("min_strip_cells", "float"), "r_max": ("r_max", "float"),
             "r_count": ("r_count", "int"), "quadrant": ("quadrant", "bool")},
    "solver": {"kappa": ("kappa", "float"), "max_iter": ("max_iter", "int")},
    "bounds": {"enabled": ("bounds", "bool")},
    "barriers": {"alpha": ("alpha", "floats"), "beta": ("beta", "floats"), "mode": ("barrier_mode", "str"),
                 "collar_width": ("collar_width", "float"), "h": ("barrier_h", "float")},
    "checks": {"spot_count": ("spot_count", "int"), "dilation": ("dilation", "bool")},
    "output": {"directory": ("output", "str")},
}
_TOP = {"seed": ("seed", "int")}


def _coerce(value, kind: str, name: str):
    def num(v, integer=False):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(name, f"expected a number, got {v!r}")
        if integer:
            if not isinstance(v, int):
                raise ConfigError(name, f"expected an integer, got {v!r}")
            return int(v)
        if not math.isfinite(v):
            raise ConfigError(name, f"expected a finite number, got {v!r}")
        return float(v)

    if kind == "float":
        return num(value)
    if kind == "int":
        return num(value, integer=True)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(name, f"expected true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(name, f"expected a string, got {value!r}")
        return value
    if not isinstance(value, list):
        raise ConfigError(name, f"expected a list of numbers, got {value!r}")
    return tuple(num(v) for v in value)


def _strictly(seq, decreasing: bool) -> bool:
    d = np.diff(np.asarray(seq, dtype=float))
    return bool(np.all(d < 0) if decreasing else np.all(d > 0))


@dataclass(frozen=True)
class ExperimentConfig:
    """One pipeline run.  Lengths are absolute; ``h`` runs coarse to fine."""

    domain: str
    domain_params: dict = field(default_factory=dict)
    p: float = 2.0
    n: int = 2
    h: tuple = ()
    mode: str | None = None
    epsilons: tuple | None = None
    eps_max: float | None = None
    eps_ratio: float = math.sqrt(2.0)
    min_strip_cells: float = 6.0
    r_max: float | None = None
    r_count: int = 6
    quadrant: bool | None = None
    kappa: float = KAPPA
    max_iter: int = 3000
    bounds: bool = True
    alpha: tuple = (0.6,)
    beta: tuple = (0.7, 0.8)
    barrier_mode: str | None = None
    collar_width: float | None = None
    barrier_h: float | None = None
    spot_count: int = 16
    dilation: bool = True
    seed: int = 0
    output: str = "hardylab-out"

    def __post_init__(self):
        if self.domain.lower() not in CATALOG:
            raise ConfigError("domain.name", f"unknown shape {self.domain!r}; choose from {sorted(CATALOG)}")
        try:
            d = make_domain(self.domain, **self.domain_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError("domain", str(exc)) from None
        if not self.p > 1.0:
            raise ConfigError("exponent.p", f"p must be > 1, got {self.p}")
        if self.n < 1:
            raise ConfigError("exponent.n", f"n must be a positive integer, got {self.n}")
        if len(self.h) == 0:
            raise ConfigError("mesh.h", "the mesh ladder is empty")
        if min(self.h) <= 0 or not _strictly(self.h, decreasing=True):
            raise ConfigError("mesh.h", f"mesh sizes must be positive and strictly decreasing, got {list(self.h)}")
        if self.mode is not None and self.mode not in [m.value for m in Mode]:
            raise ConfigError("mesh.mode", f"unknown mode {self.mode!r}; choose from {[m.value for m in Mode]}")
        radial = self.mode == Mode.RADIAL_1D.value or (self.mode is None and d.is_exterior)
        if d.dim == 2 and not radial and self.n != 2:
            raise ConfigError("exponent.n", f"planar meshes need n = 2, got {self.n}")
        if self.epsilons is not None:
            if len(self.epsilons) == 0:
                raise ConfigError("mesh.epsilons", "the strip ladder is empty")
            if min(self.epsilons) <= 0 or not _strictly(self.epsilons, decreasing=True):
                raise ConfigError("mesh.epsilons", "strip widths must be positive and strictly decreasing")
        for name, value, lo in (("mesh.eps_max", self.eps_max, 0.0), ("mesh.r_max", self.r_max, 0.0),
                                ("mesh.min_strip_cells", self.min_strip_cells, 0.0),
                                ("barriers.collar_width", self.collar_width, 0.0),
                                ("barriers.h", self.barrier_h, 0.0)):
            if value is not None and not value > lo:
                raise ConfigError(name, f"must be positive, got {value}")
        if not self.eps_ratio > 1.0:
            raise ConfigError("mesh.eps_ratio", f"must exceed 1, got {self.eps_ratio}")
        if self.r_count < 1:
            raise ConfigError("mesh.r_count", f"must be >= 1, got {self.r_count}")
        if self.max_iter < 1:
            raise ConfigError("solver.max_iter", f"must be >= 1, got {self.max_iter}")
        if self.kappa < 0:
            raise ConfigError("solver.kappa", f"must be >= 0, got {self.kappa}")
        for name, seq in (("barriers.alpha", self.alpha), ("barriers.beta", self.beta)):
            if len(seq) == 0:
                raise ConfigError(name, "the exponent grid is empty")
            if not all(0.0 < a <= 1.0 for a in seq) or not _strictly(seq, decreasing=False):
                raise ConfigError(name, f"exponents must lie in (0, 1] and increase strictly, got {list(seq)}")
        if self.barrier_mode is not None:
            if self.barrier_mode not in ("boundary", "infinity"):
                raise ConfigError("barriers.mode", f"must be 'boundary' or 'infinity', got {self.barrier_mode!r}")
            if self.barrier_mode == "infinity" and not d.is_exterior:
                raise ConfigError("barriers.mode", "barriers at infinity need an exterior shape")
            if self.barrier_mode == "infinity" and self.p == self.n:
                raise ConfigError("barriers.mode", "barriers at infinity are undefined for p = n")
        if self.spot_count < 0:
            raise ConfigError("checks.spot_count", f"must be >= 0, got {self.spot_count}")
        if self.seed < 0:
            raise ConfigError("seed", f"must be >= 0, got {self.seed}")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        kw = {}
        for key, value in data.items():
            if key == "domain":
                if not isinstance(value, dict):
                    raise ConfigError("domain", "expected a table with a 'name' entry")
                params = dict(value)
                if "name" not in params:
                    raise ConfigError("domain.name", "missing")
                kw["domain"] = _coerce(params.pop("name"), "str", "domain.name")
                kw["domain_params"] = {k: _coerce(v, "float", f"domain.{k}") for k, v in params.items()}
            elif key in _TOP:
                attr, kind = _TOP[key]
                kw[attr] = _coerce(value, kind, key)
            elif key in _SCHEMA:
                if not isinstance(value, dict):
                    raise ConfigError(key, "expected a table")
                for sub, v in value.items():
                    if sub not in _SCHEMA[key]:
                        raise ConfigError(f"{key}.{sub}", "unknown key")
                    attr, kind = _SCHEMA[key][sub]
                    kw[attr] = _coerce(v, kind, f"{key}.{sub}")
            else:
                raise ConfigError(key, "unknown table or key")
        if "domain" not in kw:
            raise ConfigError("domain", "missing")
        if "h" not in kw:
            raise ConfigError("mesh.h", "missing")
        return cls(**kw)

    def to_dict(self) -> dict:
        """Canonical content; the output directory is excluded so relocated runs hash alike."""
        out = asdict(self)
        out.pop("output")
        return jsonable(out)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolved_barrier_mode(self) -> str:
        """Barriers at infinity for exterior shapes with p != n, else at the boundary."""
        if self.barrier_mode is not None:
            return self.barrier_mode
        exterior = self.domain_spec().is_exterior
        return "infinity" if exterior and self.p != self.n else "boundary"

    def domain_spec(self) -> DomainSpec:
        return make_domain(self.domain, **self.domain_params)

    def exponent(self) -> PExponent:
        return PExponent(self.p, self.n)

    def mesh_params(self, h: float, scale: float = 1.0) -> MeshParams:
        s = scale
        return MeshParams(
            h=h * s, mode=self.mode,
            eps_max=None if self.eps_max is None else self.eps_max * s,
            eps_ratio=self.eps_ratio, min_strip_cells=self.min_strip_cells,
            epsilons=None if self.epsilons is None else tuple(e * s for e in self.epsilons),
            r_max=None if self.r_max is None else self.r_max * s, r_count=self.r_count,
            kappa=self.kappa, max_iter=self.max_iter, quadrant=self.quadrant)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"not valid TOML: {exc}") from None
    return ExperimentConfig.from_mapping(data)


# ---------------------------------------------------------------- output

def _atomic(path: Path, write) -> None:
    """Run ``write(tmp_path)`` and move the result (and any ``.json`` sidecar) into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(tmp)
        if os.path.exists(f"{tmp}.json"):
            os.replace(f"{tmp}.json", f"{path}.json")
        os.replace(tmp, path)
    finally:
        for leftover in (tmp, f"{tmp}.json"):
            if os.path.exists(leftover):
                os.remove(leftover)


def _dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _write_text(path: Path, text: str) -> None:
    def write(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    _atomic(path, write)


def _write_rows(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    _write_text(path, buf.getvalue())


# ---------------------------------------------------------------- pipeline

def _collar_width(cfg: ExperimentConfig, d: DomainSpec) -> float:
    if cfg.collar_width is not None:
        return cfg.collar_width
    if d.is_exterior:
        return 0.3 * d.R
    return min(0.3, 2.0 * feature_size(d) / 3.0)


def _reference(cfg: ExperimentConfig, d: DomainSpec, pe: PExponent, mode: str):
    if mode == "infinity":
        return radial_exterior_reference(pe, d)
    width = _collar_width(cfg, d)
    if isinstance(d, _CLOSED_FORM):
        return exact_reference(d, pe, width)
    quadrant = d.quadrant_symmetric if cfg.quadrant is None else cfg.quadrant
    return solve_collar_green(d, pe, width, cfg.barrier_h or cfg.h[-1], mode=cfg.mode, kappa=cfg.kappa,
                              quadrant=quadrant)


def _ratio_levels(g, mode: str) -> list[float]:
    if mode == "infinity":
        return [2.0 ** k for k in range(1, 7)]
    levels, level = [], g.collar_width
    floor = 6.0 * g.h if not g.is_closed_form else 0.0
    while level / 2.0 >= floor and len(levels) < 8:
        levels.append(level)
        level /= 2.0
    return levels


def _barrier_stage(cfg, d, pe, mode):
    g = _reference(cfg, d, pe, mode)
    out = {"reference": g.describe()}
    if mode == "boundary":
        out["hopf"] = hopf_check(g).as_dict()
    bands = []
    for level in _ratio_levels(g, mode):
        try:
            bands.extend(ratio_asymptotics(g, [level], mode))
        except EmptyBandError:
            break
    out["ratio_bands"] = [b.as_dict() for b in bands]
    weight = WeightKind.ABS_X_INFINITY if mode == "infinity" else WeightKind.DELTA_BOUNDARY
    delta_min = None if g.is_closed_form else 3.0 * g.h
    scans, residuals = [], []
    for alpha in cfg.alpha:
        betas = [b for b in cfg.beta if b != alpha]
        if not betas:
            continue
        rows = window_scan(g, pe, alpha, betas, mode=mode, weight=weight)
        lam = barrier_lambda(pe, alpha, mode == "infinity")
        for row in rows:
            scans.append({"alpha": alpha, **row.as_dict()})
            if mode == "infinity":
                start = row.extent if row.certified else 1.01 * d.R
                region = Region.exterior(start, 1e8 * start)
            else:
                region = Region.collar(row.extent if row.certified else g.collar_width, delta_min)
            for sign in (Sign.PLUS, Sign.MINUS):
                entry = {"alpha": alpha, "beta": row.beta, "sign": sign.value, "lambda": lam}
                try:
                    entry.update(certify(BarrierSpec(g, alpha, row.beta, sign, lam, region), weight).as_dict())
                except NonPositiveBarrierError as exc:
                    entry["error"] = str(exc)
                residuals.append(entry)
    out["window_scan"] = scans
    out["residuals"] = residuals
    return out


def _bumps(mesh, rng, count: int):
    """Smooth bumps max(0, 1 - |x-c|^2/rho^2)^2 centred at random nodes, supported inside the domain."""
    deep = np.flatnonzero(mesh.free & (mesh.delta >= 4.0 * mesh.h))
    if len(deep) == 0 or count == 0:
        return []
    pts = mesh.nodes if mesh.nodes.ndim == 2 else mesh.nodes[:, None]
    out = []
    for k in rng.choice(deep, size=count, replace=len(deep) < count):
        rho = rng.uniform(0.3, 0.9) * mesh.delta[k]
        dist2 = np.sum((pts - pts[k]) ** 2, axis=1)
        out.append(GridField(mesh, np.maximum(0.0, 1.0 - dist2 / rho ** 2) ** 2))
    return out


def _check_stage(cfg, d, pe, runs):
    final = runs[-1]
    u = final.minimizer
    checks = {}
    rng = np.random.default_rng(cfg.seed)
    trials = [u] + _bumps(u.mesh, rng, cfg.spot_count)
    spots = hardy_spotcheck(d, pe, trials, final.discrete_minimum)
    checks["spotcheck"] = {"c": final.discrete_minimum, "passed": all(s.passed for s in spots),
                           "trials": [s.as_dict() for s in spots]}
    q1, q3 = rayleigh_quotient(u, pe), rayleigh_quotient(u.with_values(3.0 * u.values), pe)
    checks["homogeneity"] = {"quotient": q1, "scaled_quotient": q3,
                             "passed": bool(abs(q3 - q1) <= 1e-10 * abs(q1))}
    vals = u.values
    checks["sign_constancy"] = {"min": float(vals.min()), "max": float(vals.max()),
                                "passed": bool(vals.min() >= -1e-8 * vals.max())}
    checks["el_residual"] = {"value": final.el_residual, "passed": bool(final.el_residual <= 1e-4)}
    if cfg.dilation:
        base = runs[0]
        params = cfg.mesh_params(cfg.h[0], 2.0)
        if cfg.eps_max is None and cfg.epsilons is None:
            # the default strip ladder is capped at an absolute width, so pin it before dilating
            params = replace(params, eps_max=2.0 * cfg.mesh_params(cfg.h[0]).eps_ladder(d=d)[0])
        scaled = estimate_hardy(d.scaled(2.0), pe, params, bounds=False)
        tol = GAP_FACTOR * math.hypot(base.error, scaled.error)
        # a ladder too short for an error budget still has to reproduce itself
        tol = max(tol if math.isfinite(tol) else 0.0, 1e-9 * abs(base.h_p_estimate))
        diff = abs(base.h_p_estimate - scaled.h_p_estimate)
        rel = abs(base.discrete_minimum - scaled.discrete_minimum) / abs(base.discrete_minimum)
        checks["dilation"] = {"h": cfg.h[0], "estimate": base.h_p_estimate, "scaled_estimate": scaled.h_p_estimate,
                              "difference": diff, "tolerance": tol, "discrete_minimum_rel_diff": rel,
                              "passed": bool(diff <= tol and rel <= 1e-6)}
    return checks


def _ladder_rows(runs):
    for r in runs:
        for name, pts in r.ladders.items():
            for pt in pts:
                yield [name, pt.h, pt.epsilon, pt.r_max if pt.r_max is not None else "", pt.log_length,
                       pt.value, pt.iterations, pt.residual, pt.converged]


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[int, dict]:
    """Run the pipeline for ``cfg`` and write the report bundle; returns (exit code, summary)."""
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    d, pe = cfg.domain_spec(), cfg.exponent()
    mode = cfg.resolved_barrier_mode()
    summary = {"config": cfg.to_dict(), "config_hash": cfg.digest(), "mesh_ladder": list(cfg.h),
               "status": "running", "stages": []}

    def flush():
        _write_text(out / "report.json", _dumps(summary))

    def fail(message):
        summary["status"] = "solver_failure"
        summary["error"] = message
        flush()
        return EXIT_SOLVER, summary

    try:
        bounds = None
        if cfg.bounds:
            bounds = lambda_infinity_bounds(d, pe, h=cfg.h[-1], mode=cfg.mode)
            summary["infinity_bounds"] = bounds.as_dict()
        runs = []
        for h in cfg.h:
            r = estimate_hardy(d, pe, cfg.mesh_params(h), bounds=cfg.bounds, infinity_bounds=bounds)
            runs.append(r)
            summary["hardy"] = [x.to_dict() for x in runs]
            if r.minimizer is None or not r.converged:
                _write_rows(out / "ladder.csv", _LADDER_HEADER, _ladder_rows(runs))
                return fail(f"Hardy estimate at h={h} did not converge: {'; '.join(r.notes)}")
        final = runs[-1]
        summary["stages"].append("hardy")
        _write_rows(out / "ladder.csv", _LADDER_HEADER, _ladder_rows(runs))
        _atomic(out / "minimizer.csv", lambda tmp: dump_grid(final.minimizer, tmp, {"config_hash": cfg.digest()}))
        flush()

        summary["barriers"] = _barrier_stage(cfg, d, pe, mode)
        summary["stages"].append("barriers")
        _write_rows(out / "barriers.csv", ["alpha", "beta", "certified", "extent", "plus", "minus"],
                    ([s["alpha"], s["beta"], s["certified"], s["extent"], s["plus"], s["minus"]]
                     for s in summary["barriers"]["window_scan"]))
        flush()

        fits, fit_errors = [], {}
        for side, fitter in (("Boundary", fit_boundary_exponent), ("Infinity", fit_infinity_exponent)):
            if side == "Infinity" and not d.is_exterior:
                continue
            try:
                fits.append(fitter(final.minimizer))
            except BandError as exc:
                fit_errors[side] = str(exc)
        record = existence_verdict(final, fits)
        summary["decay"] = {"fits": [f.as_dict() for f in fits], "errors": fit_errors,
                            "existence": record.as_dict()}
        summary["stages"].append("decay")
        _atomic(out / "fits.csv", lambda tmp: write_fit_table(tmp, fits, [row[2] for row in record.rows]))
        flush()

        summary["checks"] = _check_stage(cfg, d, pe, runs)
        summary["stages"].append("checks")
    except SolverError as exc:
        return fail(str(exc))

    summary["verdicts"] = {
        "gap": final.gap_verdict.value,
        "existence": record.verdict.value,
        "hopf": summary["barriers"].get("hopf", {}).get("positive"),
        "checks_passed": all(c["passed"] for c in summary["checks"].values()),
    }
    summary["status"] = "complete"
    flush()
    return EXIT_OK, summary


_LADDER_HEADER = ["ladder", "h", "epsilon", "r_max", "log_length", "value", "iterations", "residual", "converged"]


# ---------------------------------------------------------------- suite

_SUITE_PARAMS = {
    "interval": {"a": 0.0, "b": 1.0},
    "disk": {"R": 1.0},
    "annulus": {"r": 1.0, "R": 3.0},
    "dumbbell": {},
    "exterior_ball": {"R": 1.0},
}


def suite_config(shape: str, p: float, seed: int = 0) -> ExperimentConfig:
    """Default config of one suite row."""
    shape = shape.lower()
    if shape not in _SUITE_PARAMS:
        raise ConfigError("shapes", f"{shape!r} is not a suite shape; choose from {list(SUITE_SHAPES)}")
    kw = {}
    if shape == "interval":
        h = (1.0 / 512, 1.0 / 1024)
    elif shape == "disk":
        # radial meshes; narrow strips keep the curvature of the rim out of the ladder
        h = (1.0 / 2048, 1.0 / 4096)
        kw.update(mode="radial1d", eps_max=0.05)
    elif shape == "annulus":
        h = (1.0 / 512, 1.0 / 1024)
        kw["mode"] = "radial1d"
    elif shape == "dumbbell":
        h = (1.0 / 64, 1.0 / 128)
        kw["min_strip_cells"] = 3.0
    else:
        h = (0.001, 0.0005)
        kw.update(n=3, eps_max=0.05)
    return ExperimentConfig(domain=shape, domain_params=dict(_SUITE_PARAMS[shape]), p=float(p), h=h,
                            seed=seed, **kw)


def acceptance_checks(summary: dict) -> dict:
    """Pass/fail of the checks anchored in theory for one pipeline summary."""
    if summary.get("status") != "complete":
        return {"completed": False}
    cfg = summary["config"]
    d = make_domain(cfg["domain"], **cfg["domain_params"])
    pe = PExponent(cfg["p"], cfg["n"])
    final = summary["hardy"][-1]
    H, tol, thr = final["h_p_estimate"], final["gap_tolerance"], hardy_threshold(d, pe)
    tol = tol if isinstance(tol, float) else math.inf
    out = {"completed": True, "below_threshold": H <= thr + tol}
    if "infinity_bounds" in summary:
        b = summary["infinity_bounds"]
        out["bracket"] = b["lower"] <= thr * (1 + 1e-9) + 1e-12 and b["upper"] >= thr * (1 - 1e-9)
    if isinstance(d, (Interval, Disk)):
        # convex shapes attain the one-dimensional constant: within 2% or within the error budget
        c = hardy_one_d_constant(pe)
        out["convex_constant"] = abs(H - c) <= max(0.02 * c, tol)
    out.update({k: v["passed"] for k, v in summary["checks"].items()})
    return {k: bool(v) for k, v in out.items()}


_TABLE_HEADER = ["shape", "p", "n", "h", "h_p_estimate", "error", "lambda_lower", "lambda_upper", "gap_verdict",
                 "fitted_boundary", "predicted_boundary", "fitted_infinity", "predicted_infinity", "status",
                 "passed", "failed_checks"]


def _table_row(shape, cfg, code, summary):
    checks = acceptance_checks(summary)
    row = {"shape": shape, "p": cfg.p, "n": cfg.n, "h": cfg.h[-1], "status": summary.get("status"),
           "exit_code": code, "checks": checks, "passed": all(checks.values()),
           "failed_checks": sorted(k for k, v in checks.items() if not v)}
    hardy = summary.get("hardy")
    if hardy:
        f = hardy[-1]
        row.update(h_p_estimate=f["h_p_estimate"], error=f["error"], gap_verdict=f["gap_verdict"],
                   lambda_lower=f["lambda_infinity_lower"], lambda_upper=f["lambda_infinity_upper"])
    for r in summary.get("decay", {}).get("existence", {}).get("rows", []):
        key = r["side"].lower()
        row[f"fitted_{key}"] = r["fitted"]
        row[f"predicted_{key}"] = r["predicted"]
    return row


def run_suite(shapes=SUITE_SHAPES, ps=SUITE_PS, out_dir="hardylab-suite", seed: int = 0) -> tuple[int, list]:
    """One pipeline run per (shape, p); exit 1 iff any row fails its acceptance checks."""
    out = Path(out_dir)
    configs = [(s, suite_config(s, p, seed)) for s in shapes for p in ps]
    rows = []
    if configs:
        out.mkdir(parents=True, exist_ok=True)
    for shape, cfg in configs:
        code, summary = run_experiment(cfg, out / f"{shape}_p{cfg.p:g}")
        rows.append(_table_row(shape, cfg, code, summary))
    if configs:
        _write_text(out / "table.json", _dumps(rows))
        _write_rows(out / "table.csv", _TABLE_HEADER,
                    ([r.get(k, "") if k != "failed_checks" else ";".join(r[k]) for k in _TABLE_HEADER] for r in rows))
    return (EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAILED), rows


# ---------------------------------------------------------------- commands

def _emit(args, payload: dict, lines) -> None:
    if args.json:
        sys.stdout.write(_dumps(payload))
    else:
        for line in lines:
            print(line)


def _shape_from_args(args) -> DomainSpec:
    params = {}
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("--param", f"expected key=value, got {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise ConfigError(f"--param {key}", f"not a number: {value!r}") from None
    try:
        return make_domain(args.shape, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError("--shape", str(exc)) from None


def _exponent_from_args(args) -> PExponent:
    try:
        return PExponent(args.p, args.n)
    except ValueError as exc:
        raise ConfigError("--p/--n", str(exc)) from None


def cmd_constants(args) -> int:
    pe = _exponent_from_args(args)
    vals = {"p": pe.p, "n": pe.n, "c_p": hardy_one_d_constant(pe), "c_star": hardy_point_constant(pe),
            "c_pn": exterior_threshold(pe)}
    _emit(args, vals, [f"c_p={vals['c_p']:.12g} c*={vals['c_star']:.12g} c_{{p,n}}={vals['c_pn']:.12g}"])
    return EXIT_OK


def cmd_barrier_check(args) -> int:
    d, pe = _shape_from_args(args), _exponent_from_args(args)
    cfg = ExperimentConfig(domain=d.name, domain_params=d.params(), p=pe.p, n=pe.n,
                           h=(args.h or 1.0 / 128,), alpha=tuple(sorted(args.alpha)), beta=tuple(sorted(args.beta)),
                           barrier_mode=args.mode, collar_width=args.collar_width, mode=args.mesh_mode)
    mode = cfg.resolved_barrier_mode()
    stage = _barrier_stage(cfg, d, pe, mode)
    lines = [f"{s['alpha']:g} {s['beta']:g} certified={s['certified']} extent={s['extent']:.6g}"
             for s in stage["window_scan"]]
    lines += [f"  {r['sign']:>5} alpha={r['alpha']:g} beta={r['beta']:g}: {r.get('verdict', r.get('error'))}"
              for r in stage["residuals"]]
    _emit(args, stage, lines)
    return EXIT_OK


def _estimate_from_args(args, d, pe):
    params = MeshParams(h=args.h, mode=args.mesh_mode, r_max=args.r_max)
    r = estimate_hardy(d, pe, params, bounds=not args.no_bounds)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "hardy.json", _dumps(r.to_dict()))
        if r.minimizer is not None:
            _atomic(out / "minimizer.csv", lambda tmp: dump_grid(r.minimizer, tmp))
    return r


def cmd_hardy(args) -> int:
    d, pe = _shape_from_args(args), _exponent_from_args(args)
    r = _estimate_from_args(args, d, pe)
    _emit(args, r.to_dict(), [
        f"H={r.h_p_estimate:.6g} +/- {r.error:.2g} (threshold {r.threshold:.6g})",
        f"lambda_infinity in [{r.lambda_infinity_lower:.6g}, {r.lambda_infinity_upper:.6g}]",
        f"verdict={r.gap_verdict.value} converged={r.converged}",
    ])
    return EXIT_OK if r.converged else EXIT_SOLVER


def cmd_decay(args) -> int:
    d, pe = _shape_from_args(args), _exponent_from_args(args)
    r = _estimate_from_args(args, d, pe)
    if r.minimizer is None:
        _emit(args, r.to_dict(), [f"solver failure: {'; '.join(r.notes)}"])
        return EXIT_SOLVER
    fits = []
    for fitter, ok in ((fit_boundary_exponent, True), (fit_infinity_exponent, d.is_exterior)):
        if ok:
            try:
                fits.append(fitter(r.minimizer))
            except BandError as exc:
                print(f"skipped fit: {exc}", file=sys.stderr)
    rec = existence_verdict(r, fits)
    payload = {"h_p_estimate": r.h_p_estimate, "gap_verdict": r.gap_verdict.value,
               "fits": [f.as_dict() for f in fits], "existence": rec.as_dict()}
    lines = [f"H={r.h_p_estimate:.6g} verdict={r.gap_verdict.value} existence={rec.verdict.value}"]
    lines += [f"  {side}: fitted {fit:.4f} predicted {pred:.4f} ({'ok' if ok else 'off'})"
              for side, fit, pred, _, ok in rec.rows]
    _emit(args, payload, lines)
    return EXIT_OK if r.converged else EXIT_SOLVER


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    code, summary = run_experiment(cfg, args.out)
    final = summary.get("hardy", [{}])[-1]
    _emit(args, summary, [
        f"status={summary['status']} config_hash={summary['config_hash'][:12]}",
        f"H={final.get('h_p_estimate')} verdict={final.get('gap_verdict')}",
    ])
    return code


def cmd_suite(args) -> int:
    try:
        ps = [float(p) for p in args.p]
    except ValueError as exc:
        raise ConfigError("--p", str(exc)) from None
    if any(not p > 1 for p in ps):
        raise ConfigError("--p", "exponents must exceed 1")
    shapes = [s.lower() for s in args.shapes]
    for s in shapes:
        if s not in _SUITE_PARAMS:
            raise ConfigError("--shapes", f"{s!r} is not a suite shape; choose from {list(SUITE_SHAPES)}")
    code, rows = run_suite(shapes, ps, args.out, args.seed)
    lines = [f"{r['shape']:<14} p={r['p']:<4g} H={r.get('h_p_estimate', float('nan')):<10.5g} "
             f"{r.get('gap_verdict', '-'):<13} {'PASS' if r['passed'] else 'FAIL ' + ','.join(r['failed_checks'])}"
             for r in rows]
    _emit(args, {"rows": rows, "exit_code": code}, lines or ["(empty suite)"])
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardy-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, shape=True):
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.add_argument("--p", type=float, default=2.0)
        sp.add_argument("--n", type=int, default=2)
        if shape:
            sp.add_argument("--shape", default="disk", help=f"one of {sorted(CATALOG)}")
            sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="shape parameter")
            sp.add_argument("--mesh-mode", choices=[m.value for m in Mode])

    sp = sub.add_parser("constants", help="print c_p, c* and c_{p,n}")
    common(sp, shape=False)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("barrier-check", help="certify G^alpha +- G^beta barriers")
    common(sp)
    sp.add_argument("--alpha", type=float, nargs="+", required=True)
    sp.add_argument("--beta", type=float, nargs="+", required=True)
    sp.add_argument("--mode", choices=["boundary", "infinity"])
    sp.add_argument("--collar-width", type=float)
    sp.add_argument("--h", type=float, help="mesh size for numerical reference functions")
    sp.set_defaults(func=cmd_barrier_check)

    for name, func, help_ in (("hardy", cmd_hardy, "estimate the Hardy constant"),
                              ("decay", cmd_decay, "fit decay exponents of the minimizer")):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.add_argument("--h", type=float, required=True)
        sp.add_argument("--r-max", type=float)
        sp.add_argument("--no-bounds", action="store_true", help="skip the bracket at infinity")
        sp.add_argument("--out", help="directory for the report and minimizer dump")
        sp.set_defaults(func=func)

    sp = sub.add_parser("run", help="run the pipeline for a TOML config")
    sp.add_argument("config")
    sp.add_argument("--out", help="override the output directory")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("suite", help="pipeline over catalog shapes and exponents")
    sp.add_argument("--shapes", nargs="*", default=list(SUITE_SHAPES))
    sp.add_argument("--p", nargs="*", default=[str(p) for p in SUITE_PS])
    sp.add_argument("--out", default="hardylab-suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_suite)
    return parser


def _threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=_threads()):
            return args.func(args)
    except ConfigError as exc:
        print(f"hardy-lab: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"hardy-lab: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

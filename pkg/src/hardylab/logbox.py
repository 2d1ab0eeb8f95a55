"""Extrapolation of truncated Hardy quotients in a logarithmic variable.

Near a critical end (the boundary when the threshold is c_p, infinity when it
is c*), near-minimizers look like ``t^a v(log t)`` with ``t`` the distance to
the boundary (or ``|x|``).  Expanding the quotient to second order in ``v'``
turns the truncated problem into a one-dimensional Robin eigenproblem on a
log-interval of length ``T = L + B``:

    lambda(L) = c + A k^2,   (k^2 - rl*rr) sin(kT) - k (rl + rr) cos(kT) = 0,

where ``L`` is the log-length controlled by the truncation (``log(1/eps)``,
``log(R_max)`` or both), ``A`` depends only on the exponents, ``rl``/``rr``
are Robin coefficients at the two ends (``inf`` is Dirichlet) and ``B`` is an
unknown offset.  Fitting ``c`` recovers the limit of the ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, least_squares

__all__ = ["LogBoxModel", "LogBoxFit", "lowest_wavenumber", "boundary_end", "infinity_end",
           "ReducedLogBoxModel", "ReducedFit", "reduced_length", "riccati_g"]


def _robin_residual(k, T, rl, rr):
    s, c = math.sin(k * T), math.cos(k * T)
    if math.isinf(rl) and math.isinf(rr):
        return s
    if math.isinf(rr):
        return -rl * s - k * c
    if math.isinf(rl):
        return -rr * s - k * c
    return (k * k - rl * rr) * s - k * (rl + rr) * c


def lowest_wavenumber(T: float, rl: float, rr: float) -> float:
    """Smallest k >= 0 of the Robin-Robin problem on an interval of length T.

    Both coefficients must be non-negative; the root then lies in [0, pi/T].
    """
    if T <= 0:
        raise ValueError("log-box length must be positive")
    if rl < 0 or rr < 0:
        raise ValueError("Robin coefficients must be non-negative")
    if rl == 0.0 and rr == 0.0:
        return 0.0
    top = math.pi / T
    if math.isinf(rl) and math.isinf(rr):
        return top
    lo = 1e-12 * top
    return brentq(_robin_residual, lo, top, args=(T, rl, rr), xtol=1e-15, rtol=1e-14)


def _a_coefficients(a: float, p: float):
    """Stiffness A and natural Robin coefficient for the profile t^a."""
    stiff = 2.0 * (p - 1.0) * abs(a) ** (p - 2.0) / p
    return stiff


def boundary_end(p: float) -> tuple[float, float]:
    """(A, Robin coefficient of the eps-strip end) for the boundary profile delta^((p-1)/p).

    The strip drops the mass below eps; what remains of the energy there is
    |u(eps)|^p eps^(1-p), which in the log variable gives the coefficient
    (1 - a^(p-1)) / A with a = (p-1)/p.
    """
    a = (p - 1.0) / p
    stiff = _a_coefficients(a, p)
    return stiff, (1.0 - a ** (p - 1.0)) / stiff


def infinity_end(p: float, n: int, outer_dirichlet: bool) -> tuple[float, float]:
    """(A, Robin coefficient of the truncation end R_max) for the profile |x|^((p-n)/p)."""
    if p == n:
        return 1.0, (math.inf if outer_dirichlet else 0.0)
    b = (p - n) / p
    stiff = _a_coefficients(b, p)
    if outer_dirichlet:
        return stiff, math.inf
    return stiff, b * abs(b) ** (p - 2.0) / stiff


@dataclass(frozen=True)
class LogBoxFit:
    limit: float
    offset: float
    robin: tuple
    max_residual: float
    num_points: int

    def as_dict(self) -> dict:
        return {
            "limit": self.limit,
            "offset": self.offset,
            "robin": [None if r is None else float(r) for r in self.robin],
            "max_residual": self.max_residual,
            "num_points": self.num_points,
        }


@dataclass(frozen=True)
class LogBoxModel:
    """lambda(L) = c + A k(L + B)^2 with known or fitted Robin ends.

    ``left``/``right`` are Robin coefficients (``inf`` for Dirichlet); ``None``
    marks a coefficient to be fitted.  ``left`` is the end controlled by the
    ladder parameter.  ``cubic`` adds a free ``D k^3`` term, the next order of
    the expansion, used as a model variant when estimating the fit error.
    """

    stiffness: float
    left: float | None
    right: float | None
    cubic: bool = False
    free_robin: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "free_robin", tuple(i for i, r in enumerate((self.left, self.right)) if r is None))

    @property
    def num_params(self) -> int:
        return 2 + len(self.free_robin) + int(self.cubic)

    def _ends(self, extra):
        ends = [self.left, self.right]
        for i, v in zip(self.free_robin, extra):
            ends[i] = v
        return ends

    def evaluate(self, L, c, B, *extra) -> np.ndarray:
        """Model values; ``extra`` holds the free Robin coefficients, then D if cubic."""
        rl, rr = self._ends(extra[:len(self.free_robin)])
        D = extra[len(self.free_robin)] if self.cubic else 0.0
        L = np.atleast_1d(np.asarray(L, dtype=float))
        k = np.array([lowest_wavenumber(x + B, rl, rr) for x in L])
        return c + self.stiffness * k * k + D * k ** 3

    def fit(self, L, lam) -> LogBoxFit:
        """Least-squares fit of (c, B, free Robin coefficients) to a ladder."""
        L = np.asarray(L, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if len(L) < self.num_params:
            raise ValueError(f"need at least {self.num_params} ladder points, got {len(L)}")
        nfree = len(self.free_robin)
        b_lo = -float(L.min()) + 0.05
        lo = [0.0, b_lo] + [-8.0] * nfree + [-np.inf] * int(self.cubic)
        hi = [float(lam.max()), 60.0] + [6.0] * nfree + [np.inf] * int(self.cubic)

        def resid(x):
            c, B = x[0], x[1]
            extra = list(np.exp(x[2:2 + nfree])) + list(x[2 + nfree:])
            return self.evaluate(L, c, B, *extra) - lam

        best = None
        for c0 in (0.5, 0.9, 0.99):
            for B0 in (0.0, 1.0, 4.0):
                x0 = [c0 * lam.min(), max(B0, b_lo + 0.1)] + [0.0] * (nfree + int(self.cubic))
                try:
                    sol = least_squares(resid, x0, bounds=(lo, hi), xtol=1e-14, ftol=1e-14, gtol=1e-14)
                except ValueError:
                    continue
                if best is None or sol.cost < best.cost:
                    best = sol
        if best is None:
            raise RuntimeError("log-box fit failed for every starting point")
        robin = list(self._ends(np.exp(best.x[2:2 + nfree])))
        return LogBoxFit(
            limit=float(best.x[0]),
            offset=float(best.x[1]),
            robin=tuple(robin),
            max_residual=float(np.abs(best.fun).max()),
            num_points=len(L),
        )


# ---------------------------------------------------------------- exact reduced model
#
# With alpha = d log u / d log t (t the distance to the boundary, or |x|) and
# y = |alpha|^(p-2) alpha, the one-dimensional Euler-Lagrange equation is the
# Riccati equation  dy/ds = g(alpha) - lambda  in s = log t, where
#     g(alpha) = -|alpha|^(p-2) alpha ((m - p) + (p - 1) alpha)
# and m = 1 at the boundary, m = n at infinity (g is lambda_alpha for m = 1).
# Its maximum over alpha is the threshold (c_p or c*), attained at (p-m)/p.
# A truncated ladder point is then a path in y of log-length
#     T(lambda) = int dy / (lambda - g),
# between the end values of alpha: 1 at an eps-strip (the solution is linear
# inside the strip), 0 at a free end and -inf at a Dirichlet end.

_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


def _phi(a, p):
    return np.abs(a) ** (p - 1.0) * np.sign(a)


def riccati_g(alpha, p: float, m: float):
    """g(alpha) = -|alpha|^(p-2) alpha ((m-p) + (p-1) alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    return -_phi(alpha, p) * ((m - p) + (p - 1.0) * alpha)


def _psi(y, p):
    return np.abs(y) ** (1.0 / (p - 1.0)) * np.sign(y)


def _g_of_y(y, p, m):
    return -y * ((m - p) + (p - 1.0) * _psi(y, p))


def _y_rule(p, m, a_lo, a_hi, panels=12):
    """Quadrature nodes/weights in y for the path alpha in [a_lo, a_hi]."""
    y_hi = float(_phi(a_hi, p))
    y_star = float(_phi((p - m) / p, p))
    nodes, weights = [], []
    if math.isinf(a_lo):
        # Dirichlet end: y -> -inf where the integrand decays like |y|^(-p/(p-1));
        # y = yc - (z^-k - 1) with k = 2(p-1) makes the z-integrand bounded
        y_lo = min(y_star, 0.0, y_hi) - 1.0
        k = 2.0 * (p - 1.0)
        z = 0.5 * (_GL_X + 1.0)
        nodes.append(y_lo - (z ** (-k) - 1.0))
        weights.append(0.5 * _GL_W * k * z ** (-k - 1.0))
    else:
        y_lo = float(_phi(a_lo, p))
    cuts = sorted({y_lo, y_hi} | {b for b in (0.0, y_star) if y_lo < b < y_hi})
    edges = np.linspace(0.0, 1.0, panels + 1)
    for a, b in zip(cuts[:-1], cuts[1:]):
        # cosine grading clusters nodes at the cuts (g has a |y|^(1/(p-1)) kink at 0)
        for u0, u1 in zip(edges[:-1], edges[1:]):
            u = 0.5 * (u1 - u0) * (_GL_X + 1.0) + u0
            s = 0.5 - 0.5 * np.cos(np.pi * u)
            ds = 0.5 * np.pi * np.sin(np.pi * u)
            nodes.append(a + (b - a) * s)
            weights.append(0.5 * (u1 - u0) * _GL_W * (b - a) * ds)
    return np.concatenate(nodes), np.concatenate(weights)


def reduced_length(lam, p: float, m: float, a_lo: float, a_hi: float) -> np.ndarray:
    """Log-length T(lambda) of the reduced path alpha: a_hi -> a_lo (vectorized in lambda).

    Requires lambda above max g on the path; otherwise returns inf.
    """
    if not a_hi > a_lo:
        raise ValueError("need a_lo < a_hi")
    y, w = _y_rule(p, m, a_lo, a_hi)
    g = _g_of_y(y, p, m)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    gap = lam[:, None] - g[None, :]
    # the nodes need not hit the maximizer of g, so compare against the exact path maximum
    ok = np.all(gap > 0, axis=1) & (lam > _path_max(p, m, a_lo, a_hi))
    return np.where(ok, np.sum(w / np.where(gap > 0, gap, 1.0), axis=1), np.inf)


def _path_max(p, m, a_lo, a_hi):
    """max of g over [a_lo, a_hi]: the threshold if the critical exponent is on the path."""
    star = (p - m) / p
    if a_lo <= star <= a_hi:
        return float(riccati_g(star, p, m))
    ends = [a for a in (a_lo, a_hi) if math.isfinite(a)]
    return float(max(riccati_g(np.array(ends), p, m))) if ends else -math.inf


@dataclass(frozen=True)
class ReducedFit:
    limit: float
    shift: float
    offset: float
    alpha_ends: tuple
    max_residual: float
    num_points: int

    def as_dict(self) -> dict:
        return {
            "limit": self.limit,
            "shift": self.shift,
            "offset": self.offset,
            "alpha_ends": [float(a) if math.isfinite(a) else str(a) for a in self.alpha_ends],
            "max_residual": self.max_residual,
            "num_points": self.num_points,
        }


@dataclass(frozen=True)
class ReducedLogBoxModel:
    """Exact one-dimensional reduction: lambda(L) = c - c_m + Lambda, T(Lambda) = L + B.

    ``m`` is 1 for the boundary end and n for infinity.  ``a_lo``/``a_hi`` are
    the alpha values at the two ends of the path, ``None`` marking the fitted
    one; the shift ``c`` and offset ``B`` are always fitted.  The limit of the
    ladder is c - c_m + max g over the path, i.e. ``c`` when the critical
    exponent lies on the path and below it (a bound state) otherwise.
    """

    p: float
    m: float
    a_lo: float | None
    a_hi: float | None

    def __post_init__(self):
        if (self.a_lo is None) == (self.a_hi is None):
            raise ValueError("exactly one end of the path must be fitted")

    num_params = 3

    @property
    def threshold(self) -> float:
        return float(riccati_g((self.p - self.m) / self.p, self.p, self.m))

    def _ends(self, x):
        # the free end is parametrized in y = |alpha|^(p-2) alpha, in which the
        # path length is smooth (alpha itself has a singular map near 0)
        p = self.p
        if self.a_lo is None:
            y = float(_phi(self.a_hi, p)) - math.exp(x)
            return float(_psi(y, p)), self.a_hi
        if math.isinf(self.a_lo):
            return self.a_lo, float(_psi(x, p))
        y = float(_phi(self.a_lo, p)) + math.exp(x)
        return self.a_lo, float(_psi(y, p))

    def free_parameter(self, alpha: float) -> float:
        """Inverse of the free-end parametrization."""
        y = float(_phi(alpha, self.p))
        if self.a_lo is None:
            return math.log(float(_phi(self.a_hi, self.p)) - y)
        if math.isinf(self.a_lo):
            return y
        return math.log(y - float(_phi(self.a_lo, self.p)))

    def limit(self, c, x) -> float:
        lo, hi = self._ends(x)
        return c - self.threshold + _path_max(self.p, self.m, lo, hi)

    def evaluate(self, L, c, B, x) -> np.ndarray:
        lo, hi = self._ends(x)
        floor = _path_max(self.p, self.m, lo, hi)
        out = []
        for Li in np.atleast_1d(np.asarray(L, dtype=float)):
            target = Li + B
            f = lambda lam: float(reduced_length(lam, self.p, self.m, lo, hi)[0]) - target
            a = floor + 1e-14 * max(1.0, abs(floor))
            b = max(a, 0.0) + 1.0
            while f(b) > 0:
                b *= 2.0
            out.append(c - self.threshold + brentq(f, a, b, xtol=1e-15, rtol=1e-14))
        return np.array(out)

    def fit(self, L, lam) -> ReducedFit:
        """Fit (c, B, free end) with residuals in log-length scaled by the local slope."""
        L = np.asarray(L, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if len(L) < self.num_params:
            raise ValueError(f"need at least {self.num_params} ladder points, got {len(L)}")
        order = np.argsort(L)
        L, lam = L[order], lam[order]
        slope = np.abs(np.gradient(lam, L)) if len(L) > 1 else np.ones(1)
        cn = self.threshold
        top = float(lam.min()) * (1.0 - 1e-9)

        def resid(v):
            c, B, x = v
            lo, hi = self._ends(x)
            T = reduced_length(lam - c + cn, self.p, self.m, lo, hi)
            T = np.where(np.isfinite(T), T, 1e3)
            return (T - L - B) * slope

        x_lo, x_hi = (-8.0, 6.0) if not (self.a_lo is not None and math.isinf(self.a_lo)) else (-50.0, 50.0)
        x_starts = (-1.0, 1.0) if x_hi < 10 else (-0.5, 2.0)
        best = None
        for c0 in (0.9, 0.99):
            for x0 in x_starts:
                v0 = [min(c0 * lam.min(), top), 0.0, x0]
                try:
                    sol = least_squares(resid, v0, bounds=([0.0, -60.0, x_lo], [top, 60.0, x_hi]),
                                        xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=400)
                except ValueError:
                    continue
                if best is None or sol.cost < best.cost:
                    best = sol
        if best is None:
            raise RuntimeError("reduced log-box fit failed for every starting point")
        c, B, x = best.x
        return ReducedFit(
            limit=float(self.limit(c, x)),
            shift=float(c),
            offset=float(B),
            alpha_ends=tuple(float(a) for a in self._ends(x)),
            max_residual=float(np.abs(best.fun).max()),
            num_points=len(L),
        )

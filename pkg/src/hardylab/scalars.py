"""Closed-form Hardy constants and the exponent algebra around them.

All functions are pure and operate on plain floats.  Inversions are done by
bracketed bisection on intervals where the target function is monotone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

__all__ = [
    "PExponent",
    "AlphaBranch",
    "OutOfRangeError",
    "DegenerateDimensionError",
    "hardy_one_d_constant",
    "hardy_point_constant",
    "exterior_threshold",
    "lambda_of_alpha",
    "alpha_of_lambda",
    "beta_residual",
    "beta_root_at_infinity",
    "exterior_alpha_pair",
    "exterior_scale",
    "barrier_A_constant",
    "EVAL_TOL",
    "ROOT_TOL",
]

EVAL_TOL = 1e-12
ROOT_TOL = 1e-10


class OutOfRangeError(ValueError):
    """Requested value lies outside the range of the map being inverted."""


class DegenerateDimensionError(ValueError):
    """Operation undefined when p equals the ambient dimension."""


@dataclass(frozen=True)
class PExponent:
    """Integrability exponent ``p`` together with the ambient dimension ``n``."""

    p: float
    n: int = 2

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must be > 1, got {self.p}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")

    @property
    def critical_alpha(self) -> float:
        return (self.p - 1.0) / self.p


class AlphaBranch(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


def _pe(pe_or_p, n=None) -> PExponent:
    if isinstance(pe_or_p, PExponent):
        return pe_or_p
    return PExponent(float(pe_or_p), 2 if n is None else n)


def hardy_one_d_constant(pe: PExponent) -> float:
    """c_p = ((p-1)/p)^p."""
    pe = _pe(pe)
    return ((pe.p - 1.0) / pe.p) ** pe.p


def hardy_point_constant(pe: PExponent) -> float:
    """c*_{p,n} = |(p-n)/p|^p; exactly zero when p == n."""
    pe = _pe(pe)
    if pe.p == pe.n:
        return 0.0
    return abs((pe.p - pe.n) / pe.p) ** pe.p


def exterior_threshold(pe: PExponent) -> float:
    """c_{p,n} = min(c_p, c*_{p,n})."""
    return min(hardy_one_d_constant(pe), hardy_point_constant(pe))


def lambda_of_alpha(pe: PExponent, alpha: float) -> float:
    """lambda_alpha = (p-1) alpha^(p-1) (1-alpha) for alpha in [0, 1]."""
    pe = _pe(pe)
    if alpha < 0.0 or alpha > 1.0:
        raise OutOfRangeError(f"alpha must lie in [0, 1], got {alpha}")
    return (pe.p - 1.0) * alpha ** (pe.p - 1.0) * (1.0 - alpha)


def _bisect_increasing(f, lo: float, hi: float, target: float, maxiter: int = 400) -> float:
    """Root of f(x) = target for f non-decreasing on [lo, hi]."""
    flo = f(lo) - target
    fhi = f(hi) - target
    if flo >= 0.0:
        return lo
    if fhi <= 0.0:
        return hi
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) - target < 0.0:
            lo = mid
        else:
            hi = mid
    # closest endpoint in value
    return lo if abs(f(lo) - target) <= abs(f(hi) - target) else hi


def alpha_of_lambda(pe: PExponent, lam: float, branch: AlphaBranch) -> float:
    """Invert ``lambda_of_alpha`` on one monotone branch.

    The lower branch covers alpha in [0, (p-1)/p], the upper branch
    [(p-1)/p, 1]; both meet at the maximum c_p.
    """
    pe = _pe(pe)
    cp = hardy_one_d_constant(pe)
    if lam < -EVAL_TOL or lam > cp + EVAL_TOL:
        raise OutOfRangeError(f"lambda={lam} outside [0, c_p={cp}]")
    lam = min(max(lam, 0.0), cp)
    a_star = pe.critical_alpha
    branch = AlphaBranch(branch)
    if lam >= cp:
        # fold point: bisection only resolves sqrt(eps) here
        return a_star
    if branch is AlphaBranch.LOWER:
        return _bisect_increasing(lambda a: lambda_of_alpha(pe, a), 0.0, a_star, lam)
    # decreasing on the upper branch: flip sign
    return _bisect_increasing(lambda a: -lambda_of_alpha(pe, a), a_star, 1.0, -lam)


def beta_residual(pe: PExponent, beta: float) -> float:
    """Left-hand side of -beta|beta|^(p-2) [beta (p-1) + n - p]."""
    pe = _pe(pe)
    p, n = pe.p, pe.n
    if beta == 0.0:
        return 0.0
    return -beta * abs(beta) ** (p - 2.0) * (beta * (p - 1.0) + n - p)


def beta_root_at_infinity(pe: PExponent, mu: float) -> float:
    """Exponent beta(mu) of the minimal-growth solution |x|^beta at infinity.

    Solves -beta|beta|^(p-2)[beta(p-1) + n - p] = mu on the side
    beta <= (p-n)/p, where the left-hand side is monotone increasing.
    """
    pe = _pe(pe)
    p, n = pe.p, pe.n
    if p == n:
        raise DegenerateDimensionError("beta(mu) is undefined for p == n")
    cstar = hardy_point_constant(pe)
    if mu < -EVAL_TOL or mu > cstar + EVAL_TOL:
        raise OutOfRangeError(f"mu={mu} outside [0, c*={cstar}]")
    mu = min(max(mu, 0.0), cstar)
    top = (p - n) / p
    if mu >= cstar:
        return top
    if p < n:
        lo = (p - n) / (p - 1.0)
    else:
        lo = 0.0
    return _bisect_increasing(lambda b: beta_residual(pe, b), lo, top, mu)


def exterior_scale(pe: PExponent) -> float:
    """|(p-1)/(p-n)|^p, the factor mapping H_p to the lambda_alpha scale at infinity."""
    pe = _pe(pe)
    if pe.p == pe.n:
        raise DegenerateDimensionError("scale undefined for p == n")
    return abs((pe.p - 1.0) / (pe.p - pe.n)) ** pe.p


def exterior_alpha_pair(pe: PExponent, lam: float) -> tuple[float, float]:
    """(alpha1, alpha2) with lambda_alpha1 = lambda_alpha2 = |(p-1)/(p-n)|^p lam.

    alpha1 is on the upper branch and alpha2 on the lower one.
    """
    pe = _pe(pe)
    scaled = exterior_scale(pe) * lam
    cp = hardy_one_d_constant(pe)
    if scaled > cp + EVAL_TOL or scaled < -EVAL_TOL:
        raise OutOfRangeError(f"scaled lambda {scaled} outside [0, c_p={cp}]")
    return (
        alpha_of_lambda(pe, scaled, AlphaBranch.UPPER),
        alpha_of_lambda(pe, scaled, AlphaBranch.LOWER),
    )


def barrier_A_constant(pe: PExponent, alpha: float, beta: float) -> float:
    """First-order coefficient A = (p-2) lam_a beta/alpha + lam_b alpha^(p-2)/beta^(p-2).

    Barriers G^a +- G^b behave as sub/supersolutions near the degenerate end
    exactly when A < (p-1) lam_a.
    """
    pe = _pe(pe)
    p = pe.p
    la = lambda_of_alpha(pe, alpha)
    lb = lambda_of_alpha(pe, beta)
    return (p - 2.0) * la * beta / alpha + lb * alpha ** (p - 2.0) / beta ** (p - 2.0)

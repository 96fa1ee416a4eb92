"""Asymptotic error characterization of l1-constrained LASSO.

Everything here is deterministic and normalized to unit noise level; callers
multiply error norms and objectives by sigma.

The per-dimension dual value for a sparsity ratio ``beta`` is

    q(beta, nu) = beta (1 + nu^2) + c (1 - beta) T(nu),
    T(nu)       = E[(Z - nu)_+^2] = (1 + nu^2)(1 - Phi(nu)) - nu phi(nu),

with ``c = 2`` for arbitrary-sign signals and ``c = 1`` for nonnegative ones.
Its minimum over ``nu`` is the effective ratio ``alpha_w``; the same number is
the root of the erfinv threshold equation, which gives two independent routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .special import (
    SQRT2,
    erfinv,
    gaussian_tail_second_moment,
    std_normal_pdf,
    std_normal_sf,
)

# Returned as nu_star when beta == 0 (q decreases forever). Serializers map it to null.
NU_UNBOUNDED = math.inf

_XTOL = 1e-15
_RTOL = 4.5 * np.finfo(float).eps


class BracketError(ValueError):
    """Root bracket does not contain a sign change."""

    def __init__(self, what, lo, f_lo, hi, f_hi):
        super().__init__(
            f"{what}: no sign change on [{lo!r}, {hi!r}] (f(lo)={f_lo!r}, f(hi)={f_hi!r})"
        )
        self.lo, self.f_lo, self.hi, self.f_hi = lo, f_lo, hi, f_hi


@dataclass(frozen=True)
class PhaseParams:
    alpha: float
    beta: float
    signed: bool = False

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (0.0 <= self.beta < self.alpha):
            raise ValueError(f"beta must lie in [0, alpha), got beta={self.beta}, alpha={self.alpha}")


@dataclass(frozen=True)
class TheoryPoint:
    """Characterized (alpha, beta) point at sigma = 1.

    ``rho`` and ``zeta_over_sqrt_n`` are None above the l1 threshold, where
    the worst-case error diverges.
    """

    params: PhaseParams
    alpha_w: float
    nu_star: float
    rho: float | None
    zeta_over_sqrt_n: float | None
    below_threshold: bool

    def error_norm(self, sigma=1.0):
        return None if self.rho is None else sigma * self.rho

    def zeta(self, sigma=1.0):
        return None if self.zeta_over_sqrt_n is None else sigma * self.zeta_over_sqrt_n


@dataclass(frozen=True)
class ContourCurve:
    rho: float
    signed: bool
    points: list[tuple[float, float]]
    # grid values for which no beta in (0, alpha) reaches the requested rho
    omitted: list[float] = field(default_factory=list)


def _side_factor(signed):
    return 1.0 if signed else 2.0


def q_value(beta, nu, signed=False):
    """Per-dimension squared residual of the generic dual problem."""
    c = _side_factor(signed)
    return beta * (1.0 + nu * nu) + c * (1.0 - beta) * gaussian_tail_second_moment(nu)


def q_unsigned(beta, nu):
    return q_value(beta, nu, signed=False)


def q_signed(beta, nu):
    return q_value(beta, nu, signed=True)


def q_derivative(beta, nu, signed=False):
    # dT/dnu = 2 (nu (1 - Phi(nu)) - phi(nu))
    c = _side_factor(signed)
    return 2.0 * beta * nu + 2.0 * c * (1.0 - beta) * (nu * std_normal_sf(nu) - std_normal_pdf(nu))


def q_second_derivative(beta, nu, signed=False):
    c = _side_factor(signed)
    return 2.0 * beta + 2.0 * c * (1.0 - beta) * std_normal_sf(nu)


def optimal_nu(beta, signed=False):
    """Minimize q(beta, .) over nu >= 0.

    Returns ``(nu_star, q_min)``. For ``beta == 0`` the infimum is 0 and is
    not attained; ``(NU_UNBOUNDED, 0.0)`` is returned.
    """
    if not (0.0 <= beta < 1.0):
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    if beta == 0.0:
        return NU_UNBOUNDED, 0.0

    def dq(nu):
        return float(q_derivative(beta, nu, signed))

    # dq(0) = -2c(1-beta)phi(0) < 0 and dq grows like 2 beta nu
    hi = 1.0
    while dq(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise BracketError("optimal_nu", 0.0, dq(0.0), hi, dq(hi))
    nu = brentq(dq, 0.0, hi, xtol=_XTOL, rtol=_RTOL, maxiter=500)
    # one Newton step; q is strictly convex so this only tightens |q'|
    step = dq(nu) / float(q_second_derivative(beta, nu, signed))
    if abs(step) < 1e-6:
        nu -= step
    return nu, float(q_value(beta, nu, signed))


def threshold_residual(alpha_w, beta, signed=False):
    """Left-hand side of the erfinv threshold equation; zero at the l1 characterization."""
    if signed:
        t = erfinv(2.0 * (1.0 - alpha_w) / (1.0 - beta) - 1.0)
        lead = math.sqrt(1.0 / (2.0 * math.pi))
    else:
        t = erfinv((1.0 - alpha_w) / (1.0 - beta))
        lead = math.sqrt(2.0 / math.pi)
    return (1.0 - beta) * lead * math.exp(-t * t) / alpha_w - SQRT2 * t


def l1_threshold_alpha(beta, signed=False):
    """Solve the erfinv equation for alpha_w given beta, 0 < beta < 1.

    The root lies in (beta, 1): the residual tends to -inf as alpha_w -> beta
    and is positive at alpha_w -> 1.
    """
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    span = 1.0 - beta
    f = lambda a: threshold_residual(a, beta, signed)  # noqa: E731
    lo, hi = beta + span * 1e-14, 1.0 - span * 1e-14
    f_lo, f_hi = f(lo), f(hi)
    if not (f_lo < 0.0 < f_hi):
        raise BracketError("l1_threshold_alpha", lo, f_lo, hi, f_hi)
    return brentq(f, lo, hi, xtol=_XTOL, rtol=_RTOL, maxiter=500)


def alpha_w_of(beta, signed=False):
    """alpha_w with the beta = 0 limit (no support, zero width) included."""
    return 0.0 if beta == 0.0 else l1_threshold_alpha(beta, signed)


def rho_from_alpha_w(alpha, alpha_w):
    return math.sqrt(alpha_w / (alpha - alpha_w))


def characterize(params: PhaseParams) -> TheoryPoint:
    alpha_w = alpha_w_of(params.beta, params.signed)
    nu_star, _ = optimal_nu(params.beta, params.signed)
    below = alpha_w < params.alpha
    if below:
        rho = rho_from_alpha_w(params.alpha, alpha_w)
        zeta = math.sqrt(params.alpha - alpha_w)
    else:
        rho = zeta = None
    return TheoryPoint(params, alpha_w, nu_star, rho, zeta, below)


def weak_threshold_beta(alpha, signed=False):
    """beta at which alpha_w(beta) == alpha, i.e. the l1 recovery boundary."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    g = lambda b: l1_threshold_alpha(b, signed) - alpha  # noqa: E731
    lo, hi = alpha * 1e-9, alpha * (1.0 - 1e-12)
    return brentq(g, lo, hi, xtol=1e-15, rtol=_RTOL, maxiter=500)


def beta_on_contour(alpha, rho, signed=False):
    """beta with worst-case error ratio exactly rho at this alpha, or None."""
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    target = alpha * rho * rho / (1.0 + rho * rho)
    # alpha_w(beta) > beta, so the solution sits below target
    g = lambda b: l1_threshold_alpha(b, signed) - target  # noqa: E731
    lo, hi = target * 1e-12, target * (1.0 - 1e-12)
    if not (0.0 < target < 1.0) or g(lo) >= 0.0 or g(hi) <= 0.0:
        return None
    return brentq(g, lo, hi, xtol=1e-15, rtol=_RTOL, maxiter=500)


def contour_curve(rho, signed=False, alpha_grid: Sequence[float] = ()) -> ContourCurve:
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    points, omitted = [], []
    for alpha in sorted(set(float(a) for a in alpha_grid)):
        if not (0.0 < alpha < 1.0):
            raise ValueError(f"grid values must lie in (0, 1), got {alpha}")
        beta = beta_on_contour(alpha, rho, signed)
        if beta is None:
            omitted.append(alpha)
        else:
            points.append((alpha, beta))
    return ContourCurve(float(rho), bool(signed), points, omitted)

"""Sampled evaluation of the overwhelming dual problems.

For Gaussian vectors g (length m), h (length n) and a nonnegative sparse
``x_tilde`` (support in the last k coordinates) the general problem is

    xi_ov = max_{nu, lam}  sigma sqrt(|g|^2 - |h + nu 1 - lam|^2) - <lam, x_tilde>
            s.t. nu >= 0, 0 <= lam_i <= 2 nu      (unsigned)
                 nu >= 0, lam_i >= 0              (signed)

Its optimizer predicts LASSO's objective (xi_ov) and error norm
``sigma r / sqrt(|g|^2 - r^2)`` with ``r = |h + nu 1 - lam|``.

Solution strategy: for fixed nu the optimal lam is ``P_box(c - t x_tilde)``
with ``c = h + nu`` and a scalar ``t`` fixed by a monotone equation; the
outer problem in nu is concave with a closed-form derivative. Both are
solved by bracketed root finding. A projected-gradient ascent on the full
(nu, lam) vector certifies stationarity and polishes if needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import rng

GUARD = 0.999999


class Divergent(ArithmeticError):
    """Dual problem has no point with |h + nu 1 - lam| < |g| (above threshold)."""


@dataclass(frozen=True)
class GaussianPair:
    g: np.ndarray
    h: np.ndarray
    seed: int

    @property
    def m(self):
        return self.g.shape[0]

    @property
    def n(self):
        return self.h.shape[0]


@dataclass
class OracleSample:
    xi_ov: float
    nu_hat: float
    lambda_hat: np.ndarray
    w_hat_norm: float
    overwhelming: bool
    residual_norm: float
    pg_norm: float = 0.0
    iterations: int = 0


def sample_pair(m, n, seed) -> GaussianPair:
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    g = rng.standard_normal(rng.substream(seed, rng.STREAM_G), m)
    h = rng.standard_normal(rng.substream(seed, rng.STREAM_H), n)
    return GaussianPair(g, h, int(seed))


def sparse_x_tilde(n, k, magnitude):
    x = np.zeros(n)
    if k:
        x[n - k:] = magnitude
    return x


def _check_x_tilde(x_tilde, n):
    x = np.asarray(x_tilde, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x_tilde must have length {n}")
    if np.any(x < 0.0) or not np.all(np.isfinite(x)):
        raise ValueError("x_tilde entries must be finite and nonnegative")
    return x


def _box(c, nu, signed):
    """Clamp to the lam box for this nu."""
    return np.maximum(c, 0.0) if signed else np.clip(c, 0.0, 2.0 * nu)


def _residual_at_t(c, x, nu, t, signed):
    lam = _box(c - t * x, nu, signed)
    return lam, c - lam


# -- general problem ---------------------------------------------------------


def _general_inner(c, x, nu, G, sigma, signed):
    """Optimal lam for fixed nu. Returns (lam, r, S, t) with S = sqrt(G^2 - |r|^2)."""
    _, r0 = _residual_at_t(c, x, nu, 0.0, signed)
    R0sq = float(r0 @ r0)
    if R0sq >= G * G:
        return None

    def phi(t):
        _, r = _residual_at_t(c, x, nu, t, signed)
        return sigma * t - math.sqrt(max(G * G - float(r @ r), 0.0))

    t_hi = G / sigma
    if phi(0.0) >= 0.0 or not np.any(x):
        # with x = 0 the clamp does not depend on t
        t = 0.0
    elif phi(t_hi) <= 0.0:
        # phi(t_hi) = G - S >= 0 in exact arithmetic; only rounding lands here
        t = t_hi
    else:
        t = brentq(phi, 0.0, t_hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    lam, r = _residual_at_t(c, x, nu, t, signed)
    S = math.sqrt(max(G * G - float(r @ r), 0.0))
    return lam, r, S, t


def _general_dnu(h, x, nu, G, sigma, signed):
    """d/dnu of the inner-maximized objective (envelope with moving upper bound)."""
    inner = _general_inner(h + nu, x, nu, G, sigma, signed)
    if inner is None:
        return math.inf
    lam, r, S, _ = inner
    if S <= 0.0:
        return math.inf
    grad_lam = sigma * r / S - x
    d = -sigma * r.sum() / S
    if not signed:
        # raising nu lifts the 2 nu cap on every coordinate sitting at it
        upper = lam >= 2.0 * nu
        d += 2.0 * np.maximum(grad_lam[upper], 0.0).sum()
    return float(d)


def _domain_start(h, G, signed):
    """Smallest nu >= 0 with dist(h + nu, box(nu)) < G, or 0."""

    def dist2(nu):
        c = h + nu
        r = c - _box(c, nu, signed)
        return float(r @ r)

    if dist2(0.0) < G * G:
        return 0.0
    hi = 1.0
    while dist2(hi) >= G * G:
        hi *= 2.0
    return brentq(lambda v: dist2(v) - G * G, 0.0, hi, xtol=1e-15, rtol=1e-15)


def _objective(h, x, nu, lam, G, sigma):
    r = h + nu - lam
    return sigma * math.sqrt(max(G * G - float(r @ r), 0.0)) - float(lam @ x)


def _solve_general(sigma, pair, x_tilde, signed):
    h, G = pair.h, float(np.linalg.norm(pair.g))
    x = _check_x_tilde(x_tilde, pair.n)
    nu_lo = _domain_start(h, G, signed)
    lo = nu_lo
    if nu_lo > 0.0:
        # step inside the domain where the derivative is finite and positive
        eps = 1e-12 * (1.0 + nu_lo)
        while _general_inner(h + lo, x, lo, G, sigma, signed) is None or not math.isfinite(
            _general_dnu(h, x, lo, G, sigma, signed)
        ):
            lo += eps
            eps *= 2.0
    f = lambda v: _general_dnu(h, x, v, G, sigma, signed)  # noqa: E731
    if f(lo) <= 0.0:
        nu = lo
    else:
        hi = max(2.0 * lo, 1.0)
        while f(hi) > 0.0:
            hi *= 2.0
            if hi > 1e12:
                raise Divergent("dual objective increases without bound in nu")
        nu = brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    lam, r, S, _ = _general_inner(h + nu, x, nu, G, sigma, signed)
    return nu, lam, G


def project_dual_set(nu0, lam0, signed=False):
    """Euclidean projection onto {nu >= 0, 0 <= lam <= 2 nu} (or {nu, lam >= 0})."""
    lam0 = np.asarray(lam0, dtype=float)
    if signed:
        return max(nu0, 0.0), np.maximum(lam0, 0.0)
    # minimize (nu - nu0)^2 + sum (lam0_i - 2 nu)_+^2 over nu >= 0 (the lower clamp
    # does not depend on nu); stationarity nu = (nu0 + 2 sum_J lam0) / (1 + 4|J|)
    # with J = {i : lam0_i > 2 nu}
    top = np.sort(lam0[lam0 > 0.0])[::-1]
    csum = np.concatenate(([0.0], np.cumsum(top)))
    j = np.arange(top.size + 1)
    cand = (nu0 + 2.0 * csum) / (1.0 + 4.0 * j)
    upper = np.concatenate(([np.inf], top))
    lower = np.concatenate((top, [-np.inf]))
    ok = (2.0 * cand <= upper) & (2.0 * cand >= lower)
    nu = float(cand[np.argmax(ok)]) if ok.any() else float(cand[-1])
    nu = max(nu, 0.0)
    return nu, np.clip(lam0, 0.0, 2.0 * nu)


def _gradient(h, x, nu, lam, G, sigma):
    r = h + nu - lam
    S = math.sqrt(G * G - float(r @ r))
    return -sigma * r.sum() / S, sigma * r / S - x


def pg_norm(sigma, pair, x_tilde, nu, lam, signed=False):
    """Unit-step projected-gradient norm of the general objective at (nu, lam)."""
    G = float(np.linalg.norm(pair.g))
    x = np.asarray(x_tilde, dtype=float)
    d_nu, d_lam = _gradient(pair.h, x, nu, lam, G, sigma)
    nu_p, lam_p = project_dual_set(nu + d_nu, lam + d_lam, signed)
    return math.sqrt((nu_p - nu) ** 2 + float((lam_p - lam) @ (lam_p - lam)))


def projected_gradient_ascent(sigma, pair, x_tilde, signed=False, nu0=None, lam0=None,
                              max_iter=50_000, tol=1e-8):
    """Maximize the general dual objective by projected gradient ascent.

    Backtracking from step 1.0 by halving with Armijo constant 1e-4; trial points
    whose residual reaches GUARD * |g|^2 are rejected. Returns
    ``(nu, lam, iterations, pg_norm)``.
    """
    h = pair.h
    G = float(np.linalg.norm(pair.g))
    x = _check_x_tilde(x_tilde, pair.n)
    if nu0 is None:
        nu0 = _domain_start(h, G, signed) * 1.01 + 0.1
        lam0 = _box(h + nu0, nu0, signed)
    nu, lam = project_dual_set(float(nu0), np.array(lam0, dtype=float), signed)
    r = h + nu - lam
    if float(r @ r) >= GUARD * G * G:
        raise Divergent("starting point outside the square-root domain")
    f = _objective(h, x, nu, lam, G, sigma)
    step = 1.0
    it = 0
    pg = math.inf
    for it in range(1, max_iter + 1):
        d_nu, d_lam = _gradient(h, x, nu, lam, G, sigma)
        nu_p, lam_p = project_dual_set(nu + d_nu, lam + d_lam, signed)
        pg = math.sqrt((nu_p - nu) ** 2 + float((lam_p - lam) @ (lam_p - lam)))
        if pg <= tol * (1.0 + abs(f)):
            break
        step = min(1.0, step * 4.0)
        while True:
            nu_t, lam_t = project_dual_set(nu + step * d_nu, lam + step * d_lam, signed)
            r = h + nu_t - lam_t
            if float(r @ r) < GUARD * G * G:
                f_t = _objective(h, x, nu_t, lam_t, G, sigma)
                gain = d_nu * (nu_t - nu) + float(d_lam @ (lam_t - lam))
                if f_t >= f + 1e-4 * gain:
                    break
            step *= 0.5
            if step < 1e-20:
                return nu, lam, it, pg
        nu, lam, f = nu_t, lam_t, f_t
    return nu, lam, it, pg


def _make_sample(sigma, pair, x, nu, lam, signed, iterations=0):
    G = float(np.linalg.norm(pair.g))
    r = pair.h + nu - lam
    R = float(np.linalg.norm(r))
    overwhelming = R < G
    xi = _objective(pair.h, x, nu, lam, G, sigma)
    w = sigma * R / math.sqrt(G * G - R * R) if overwhelming else math.inf
    pg = pg_norm(sigma, pair, x, nu, lam, signed) if overwhelming else math.inf
    return OracleSample(xi, nu, lam, w, overwhelming, R, pg, iterations)


def _xi_ov(sigma, pair, x_tilde, signed):
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    x = _check_x_tilde(x_tilde, pair.n)
    nu, lam, _ = _solve_general(sigma, pair, x, signed)
    sample = _make_sample(sigma, pair, x, nu, lam, signed)
    if sample.pg_norm > 1e-8 * (1.0 + abs(sample.xi_ov)):
        nu, lam, it, _ = projected_gradient_ascent(sigma, pair, x, signed, nu, lam)
        sample = _make_sample(sigma, pair, x, nu, lam, signed, it)
    return sample


def xi_ov_general(sigma, pair, x_tilde) -> OracleSample:
    """Unsigned general dual problem (box 0 <= lam <= 2 nu)."""
    return _xi_ov(sigma, pair, x_tilde, signed=False)


def xi_ov_signed_general(sigma, pair, x_tilde) -> OracleSample:
    """Signed general dual problem (lam >= 0, no upper bound)."""
    return _xi_ov(sigma, pair, x_tilde, signed=True)


# -- generic problem (infinite magnitudes) ----------------------------------


def generic_residual(h, k, nu, signed=False):
    """Residual h + nu - lam for the closed-form optimal lam at this nu."""
    n = h.shape[0]
    r = np.empty(n)
    off = h[: n - k]
    if signed:
        r[: n - k] = np.minimum(off + nu, 0.0)
    else:
        r[: n - k] = np.sign(off) * np.maximum(np.abs(off) - nu, 0.0)
    r[n - k:] = h[n - k:] + nu
    return r


def xi_ov_generic(pair, k, signed=False):
    """min over nu >= 0 of |h + nu 1 - lam(nu)|; returns (xi_gen, nu_gen).

    With k = 0 the residual vanishes once nu >= max|h_i| (unsigned) or
    nu >= max(-h_i) (signed); the smallest such nu is returned.
    """
    h = pair.h
    n = h.shape[0]
    if not (0 <= k < n):
        raise ValueError(f"k must satisfy 0 <= k < n, got k={k}, n={n}")
    off, on = h[: n - k], h[n - k:]

    def half_slope(nu):
        # (1/2) d/dnu |r(nu)|^2, nondecreasing in nu
        if signed:
            s = np.minimum(off + nu, 0.0).sum()
        else:
            s = -np.maximum(np.abs(off) - nu, 0.0).sum()
        return float(s + (on + nu).sum())

    if half_slope(0.0) >= 0.0:
        nu = 0.0
    elif k == 0:
        nu = float(np.max(np.abs(off))) if not signed else float(max(np.max(-off), 0.0))
    else:
        hi = 1.0
        while half_slope(hi) < 0.0:
            hi *= 2.0
        nu = brentq(half_slope, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    r = generic_residual(h, k, nu, signed)
    return float(np.linalg.norm(r)), nu


def generic_sample(sigma, pair, k, signed=False) -> OracleSample:
    """OracleSample for the infinite-magnitude limit of x_tilde."""
    xi_gen, nu = xi_ov_generic(pair, k, signed)
    G = float(np.linalg.norm(pair.g))
    if xi_gen >= G:
        raise Divergent(f"generic residual {xi_gen:.6g} >= |g| = {G:.6g}")
    lam = pair.h + nu - generic_residual(pair.h, k, nu, signed)
    lam[pair.n - k:] = 0.0
    w = sigma * xi_gen / math.sqrt(G * G - xi_gen * xi_gen)
    return OracleSample(sigma * math.sqrt(G * G - xi_gen * xi_gen), nu, lam, w, True, xi_gen)


def w_hat_norm(sigma, pair, sample: OracleSample):
    r = pair.h + sample.nu_hat - sample.lambda_hat
    R2 = float(r @ r)
    den = float(pair.g @ pair.g) - R2
    if den <= 0.0:
        raise Divergent("|h + nu 1 - lam| >= |g|; error norm diverges")
    return sigma * math.sqrt(R2) / math.sqrt(den)


# -- d-parameterized objective ----------------------------------------------


def _d_inner(c, x, nu, d, signed):
    """argmin_lam d |c - lam| + <lam, x> over the box; returns (lam, r, t) with |r| = t d."""
    lam0, r0 = _residual_at_t(c, x, nu, 0.0, signed)
    R0 = float(np.linalg.norm(r0))
    if R0 == 0.0:
        inside = (c > 0.0) & (x > 0.0)
        if not signed:
            inside &= c < 2.0 * nu
        s0 = float(np.linalg.norm(x[inside]))
        if s0 <= d:
            return lam0, r0, 0.0
        lo = 0.5 * float(np.min(c[inside] / x[inside]))
    else:
        lo = 0.0
    psi = lambda t: float(np.linalg.norm(_residual_at_t(c, x, nu, t, signed)[1])) - t * d  # noqa: E731
    bound = np.abs(c) if signed else np.maximum(np.abs(c), np.abs(c - 2.0 * nu))
    hi = float(np.linalg.norm(bound)) / d + 1.0
    t = brentq(psi, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    lam, r = _residual_at_t(c, x, nu, t, signed)
    return lam, r, t


def _d_inner_value(h, x, nu, d, signed):
    lam, r, _ = _d_inner(h + nu, x, nu, d, signed)
    return d * float(np.linalg.norm(r)) + float(lam @ x), lam, r


def _d_dnu(h, x, nu, d, signed):
    c = h + nu
    lam, r, t = _d_inner(c, x, nu, d, signed)
    if t > 0.0:
        grad_lam = x - r / t
        out = float(r.sum()) / t
    else:
        # residual vanishes: lam tracks c on coordinates strictly inside the box
        grad_lam = x.copy()
        inside = (c > 0.0) if signed else (c > 0.0) & (c < 2.0 * nu)
        out = float(x[inside].sum())
    if not signed:
        upper = lam >= 2.0 * nu
        out -= 2.0 * float(np.maximum(-grad_lam[upper], 0.0).sum())
    return out


def _d_min_over_nu(h, x, d, signed):
    f = lambda v: _d_dnu(h, x, v, d, signed)  # noqa: E731
    if f(0.0) >= 0.0:
        nu = 0.0
    else:
        hi = 1.0
        while f(hi) < 0.0:
            hi *= 2.0
            if hi > 1e12:
                raise Divergent("inner minimum over nu is unbounded")
        nu = brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    value, lam, r = _d_inner_value(h, x, nu, d, signed)
    return value, nu, lam, r


def xi_d_objective(d, sigma, pair, x_tilde, signed=False):
    """max over (nu, lam) of sqrt(d^2 + sigma^2)|g| - d|h + nu 1 - lam| - <lam, x_tilde>."""
    if d < 0.0:
        raise ValueError("d must be nonnegative")
    x = _check_x_tilde(x_tilde, pair.n)
    G = float(np.linalg.norm(pair.g))
    if d == 0.0:
        return sigma * G
    value, *_ = _d_min_over_nu(pair.h, x, d, signed)
    return math.sqrt(d * d + sigma * sigma) * G - value


def xi_dual(sigma, pair, x_tilde, signed=False):
    """min over d >= 0 of xi_d_objective; returns (value, d_opt).

    The derivative in d is d|g|/sqrt(d^2 + sigma^2) - |r*(d)| by Danskin, with
    r* the inner optimal residual; it is nondecreasing and its root is d_opt.
    """
    x = _check_x_tilde(x_tilde, pair.n)
    G = float(np.linalg.norm(pair.g))

    def slope(d):
        _, _, _, r = _d_min_over_nu(pair.h, x, d, signed)
        return d * G / math.sqrt(d * d + sigma * sigma) - float(np.linalg.norm(r))

    lo = 1e-12 * sigma
    if slope(lo) >= 0.0:
        d = 0.0
    else:
        hi = sigma
        while slope(hi) < 0.0:
            hi *= 2.0
            if hi > 1e12 * sigma:
                raise Divergent("min over d not attained")
        d = brentq(slope, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return xi_d_objective(d, sigma, pair, x, signed), d

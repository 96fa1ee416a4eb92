"""LASSO-type recovery algorithms for y = A x_tilde + v.

All three programs share one engine: accelerated proximal gradient (FISTA
with adaptive restart) on 0.5 |y - A x|^2 plus a simple nonsmooth term.

* constrained:  min |y - A x|        s.t. |x|_1 <= radius   (x >= 0 if signed)
* penalized:    min |y - A x| + lam |x|_1                   (x >= 0 if signed)
* socp:         min |x|_1            s.t. |y - A x| <= r    (x >= 0 if signed)

The penalized objective uses the plain (not squared) residual norm. It is
solved through the scaled form 0.5 |y - A x|^2 / s + s / 2 + lam |x|_1, which
is jointly convex in (x, s) and reduces to the original at s = |y - A x|; for
fixed s the x-step is an ordinary squared-loss LASSO with weight lam * s.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .theory import PhaseParams, characterize, optimal_nu


# residual/|y| below which a failed subgradient check is read as an interpolating optimum
DEGENERATE_RTOL = 1e-7


class Infeasible(ValueError):
    pass


class AboveThreshold(ValueError):
    pass


@dataclass(eq=False)
class ProblemInstance:
    A: np.ndarray
    x_tilde: np.ndarray
    v: np.ndarray
    y: np.ndarray
    sigma: float
    seed: int = 0

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def k(self):
        return int(np.count_nonzero(self.x_tilde))

    @cached_property
    def lipschitz(self):
        return spectral_norm_sq(self.A)


def make_instance(A, x_tilde, v, sigma, seed=0) -> ProblemInstance:
    A = np.asarray(A, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    v = np.asarray(v, dtype=float)
    return ProblemInstance(A, x_tilde, v, A @ x_tilde + v, float(sigma), seed)


@dataclass
class SolveReport:
    """Solver output.

    kkt_residual is solver specific: relative gradient-mapping norm
    (constrained), subgradient-inclusion distance over lam (penalized), or
    relative residual mismatch |zeta - r| / r (socp). ``converged`` means
    ``kkt_residual <= tolerance``.
    """

    x_hat: np.ndarray
    w_norm: float
    zeta: float
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    tolerance: float
    status: str = "ok"
    parameter: float = math.nan  # lam for penalized/socp, radius for constrained


def _report(inst, x, objective, iterations, kkt, tol, status="ok", parameter=math.nan):
    w = float(np.linalg.norm(x - inst.x_tilde))
    zeta = float(np.linalg.norm(inst.y - inst.A @ x))
    converged = kkt <= tol and status == "ok"
    if status == "ok" and not converged:
        status = "not_converged"
    return SolveReport(x, w, zeta, float(objective), int(iterations), bool(converged),
                       float(kkt), float(tol), status, float(parameter))


# -- primitives ----------------------------------------------------------------


def spectral_norm_sq(A, iters=500, tol=1e-6, seed=0):
    """Largest eigenvalue of A^T A by power iteration, inflated by 1% for safety."""
    x = np.random.default_rng(seed).standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        z = A.T @ (A @ x)
        lam_new = float(np.linalg.norm(z))
        x = z / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return 1.01 * lam


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _simplex_threshold(u, radius):
    """theta >= 0 with sum max(u - theta, 0) == radius for nonnegative u, sum(u) > radius."""
    s = np.sort(u)[::-1]
    css = np.cumsum(s)
    j = np.arange(1, s.size + 1)
    cond = np.nonzero(s - (css - radius) / j > 0.0)[0]
    # empty only when radius is lost in roundoff against sum(u)
    rho = int(cond[-1]) if cond.size else 0
    return (css[rho] - radius) / (rho + 1)


def project_l1_ball(x, radius):
    """Euclidean projection onto {z : |z|_1 <= radius}."""
    if radius < 0.0:
        raise ValueError("radius must be nonnegative")
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    if a.sum() <= radius:
        return x.copy()
    if radius == 0.0:
        return np.zeros_like(x)
    theta = _simplex_threshold(a, radius)
    return np.sign(x) * np.maximum(a - theta, 0.0)


def project_l1_ball_nonneg(x, radius):
    """Euclidean projection onto {z >= 0, sum z <= radius}.

    Clamping first and thresholding the clamped vector is exact here: for any
    theta >= 0, max(x - theta, 0) == max(max(x, 0) - theta, 0).
    """
    if radius < 0.0:
        raise ValueError("radius must be nonnegative")
    p = np.maximum(np.asarray(x, dtype=float), 0.0)
    if p.sum() <= radius:
        return p
    if radius == 0.0:
        return np.zeros_like(p)
    theta = _simplex_threshold(p, radius)
    return np.maximum(p - theta, 0.0)


# -- accelerated proximal gradient ---------------------------------------------


def _fista(A, y, x0, prox, L, *, tol, max_iter, deadline=None, stall_window=50, stall_rtol=1e-12,
           penalty=None):
    """Minimize 0.5|y - Ax|^2 + g(x) given prox(z, step) of g.

    Stops when the relative gradient-mapping norm at the current iterate drops
    below ``tol`` or the objective (when ``penalty`` is given) decreases by
    less than ``stall_rtol`` relative over ``stall_window`` iterations.
    Returns (x, iterations, status).
    """
    step = 1.0 / L
    x = x0.copy()
    z = x.copy()
    theta = 1.0
    history = []
    status = "max_iterations"
    it = 0
    for it in range(1, max_iter + 1):
        r = A @ z - y
        x_new = prox(z - step * (A.T @ r), step)
        gm = float(np.linalg.norm(z - x_new)) / max(1.0, float(np.linalg.norm(x_new)))
        # gradient-based restart
        if float((z - x_new) @ (x_new - x)) > 0.0:
            theta = 1.0
            z = x_new
        else:
            theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
            z = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
            theta = theta_new
        x = x_new
        if gm <= tol:
            status = "ok"
            break
        if penalty is not None:
            res = A @ x - y
            history.append(0.5 * float(res @ res) + penalty(x))
            if len(history) > stall_window:
                old = history[-stall_window - 1]
                if old - history[-1] <= stall_rtol * abs(old):
                    status = "ok"
                    break
        if deadline is not None and it % 100 == 0 and time.monotonic() > deadline:
            status = "timeout"
            break
    return x, it, status


def _gradient_mapping(A, y, x, prox, L):
    step = 1.0 / L
    p = prox(x - step * (A.T @ (A @ x - y)), step)
    return float(np.linalg.norm(x - p)) / max(1.0, float(np.linalg.norm(x)))


def _l1_prox(weight, signed):
    if signed:
        return lambda z, step: np.maximum(z - weight * step, 0.0)
    return lambda z, step: soft_threshold(z, weight * step)


def _lasso_squared(inst, mu, signed, x0, *, tol, max_iter, deadline):
    """argmin 0.5|y - Ax|^2 + mu |x|_1 (x >= 0 if signed)."""
    prox = _l1_prox(mu, signed)
    return _fista(inst.A, inst.y, x0, prox, inst.lipschitz, tol=tol, max_iter=max_iter,
                  deadline=deadline)


# -- constrained LASSO ---------------------------------------------------------


def solve_constrained_lasso(inst: ProblemInstance, radius, signed=False, *, x0=None, tol=1e-10,
                            kkt_tol=1e-7, max_iter=100_000, deadline=None) -> SolveReport:
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if signed:
        prox = lambda z, step: project_l1_ball_nonneg(z, radius)  # noqa: E731
    else:
        prox = lambda z, step: project_l1_ball(z, radius)  # noqa: E731
    x0 = np.zeros(inst.n) if x0 is None else prox(np.asarray(x0, dtype=float), 0.0)
    x, it, status = _fista(inst.A, inst.y, x0, prox, inst.lipschitz, tol=tol, max_iter=max_iter,
                           deadline=deadline, penalty=lambda _x: 0.0)
    kkt = _gradient_mapping(inst.A, inst.y, x, prox, inst.lipschitz)
    if status == "max_iterations" and kkt <= kkt_tol:
        status = "ok"
    zeta = float(np.linalg.norm(inst.y - inst.A @ x))
    return _report(inst, x, zeta, it, kkt, kkt_tol, status, radius)


# -- penalized LASSO (non-squared residual) ------------------------------------


def _penalized_kkt(inst, x, lam, signed):
    r = inst.y - inst.A @ x
    rn = float(np.linalg.norm(r))
    u = inst.A.T @ r / rn
    nz = x != 0.0
    dist = np.empty_like(u)
    if signed:
        dist[nz] = np.abs(u[nz] - lam)
        dist[~nz] = np.maximum(u[~nz] - lam, 0.0)
    else:
        dist[nz] = np.abs(u[nz] - lam * np.sign(x[nz]))
        dist[~nz] = np.maximum(np.abs(u[~nz]) - lam, 0.0)
    return float(np.max(dist)) / lam if dist.size else 0.0


def solve_penalized_lasso(inst: ProblemInstance, lambda_lasso, signed=False, *, x0=None,
                          tol=1e-11, kkt_tol=1e-6, outer_rtol=1e-10, max_iter=100_000,
                          deadline=None) -> SolveReport:
    """min |y - Ax| + lam |x|_1; ``objective`` is that value minus lam |x_tilde|_1.

    The scale s solves s = residual(s), where residual(s) is the residual norm
    of the squared-loss LASSO with weight lam * s. residual(s) - s changes sign
    once on (0, |y|], so s is bracketed by shrinking from |y| and refined with
    Brent's method; every inner solve is warm-started from the nearest point.
    """
    lam = float(lambda_lasso)
    if lam <= 0.0:
        raise ValueError("lambda_lasso must be positive")
    y_norm = float(np.linalg.norm(inst.y))
    # zero is optimal once the dual norm of A^T y / |y| is within lam
    u0 = inst.A.T @ inst.y / y_norm if y_norm > 0 else np.zeros(inst.n)
    if y_norm == 0.0 or (np.max(u0) if signed else np.max(np.abs(u0))) <= lam:
        x = np.zeros(inst.n)
        return _report(inst, x, y_norm - lam * float(np.abs(inst.x_tilde).sum()), 0, 0.0, kkt_tol,
                       "ok", lam)

    total = 0
    cache = {}
    start = np.zeros(inst.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if signed:
        start = np.maximum(start, 0.0)

    class _Stop(Exception):
        pass

    def gap(s_val):
        nonlocal total
        if cache:
            near = min(cache, key=lambda key: abs(math.log(key / s_val)))
            x_init = cache[near]
        else:
            x_init = start
        x_new, it, st = _lasso_squared(inst, lam * s_val, signed, x_init, tol=tol,
                                       max_iter=max_iter, deadline=deadline)
        total += it
        if st != "ok":
            cache[s_val] = x_new
            raise _Stop(st)
        cache[s_val] = x_new
        return float(np.linalg.norm(inst.y - inst.A @ x_new)) - s_val

    status = "ok"
    s = None
    try:
        hi = y_norm
        f_hi = gap(hi)
        lo = hi
        while True:
            lo *= 0.25
            if lo <= 1e-12 * y_norm:
                raise _Stop("degenerate_residual")
            f_lo = gap(lo)
            if f_lo >= 0.0:
                break
            hi, f_hi = lo, f_lo
        s = lo if f_lo == 0.0 else brentq(gap, lo, hi, xtol=1e-300, rtol=outer_rtol, maxiter=200)
    except _Stop as exc:
        status = str(exc)
    # brentq's returned point is always one of the evaluated ones
    x = cache[s] if s in cache else cache[next(reversed(cache))]
    r = float(np.linalg.norm(inst.y - inst.A @ x))
    if r <= 1e-12 * y_norm:
        status = "degenerate_residual"
        kkt = math.inf
    else:
        kkt = _penalized_kkt(inst, x, lam, signed)
        # the optimum interpolates y: |y - Ax| is not differentiable there and
        # the inner solves only drive r to roundoff-ish levels, not to zero
        if kkt > kkt_tol and r <= DEGENERATE_RTOL * y_norm:
            status = "degenerate_residual"
    value = r + lam * float(np.abs(x).sum())
    shifted = value - lam * float(np.abs(inst.x_tilde).sum())
    return _report(inst, x, shifted, total, kkt, kkt_tol, status, lam)


# -- SOCP ------------------------------------------------------------------------


def solve_socp(inst: ProblemInstance, r_socp, signed=False, *, rtol=1e-6, tol=1e-12,
               max_bisect=200, max_iter=100_000, deadline=None) -> SolveReport:
    """min |x|_1 s.t. |y - Ax| <= r_socp via the squared-loss LASSO path.

    The LASSO residual is nondecreasing in its weight mu, so mu is bracketed
    in log space and refined (Illinois false position with bisection
    fallback) until the residual matches r_socp within ``rtol``.
    """
    if r_socp <= 0.0:
        raise ValueError("r_socp must be positive")
    A, y = inst.A, inst.y
    y_norm = float(np.linalg.norm(y))
    if r_socp >= y_norm:
        x = np.zeros(inst.n)
        return _report(inst, x, 0.0, 0, 0.0, rtol, "ok", math.inf)

    x_start = np.zeros(inst.n)
    total = 0

    def residual(log_mu, x_init):
        nonlocal total
        x, it, st = _lasso_squared(inst, math.exp(log_mu), signed, x_init, tol=tol,
                                   max_iter=max_iter, deadline=deadline)
        total += it
        return float(np.linalg.norm(y - A @ x)) - r_socp, x, st

    mu_max = float(np.max(A.T @ y) if signed else np.max(np.abs(A.T @ y)))
    hi = math.log(mu_max)
    f_hi = y_norm - r_socp
    lo = hi - math.log(1e3)
    f_lo, x_lo, st = residual(lo, x_start)
    while f_lo > 0.0:
        hi, f_hi = lo, f_lo
        lo -= math.log(1e3)
        if lo < math.log(mu_max) - 60.0:
            raise Infeasible(f"residual stays above r_socp={r_socp:.6g} as the weight vanishes")
        f_lo, x_lo, st = residual(lo, x_lo)

    status = "max_iterations"
    side = 0
    best = None
    # g_lo / g_hi are the Illinois-weighted copies used only for the secant step
    g_lo, g_hi = f_lo, f_hi
    for _ in range(max_bisect):
        if abs(f_lo) <= rtol * r_socp:
            best = (lo, f_lo, x_lo)
            status = "ok"
            break
        mid = (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
        if not (lo < mid < hi) or hi - lo < 1e-14:
            mid = 0.5 * (lo + hi)
        f_mid, x_mid, st = residual(mid, x_lo)
        if st == "timeout":
            status = "timeout"
            break
        if abs(f_mid) <= rtol * r_socp:
            best = (mid, f_mid, x_mid)
            status = "ok"
            break
        if f_mid <= 0.0:
            lo, f_lo, x_lo, g_lo = mid, f_mid, x_mid, f_mid
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi, f_hi, g_hi = mid, f_mid, f_mid
            if side == 1:
                g_lo *= 0.5
            side = 1
    if best is None:
        # feasible side of the bracket
        best = (lo, f_lo, x_lo)
    log_mu, f_best, x = best
    mismatch = abs(f_best) / r_socp
    return _report(inst, x, float(np.abs(x).sum()), total, mismatch, rtol, status, math.exp(log_mu))


# -- theory-driven parameters --------------------------------------------------


def lambda_from_theory(params: PhaseParams):
    """Penalty weight equal to the predicted mean optimal dual scalar."""
    tp = characterize(params)
    if not tp.below_threshold:
        raise AboveThreshold(f"(alpha={params.alpha}, beta={params.beta}) is above the l1 threshold")
    nu, _ = optimal_nu(params.beta, params.signed)
    if not math.isfinite(nu):
        raise AboveThreshold("beta = 0 has no finite optimal dual scalar")
    return nu


def r_socp_from_theory(params: PhaseParams, sigma, n):
    tp = characterize(params)
    if not tp.below_threshold:
        raise AboveThreshold(f"(alpha={params.alpha}, beta={params.beta}) is above the l1 threshold")
    return sigma * tp.zeta_over_sqrt_n * math.sqrt(n)

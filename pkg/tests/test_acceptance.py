"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines are printed even with output capture on), or
directly with ``python tests/test_acceptance.py`` for a summary. Criterion 6
is a two-hour full-scale run and only executes with NOISYLASSO_FULL=1.
"""

import contextlib
import io
import json
import math
import os
import sys
import time

import cvxpy as cp
import numpy as np
import pytest

from noisylasso import harness, oracle, rng, solvers
from noisylasso.cli import main as cli_main
from noisylasso.harness import ExperimentConfig
from noisylasso.theory import beta_on_contour, l1_threshold_alpha, optimal_nu, q_value

FULL = os.environ.get("NOISYLASSO_FULL") == "1"
# fixed before the first run; not tuned
SEED = 20240601

_results = {}


@pytest.fixture
def say(capsys):
    def _say(number, title, ok, detail):
        tag = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"[{tag}] criterion {number}: {title} -- {detail}"
        _results[number] = ok
        with capsys.disabled():
            print("\n" + line)
    return _say


def _rel(a, b):
    return abs(a - b) / abs(b)


# 1 -------------------------------------------------------------------------------

THEORY_ROWS = [
    # (signed, rho, alpha, printed nu, printed zeta/sqrt(n))
    (False, 2.0, 0.3, 1.3141, 0.2449), (False, 2.0, 0.5, 1.0227, 0.3162), (False, 2.0, 0.7, 0.7959, 0.3742),
    (False, 3.0, 0.3, 1.2508, 0.1732), (False, 3.0, 0.5, 0.9477, 0.2236), (False, 3.0, 0.7, 0.7046, 0.2646),
    (True, 2.0, 0.3, 0.9592, 0.2449), (True, 2.0, 0.5, 0.6516, 0.3162), (True, 2.0, 0.7, 0.4292, 0.3742),
    (True, 3.0, 0.3, 0.8197, 0.1732), (True, 3.0, 0.5, 0.5757, 0.2236), (True, 3.0, 0.7, 0.3470, 0.2646),
]


def _cli_json(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main(argv + ["--json"])
    assert code == 0
    return json.loads(buf.getvalue())


def test_criterion_1_theory_exactness(say):
    t0 = time.perf_counter()
    misses = []
    for signed, rho, alpha, nu, zeta in THEORY_ROWS:
        argv = ["theory", "--alpha", str(alpha), "--rho", str(rho)] + (["--signed"] if signed else [])
        doc = _cli_json(argv)
        checks = [
            ("nu", doc["nu_star"], nu, 0.01),
            ("zeta", doc["zeta_over_sqrt_n"], zeta, 0.001),
            ("rho", doc["rho"], rho, 0.001),
        ]
        for name, got, want, tol in checks:
            if _rel(got, want) > tol:
                misses.append(f"{'signed' if signed else 'unsigned'} rho={rho:g} alpha={alpha}: "
                              f"{name} {got:.5f} vs {want} ({_rel(got, want):.2%})")
    elapsed = time.perf_counter() - t0
    ok = not misses and elapsed < 1.0
    detail = f"{len(THEORY_ROWS) * 3 - len(misses)}/{len(THEORY_ROWS) * 3} values in band, {elapsed:.2f}s"
    if misses:
        detail += "; misses: " + "; ".join(misses)
    say(1, "theory columns of the four tables", ok, detail)
    assert ok, detail


# 2 -------------------------------------------------------------------------------


def test_criterion_2_two_route_alpha_w(say):
    t0 = time.perf_counter()
    grid = np.linspace(0.001, 0.95, 100)
    worst = 0.0
    for signed in (False, True):
        for b in grid:
            worst = max(worst, abs(l1_threshold_alpha(b, signed) - optimal_nu(b, signed)[1]))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5.0
    say(2, "erfinv root vs min of q", ok, f"max gap {worst:.2e} (<= 1e-6), {elapsed:.2f}s")
    assert ok


# 3 -------------------------------------------------------------------------------


def test_criterion_3_min_max_identity(say):
    t0 = time.perf_counter()
    r = np.random.default_rng(SEED)
    worst_val = worst_d = 0.0
    for i in range(100):
        m = int(r.integers(15, 40))
        k = int(r.integers(1, 12))
        pair = oracle.sample_pair(m, 50, rng.trial_seed(SEED, i))
        x = oracle.sparse_x_tilde(50, k, r.uniform(0.1, 5.0))
        sigma = r.uniform(0.5, 2.0)
        s = oracle.xi_ov_general(sigma, pair, x)
        val, d = oracle.xi_dual(sigma, pair, x)
        worst_val = max(worst_val, abs(val - s.xi_ov) / (1 + abs(s.xi_ov)))
        worst_d = max(worst_d, abs(d - s.w_hat_norm))
    elapsed = time.perf_counter() - t0
    ok = worst_val <= 1e-6 and worst_d <= 1e-6 and elapsed < 120
    say(3, "min over d equals xi_ov, argmin d equals w_hat_norm", ok,
        f"max value gap {worst_val:.2e}, max d gap {worst_d:.2e} (both <= 1e-6), {elapsed:.1f}s")
    assert ok


# 4 / 5 ---------------------------------------------------------------------------


def _desk_table(which, check_zeta):
    t0 = time.perf_counter()
    lines, ok = [], True
    for cfg in harness.table_configs(which, master_seed=SEED):
        cfg = ExperimentConfig(n=400, alpha=cfg.alpha, beta=cfg.beta, trials=50, master_seed=SEED,
                               signed=cfg.signed, algorithms=("constrained", "penalized"))
        s = harness.run_experiment(cfg)
        for algo in cfg.algorithms:
            st = s.stats[algo]
            w_ok = _rel(st.mean_w_norm, 2.0) <= 0.08
            z_ok = _rel(st.mean_zeta, s.theory.zeta) <= 0.05
            ok &= w_ok and (z_ok or not check_zeta)
            part = f"alpha={cfg.alpha} {algo}: w {st.mean_w_norm:.4f}"
            if check_zeta:
                part += f", zeta {st.mean_zeta:.4f} vs {s.theory.zeta:.4f}"
            lines.append(part)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    return ok, "; ".join(lines) + f"; {elapsed:.0f}s"


def test_criterion_4_desk_table_1(say):
    ok, detail = _desk_table(1, check_zeta=True)
    say(4, "desk-scale unsigned rho=2 table (w within 8% of 2, zeta within 5%)", ok, detail)
    assert ok


def test_criterion_5_desk_table_3(say):
    ok, detail = _desk_table(3, check_zeta=False)
    say(5, "desk-scale signed rho=2 table (w within 8% of 2)", ok, detail)
    assert ok


# 6 -------------------------------------------------------------------------------


def test_criterion_6_full_scale_spot_check(say):
    if not FULL:
        say(6, "full-scale spot check", None, "optional; set NOISYLASSO_FULL=1")
        _results.pop(6, None)
        pytest.skip("full-scale run; set NOISYLASSO_FULL=1")
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=2000, alpha=0.5, beta=beta_on_contour(0.5, 2.0), trials=100, master_seed=SEED,
                           algorithms=("constrained",))
    w = harness.run_experiment(cfg).stats["constrained"].mean_w_norm
    elapsed = time.perf_counter() - t0
    ok = 1.94 <= w <= 2.06 and elapsed < 7200
    say(6, "full-scale spot check", ok, f"mean w {w:.4f} in [1.94, 2.06], {elapsed:.0f}s")
    assert ok


# 7 -------------------------------------------------------------------------------


def test_criterion_7_socp_equivalence(say):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=400, alpha=0.5, beta=0.135, trials=20, master_seed=SEED,
                           algorithms=("constrained", "socp"))
    s = harness.run_experiment(cfg)
    a, b = s.stats["socp"].mean_w_norm, s.stats["constrained"].mean_w_norm
    gap = abs(a - b) / 2.0
    ok = gap <= 0.1
    say(7, "SOCP vs constrained LASSO", ok,
        f"socp {a:.4f}, constrained {b:.4f}, gap/2 {gap:.4f} (<= 0.1), {time.perf_counter() - t0:.0f}s")
    assert ok


# 8 -------------------------------------------------------------------------------


def test_criterion_8_noiseless(say):
    cfg = ExperimentConfig(n=200, alpha=0.5, beta=0.1, trials=20, master_seed=SEED)
    assert l1_threshold_alpha(cfg.realized_beta) < cfg.realized_alpha
    good, worst = 0, 0.0
    for i in range(cfg.trials):
        inst = harness.generate_instance(cfg, i)
        inst = solvers.make_instance(inst.A, inst.x_tilde, np.zeros(cfg.m), cfg.sigma, inst.seed)
        rep = solvers.solve_constrained_lasso(inst, float(np.abs(inst.x_tilde).sum()))
        ratio = rep.w_norm / np.linalg.norm(inst.x_tilde)
        worst = max(worst, ratio)
        good += ratio <= 1e-6
    ok = good == cfg.trials
    say(8, "noiseless exact recovery", ok, f"{good}/20 with w <= 1e-6 |x|, worst ratio {worst:.1e}")
    assert ok


# 9 -------------------------------------------------------------------------------


def _projection_suite(r):
    bad = 0
    for i in range(10_000):
        n = int(r.integers(1, 30))
        a, b = r.normal(scale=10, size=n), r.normal(scale=10, size=n)
        radius = r.uniform(0, 2 * np.abs(a).sum())
        proj = solvers.project_l1_ball_nonneg if i % 2 else solvers.project_l1_ball
        pa, pb = proj(a, radius), proj(b, radius)
        bad += not np.allclose(proj(pa, radius), pa, atol=1e-9, rtol=0)
        bad += np.linalg.norm(pa - pb) > np.linalg.norm(a - b) + 1e-9
    return bad


def _convexity_suite(r):
    bad = 0
    for i in range(1000):
        beta = r.uniform(0, 0.95)
        u, v = r.uniform(0, 8, 2)
        signed = bool(i % 2)
        mid = q_value(beta, 0.5 * (u + v), signed)
        bad += mid > 0.5 * (q_value(beta, u, signed) + q_value(beta, v, signed)) + 1e-12
    return bad


def _monotone_suite():
    grid = np.linspace(0.005, 0.6, 100)
    bad = 0
    for signed in (False, True):
        vals = np.array([l1_threshold_alpha(b, signed) for b in grid])
        bad += int(np.sum(np.diff(vals) <= 0))
    return bad


def _concavity_suite(r):
    n = 12
    pair = oracle.GaussianPair(3.0 * r.standard_normal(40), r.standard_normal(n), 0)
    x = oracle.sparse_x_tilde(n, 3, 0.7)
    G = np.linalg.norm(pair.g)
    bad = done = 0
    while done < 1000:
        signed = bool(done % 2)
        pts = []
        for _ in range(2):
            nu = r.uniform(0, 2)
            lam = r.uniform(0, 2 * nu, n) if not signed else r.uniform(0, 4, n)
            pts.append((nu, lam))
        if any(np.linalg.norm(pair.h + nu - lam) >= G for nu, lam in pts):
            continue
        (n0, l0), (n1, l1) = pts
        f = lambda nu, lam: oracle._objective(pair.h, x, nu, lam, G, 1.3)  # noqa: E731
        bad += f(0.5 * (n0 + n1), 0.5 * (l0 + l1)) < 0.5 * (f(n0, l0) + f(n1, l1)) - 1e-9
        done += 1
    return bad


def _brute_force_suite(r):
    """xi_ov_general at n = 6 against a conic reference and dense feasible sampling."""
    bad = 0
    worst = 0.0
    for i in range(100):
        m = int(r.integers(2, 8))
        k = int(r.integers(0, 5))
        pair = oracle.GaussianPair(r.standard_normal(m), r.standard_normal(6), i)
        x = oracle.sparse_x_tilde(6, k, r.uniform(0.05, 2.0))
        sigma = r.uniform(0.5, 2.0)
        s = oracle.xi_ov_general(sigma, pair, x)
        G = np.linalg.norm(pair.g)
        nu, lam, t = cp.Variable(nonneg=True), cp.Variable(6, nonneg=True), cp.Variable()
        prob = cp.Problem(cp.Maximize(sigma * t - x @ lam),
                          [cp.norm(cp.hstack([pair.h + nu - lam, t])) <= G, lam <= 2 * nu])
        prob.solve(solver=cp.CLARABEL)
        gap = abs(prob.value - s.xi_ov)
        # sampled grid of feasible points never beats the reported optimum
        nus = r.uniform(0, 3, 2000)
        lams = r.uniform(0, 1, (2000, 6)) * 2 * nus[:, None]
        res = np.linalg.norm(pair.h + nus[:, None] - lams, axis=1)
        inside = res < G
        vals = sigma * np.sqrt(G * G - res[inside] ** 2) - lams[inside] @ x
        over = float(vals.max() - s.xi_ov) if vals.size else -1.0
        worst = max(worst, gap)
        bad += gap > 1e-3 or over > 1e-9
    return bad, worst


def test_criterion_9_property_suites(say):
    t0 = time.perf_counter()
    r = np.random.default_rng(SEED)
    counts = {
        "projection (10000)": _projection_suite(r),
        "q convexity (1000)": _convexity_suite(r),
        "threshold monotonicity (2x100)": _monotone_suite(),
        "oracle concavity (1000)": _concavity_suite(r),
    }
    bf_bad, bf_worst = _brute_force_suite(r)
    counts["xi_ov brute force n=6 (100)"] = bf_bad
    ok = not any(counts.values())
    detail = ", ".join(f"{k}: {v} violations" for k, v in counts.items())
    detail += f"; worst brute-force gap {bf_worst:.1e}; {time.perf_counter() - t0:.0f}s"
    say(9, "property suites", ok, detail)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", *sys.argv[1:]]))

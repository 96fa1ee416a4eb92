"""Command line front end: theory queries, contour curves, oracle sampling, experiments."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys

import numpy as np

from . import harness, oracle, rng
from .theory import PhaseParams, beta_on_contour, characterize, contour_curve

EXIT_USAGE = 1
EXIT_EXPERIMENT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; 2 is reserved for failed experiments here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _g(x):
    """6 significant digits for text output."""
    if x is None:
        return "n/a"
    return format(float(x), ".6g")


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _emit_json(obj):
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _parse_grid(text):
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError("grid must be start:stop:step or a comma list")
        start, stop, step = map(float, parts)
        if step <= 0 or stop < start:
            raise UsageError("grid needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(t) for t in text.split(",") if t.strip()]


# -- theory ------------------------------------------------------------------------


def cmd_theory(args):
    if args.beta is None and args.rho is None:
        raise UsageError("give --beta or --rho")
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    beta = args.beta
    if args.rho is not None:
        if not (0.0 < args.alpha < 1.0) or args.rho <= 0:
            raise UsageError("--rho needs 0 < alpha < 1 and rho > 0")
        beta = beta_on_contour(args.alpha, args.rho, args.signed)
        if beta is None:
            raise UsageError(f"no beta in (0, alpha) gives rho={args.rho} at alpha={args.alpha}")
    try:
        tp = characterize(PhaseParams(args.alpha, beta, args.signed))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rho, zeta = tp.error_norm(args.sigma), tp.zeta(args.sigma)
    if args.json:
        _emit_json({
            "alpha": args.alpha, "beta": beta, "signed": args.signed, "sigma": args.sigma,
            "alpha_w": tp.alpha_w, "nu_star": _num(tp.nu_star), "rho": _num(rho),
            "zeta_over_sqrt_n": _num(zeta), "below_threshold": tp.below_threshold,
        })
        return 0
    print(f"alpha         {_g(args.alpha)}")
    print(f"beta          {_g(beta)}")
    print(f"signed        {str(args.signed).lower()}")
    print(f"alpha_w       {_g(tp.alpha_w)}")
    print(f"nu            {_g(tp.nu_star)}")
    if tp.below_threshold:
        print(f"rho           {_g(rho)}")
        print(f"zeta/sqrt(n)  {_g(zeta)}")
    else:
        print("above threshold: error diverges")
    return 0


# -- curve ---------------------------------------------------------------------------


def cmd_curve(args):
    if any(r <= 0 for r in args.rho):
        raise UsageError("--rho must be positive")
    grid = _parse_grid(args.grid)
    if any(not (0.0 < a < 1.0) for a in grid):
        raise UsageError("grid values must lie in (0, 1)")
    curves = [contour_curve(r, args.signed, grid) for r in args.rho]
    multi = len(curves) > 1
    if args.out:
        try:
            with open(args.out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(("rho", "alpha", "beta") if multi else ("alpha", "beta"))
                for c in curves:
                    for a, b in c.points:
                        row = (c.rho, a, b) if multi else (a, b)
                        w.writerow([format(float(v), ".17g") for v in row])
        except OSError as exc:
            print(f"cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.json:
        _emit_json({"curves": [
            {"rho": c.rho, "signed": c.signed, "points": [[a, b] for a, b in c.points],
             "omitted": list(c.omitted)}
            for c in curves
        ]})
    elif not args.out:
        print("rho alpha beta" if multi else "alpha beta")
        for c in curves:
            for a, b in c.points:
                print(" ".join(_g(v) for v in ((c.rho, a, b) if multi else (a, b))))
    for c in curves:
        if c.omitted:
            logging.getLogger(__name__).info("rho=%g: no contour point at alpha in %s", c.rho, c.omitted)
    return 0


# -- oracle -------------------------------------------------------------------------


def cmd_oracle(args):
    if args.n < 10:
        raise UsageError("--n must be at least 10")
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    try:
        cfg = harness.ExperimentConfig(n=args.n, alpha=args.alpha, beta=args.beta, sigma=args.sigma,
                                       magnitude=args.magnitude, trials=args.seeds,
                                       master_seed=args.seed, signed=args.signed,
                                       algorithms=("oracle",))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    x_tilde = oracle.sparse_x_tilde(cfg.n, cfg.k, cfg.amplitude)
    rows, failures = [], 0
    for i in range(args.seeds):
        seed = rng.trial_seed(cfg.master_seed, i)
        pair = oracle.sample_pair(cfg.m, cfg.n, seed)
        try:
            if args.generic:
                s = oracle.generic_sample(cfg.sigma, pair, cfg.k, cfg.signed)
                paid = 0.0
            else:
                solve = oracle.xi_ov_signed_general if cfg.signed else oracle.xi_ov_general
                s = solve(cfg.sigma, pair, x_tilde)
                paid = float(s.lambda_hat @ x_tilde)
        except oracle.Divergent:
            failures += 1
            continue
        if not s.overwhelming:
            failures += 1
            continue
        rows.append({
            "index": i, "seed": seed, "xi_over_sqrt_n": s.xi_ov / math.sqrt(cfg.n),
            "nu_hat": s.nu_hat, "w_hat_norm": s.w_hat_norm,
            "_r2": s.residual_norm ** 2, "_g2": float(pair.g @ pair.g), "_paid": paid,
        })
    agg = {"samples": len(rows), "divergent": failures}
    if rows:
        agg.update({
            "mean_xi_over_sqrt_n": float(np.mean([r["xi_over_sqrt_n"] for r in rows])),
            "mean_nu_hat": float(np.mean([r["nu_hat"] for r in rows])),
            "std_nu_hat": float(np.std([r["nu_hat"] for r in rows], ddof=1)) if len(rows) > 1 else 0.0,
            "mean_w_hat_norm": float(np.mean([r["w_hat_norm"] for r in rows])),
        })
        w_pl, z_pl = harness.plugin_estimate(cfg.sigma, cfg.n, [r["_r2"] for r in rows],
                                             [r["_g2"] for r in rows], [r["_paid"] for r in rows])
        agg["plugin_w_norm"], agg["plugin_xi_over_sqrt_n"] = _num(w_pl), _num(z_pl)
    tp = characterize(cfg.phase())
    theory = {"nu_star": _num(tp.nu_star), "rho": _num(tp.error_norm(cfg.sigma)),
              "zeta_over_sqrt_n": _num(tp.zeta(cfg.sigma))}
    for r in rows:
        for key in ("_r2", "_g2", "_paid"):
            del r[key]
    if args.json:
        _emit_json({"n": cfg.n, "m": cfg.m, "k": cfg.k, "signed": cfg.signed, "generic": args.generic,
                    "master_seed": cfg.master_seed, "samples": rows, "aggregate": agg,
                    "theory": theory})
    else:
        print(f"n={cfg.n} m={cfg.m} k={cfg.k} signed={str(cfg.signed).lower()} "
              f"generic={str(args.generic).lower()} seed={cfg.master_seed}")
        print(f"{'index':>5}  {'xi/sqrt(n)':>12}  {'nu_hat':>12}  {'w_hat_norm':>12}")
        for r in rows:
            print(f"{r['index']:>5}  {_g(r['xi_over_sqrt_n']):>12}  {_g(r['nu_hat']):>12}  "
                  f"{_g(r['w_hat_norm']):>12}")
        if rows:
            print(f"mean   {_g(agg['mean_xi_over_sqrt_n']):>12}  {_g(agg['mean_nu_hat']):>12}  "
                  f"{_g(agg['mean_w_hat_norm']):>12}")
            print(f"plug-in w_norm {_g(agg['plugin_w_norm'])}  xi/sqrt(n) {_g(agg['plugin_xi_over_sqrt_n'])}")
        if failures:
            print(f"divergent samples: {failures}")
        print(f"theory  nu {_g(theory['nu_star'])}  rho {_g(theory['rho'])}  "
              f"zeta/sqrt(n) {_g(theory['zeta_over_sqrt_n'])}")
    return 0


# -- simulate / table ------------------------------------------------------------


_SIM_FIELDS = {
    "n": "n", "alpha": "alpha", "beta": "beta", "sigma": "sigma", "magnitude": "magnitude",
    "trials": "trials", "seed": "master_seed", "signed": "signed", "algorithms": "algorithms",
    "workers": "workers", "timeout": "trial_timeout",
}


def _print_summaries(summaries):
    head = (f"{'alpha':>7} {'beta':>9} {'n':>6} {'algorithm':>11} {'ok':>4} {'fail':>4} "
            f"{'w_norm':>10} {'std':>10} {'zeta':>10} {'rho_th':>10} {'zeta_th':>10} {'nu_th':>10}")
    print(head)
    for s in summaries:
        c = s.config
        for algo in c.algorithms:
            st = s.stats[algo]
            print(f"{_g(c.realized_alpha):>7} {_g(c.realized_beta):>9} {c.n:>6} {algo:>11} "
                  f"{st.successes:>4} {st.failures:>4} {_g(st.mean_w_norm):>10} {_g(st.std_w_norm):>10} "
                  f"{_g(st.mean_zeta):>10} {_g(s.theory.rho):>10} {_g(s.theory.zeta):>10} "
                  f"{_g(s.theory.nu):>10}")


def _finish(summaries, args, failed=None):
    if args.out:
        try:
            harness.export_results(summaries, [], args.out, args.format)
        except OSError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_USAGE
    if args.json:
        _emit_json({"results": [harness.summary_to_dict(s) for s in summaries],
                    "failed": failed})
    else:
        _print_summaries(summaries)
    if failed:
        print(f"experiment failed: {failed}", file=sys.stderr)
        return EXIT_EXPERIMENT
    return 0


def cmd_simulate(args):
    values = {}
    if args.config:
        try:
            values.update(harness.load_config_file(args.config))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    for flag, name in _SIM_FIELDS.items():
        v = getattr(args, flag)
        if v is not None:
            values[name] = v
    try:
        cfg = harness.ExperimentConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment config: {exc}") from exc
    try:
        summary = harness.run_experiment(cfg, label="simulate")
    except harness.ExperimentFailed as exc:
        return _finish([exc.summary] if exc.summary else [], args, str(exc))
    except (harness.solvers.AboveThreshold, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return _finish([summary], args)


def cmd_table(args):
    algos = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    try:
        configs = harness.table_configs(args.which, args.scale, args.seed or 0, algos, args.trials,
                                        args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = harness.TABLES[args.which]
    summaries = []
    for cfg, row in zip(configs, table.rows):
        try:
            summaries.append(harness.run_experiment(cfg, label=f"table{args.which}/alpha={row.alpha}"))
        except harness.ExperimentFailed as exc:
            if exc.summary:
                summaries.append(exc.summary)
            return _finish(summaries, args, str(exc))
    if not args.json:
        print(f"table {args.which}: rho={_g(table.rho)} signed={str(table.signed).lower()} "
              f"(printed reference values in brackets)")
        for s, row in zip(summaries, table.rows):
            print(f"  alpha={_g(row.alpha)} printed beta/alpha={_g(row.beta_over_alpha)} n={row.n}: "
                  f"[nu {_g(row.nu)}] [constrained w {_g(row.w_lasso)} zeta {_g(row.zeta_obj)}] "
                  f"[penalized w {_g(row.w_conn)} zeta {_g(row.zeta_conn)}]")
    return _finish(summaries, args)


# -- parser -----------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="noisylasso", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("theory", parents=[common], help="error characterization at (alpha, beta)")
    t.add_argument("--alpha", type=float, required=True)
    g = t.add_mutually_exclusive_group()
    g.add_argument("--beta", type=float)
    g.add_argument("--rho", type=float, help="pick beta on the contour with this error ratio")
    t.add_argument("--signed", action="store_true")
    t.add_argument("--sigma", type=float, default=1.0)
    t.set_defaults(func=cmd_theory)

    c = sub.add_parser("curve", parents=[common], help="contour beta(alpha) at fixed error ratio")
    c.add_argument("--rho", type=float, nargs="+", required=True)
    c.add_argument("--signed", action="store_true")
    c.add_argument("--grid", default="0.05:0.95:0.05", help="start:stop:step or comma list")
    c.add_argument("--out", help="CSV path (alpha,beta; rho,alpha,beta for several rho)")
    c.set_defaults(func=cmd_curve)

    o = sub.add_parser("oracle", parents=[common], help="sample the Gaussian dual oracle")
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--alpha", type=float, required=True)
    o.add_argument("--beta", type=float, required=True)
    o.add_argument("--seeds", type=int, default=1, help="number of (g, h) draws")
    o.add_argument("--signed", action="store_true")
    o.add_argument("--generic", action="store_true", help="infinite-magnitude limit")
    o.add_argument("--sigma", type=float, default=1.0)
    o.add_argument("--magnitude", type=float, default=None)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser(
        "simulate", parents=[common], help="run one Monte Carlo experiment",
        description="Run one experiment. Precedence: command-line flags > --config file > defaults.",
    )
    s.add_argument("--config", help="TOML or JSON file with experiment fields")
    s.add_argument("--n", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--magnitude", type=float)
    s.add_argument("--trials", type=int)
    s.add_argument("--signed", action="store_const", const=True, default=None)
    s.add_argument("--unsigned", dest="signed", action="store_const", const=False)
    s.add_argument("--algorithms", help="comma list from constrained,penalized,socp,oracle")
    s.add_argument("--workers", type=int)
    s.add_argument("--timeout", type=float, help="per-trial budget in seconds")
    s.add_argument("--out")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_simulate)

    tb = sub.add_parser("table", parents=[common], help="reproduce one of the four result tables")
    tb.add_argument("--which", type=int, choices=(1, 2, 3, 4), required=True)
    tb.add_argument("--scale", type=float, default=1.0, help="shrink n and trials, in (0, 1]")
    tb.add_argument("--trials", type=int, default=None, help="override the scaled trial count")
    tb.add_argument("--algorithms", default="constrained,penalized")
    tb.add_argument("--workers", type=int, default=1)
    tb.add_argument("--out")
    tb.add_argument("--format", choices=("csv", "json"), default="csv")
    tb.set_defaults(func=cmd_table)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command != "simulate" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())

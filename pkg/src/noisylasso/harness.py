"""Seeded Monte Carlo experiments comparing solvers and the dual oracle with theory."""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import oracle, rng, solvers
from .theory import ContourCurve, PhaseParams, beta_on_contour, characterize

log = logging.getLogger(__name__)

ALGORITHMS = ("constrained", "penalized", "socp", "oracle")
FAILURE_LIMIT = 0.10

CSV_COLUMNS = (
    "alpha", "beta", "n", "trials", "algorithm", "mean_w_norm", "std_w_norm", "mean_zeta",
    "std_zeta", "theory_nu", "theory_zeta", "theory_rho", "seed",
)
CURVE_COLUMNS = ("rho", "signed", "alpha", "beta")


class ExperimentFailed(RuntimeError):
    def __init__(self, message, summary=None):
        super().__init__(message)
        self.summary = summary


def default_magnitude(n):
    return 1000.0 / math.sqrt(n)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    alpha: float
    beta: float
    sigma: float = 1.0
    magnitude: float | None = None
    trials: int = 100
    master_seed: int = 0
    signed: bool = False
    algorithms: tuple[str, ...] = ("constrained", "penalized")
    trial_timeout: float = 120.0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.m < 1:
            raise ValueError(f"round(alpha * n) must be >= 1, got {self.m}")
        if not (0 <= self.k < self.m):
            raise ValueError(f"need 0 <= round(beta * n) < round(alpha * n), got k={self.k}, m={self.m}")
        if self.m > self.n:
            raise ValueError("alpha must not exceed 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ValueError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")

    # python's round() is round-half-to-even
    @property
    def m(self):
        return int(round(self.alpha * self.n))

    @property
    def k(self):
        return int(round(self.beta * self.n))

    @property
    def realized_alpha(self):
        return self.m / self.n

    @property
    def realized_beta(self):
        return self.k / self.n

    @property
    def amplitude(self):
        return default_magnitude(self.n) if self.magnitude is None else float(self.magnitude)

    def phase(self):
        return PhaseParams(self.realized_alpha, self.realized_beta, self.signed)

    @classmethod
    def from_mapping(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "algorithms" in data and isinstance(data["algorithms"], str):
            data["algorithms"] = tuple(a.strip() for a in data["algorithms"].split(",") if a.strip())
        return cls(**data)


def load_config_file(path):
    """Read ExperimentConfig fields from a .toml or .json file into a dict."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:  # python < 3.11
            import tomli as tomllib

        return tomllib.loads(text.decode())
    return json.loads(text)


@dataclass(frozen=True)
class TheoryColumns:
    nu: float
    zeta: float | None
    rho: float | None
    alpha_w: float
    below_threshold: bool


def theory_columns(config: ExperimentConfig) -> TheoryColumns:
    tp = characterize(config.phase())
    return TheoryColumns(
        tp.nu_star,
        tp.zeta(config.sigma),
        tp.error_norm(config.sigma),
        tp.alpha_w,
        tp.below_threshold,
    )


@dataclass
class TrialRecord:
    trial_index: int
    algorithm: str
    ok: bool
    w_norm: float
    zeta_over_sqrt_n: float
    iterations: int = 0
    status: str = "ok"
    # oracle only: |r|^2, |g|^2 and <lam, x_tilde> for plug-in aggregation
    residual_sq: float = math.nan
    g_sq: float = math.nan
    paid: float = math.nan
    nu_hat: float = math.nan


@dataclass
class AlgorithmStats:
    """Aggregates over successful trials.

    For the oracle, ``mean_w_norm`` and ``mean_zeta`` are plug-in values
    sigma*sqrt(E r^2)/sqrt(E g^2 - E r^2) and (sigma*sqrt(E g^2 - E r^2) - E paid)/sqrt(n),
    matching how the dual prediction is stated in terms of expectations;
    the per-sample averages are kept in ``sample_mean_w_norm`` / ``sample_mean_zeta``.
    """

    algorithm: str
    successes: int
    failures: int
    mean_w_norm: float
    std_w_norm: float
    mean_zeta: float
    std_zeta: float
    sample_mean_w_norm: float
    sample_mean_zeta: float
    mean_nu: float = math.nan


@dataclass
class TrialSummary:
    config: ExperimentConfig
    theory: TheoryColumns
    stats: dict[str, AlgorithmStats]
    records: list[TrialRecord] = field(default_factory=list)
    wall_time: float = 0.0
    label: str = ""


# -- instances -------------------------------------------------------------------


def generate_instance(config: ExperimentConfig, trial_index: int) -> solvers.ProblemInstance:
    seed = rng.trial_seed(config.master_seed, trial_index)
    m, n, k = config.m, config.n, config.k
    A = rng.standard_normal(rng.substream(seed, rng.STREAM_MATRIX), m * n).reshape(m, n)
    v = config.sigma * rng.standard_normal(rng.substream(seed, rng.STREAM_NOISE), m)
    x_tilde = np.zeros(n)
    if k:
        x_tilde[n - k:] = config.amplitude
    return solvers.make_instance(A, x_tilde, v, config.sigma, seed)


def _run_trial(config: ExperimentConfig, trial_index: int) -> list[TrialRecord]:
    deadline = time.monotonic() + config.trial_timeout
    sqrt_n = math.sqrt(config.n)
    out = []
    inst = None
    if any(a != "oracle" for a in config.algorithms):
        inst = generate_instance(config, trial_index)
    params = config.phase()
    for algo in config.algorithms:
        try:
            if algo == "constrained":
                rep = solvers.solve_constrained_lasso(inst, float(np.abs(inst.x_tilde).sum()),
                                                      config.signed, deadline=deadline)
                zeta = rep.zeta
            elif algo == "penalized":
                lam = solvers.lambda_from_theory(params)
                rep = solvers.solve_penalized_lasso(inst, lam, config.signed, deadline=deadline)
                zeta = rep.objective
            elif algo == "socp":
                r = solvers.r_socp_from_theory(params, config.sigma, config.n)
                rep = solvers.solve_socp(inst, r, config.signed, deadline=deadline)
                zeta = rep.zeta
            else:
                out.append(_oracle_record(config, trial_index))
                continue
            out.append(TrialRecord(trial_index, algo, rep.converged, rep.w_norm, zeta / sqrt_n,
                                   rep.iterations, rep.status))
        except (solvers.Infeasible, solvers.AboveThreshold, oracle.Divergent) as exc:
            log.warning("trial %d %s failed: %s", trial_index, algo, exc)
            out.append(TrialRecord(trial_index, algo, False, math.nan, math.nan, 0, type(exc).__name__))
    return out


def _oracle_record(config, trial_index):
    seed = rng.trial_seed(config.master_seed, trial_index)
    pair = oracle.sample_pair(config.m, config.n, seed)
    x_tilde = oracle.sparse_x_tilde(config.n, config.k, config.amplitude)
    solve = oracle.xi_ov_signed_general if config.signed else oracle.xi_ov_general
    s = solve(config.sigma, pair, x_tilde)
    ok = s.overwhelming and math.isfinite(s.w_hat_norm)
    return TrialRecord(
        trial_index, "oracle", ok, s.w_hat_norm, s.xi_ov / math.sqrt(config.n), s.iterations,
        "ok" if ok else "divergent", s.residual_norm ** 2, float(pair.g @ pair.g),
        float(s.lambda_hat @ x_tilde), s.nu_hat,
    )


def plugin_estimate(sigma, n, residual_sq, g_sq, paid):
    """Ratio-of-means oracle prediction (w_norm, zeta/sqrt(n)) from per-sample pieces.

    The per-sample ratio |r| / sqrt(|g|^2 - |r|^2) divides two O(n) terms
    whose difference is O(n) but noisy, so its sample mean is biased upward
    at moderate n; the plug-in form uses the averaged pieces instead.
    """
    r2, g2, pd = (statistics.fmean(v) for v in (residual_sq, g_sq, paid))
    if g2 <= r2:
        return math.inf, math.inf
    root = math.sqrt(g2 - r2)
    return sigma * math.sqrt(r2) / root, (sigma * root - pd) / math.sqrt(n)


def _std(values):
    return statistics.stdev(values) if len(values) > 1 else 0.0


def _aggregate(config, algo, records):
    good = [r for r in records if r.ok]
    fails = len(records) - len(good)
    if not good:
        return AlgorithmStats(algo, 0, fails, *([math.nan] * 6))
    w = [r.w_norm for r in good]
    z = [r.zeta_over_sqrt_n for r in good]
    mean_w, mean_z = statistics.fmean(w), statistics.fmean(z)
    stats = AlgorithmStats(algo, len(good), fails, mean_w, _std(w), mean_z, _std(z), mean_w, mean_z)
    if algo == "oracle":
        stats.mean_w_norm, stats.mean_zeta = plugin_estimate(
            config.sigma, config.n, [r.residual_sq for r in good], [r.g_sq for r in good],
            [r.paid for r in good],
        )
        stats.mean_nu = statistics.fmean(r.nu_hat for r in good)
    return stats


def run_experiment(config: ExperimentConfig, label="") -> TrialSummary:
    """Run all trials and aggregate per algorithm.

    Non-converged solves and divergent oracle samples count as failures and
    are excluded from the means. More than 10% failures for any algorithm
    raises ExperimentFailed (with the summary attached).
    """
    t0 = time.perf_counter()
    indices = range(config.trials)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            batches = list(pool.map(_run_trial, [config] * config.trials, indices))
    else:
        batches = [_run_trial(config, i) for i in indices]
    records = [r for batch in batches for r in batch]
    records.sort(key=lambda r: (r.trial_index, config.algorithms.index(r.algorithm)))
    stats = {
        algo: _aggregate(config, algo, [r for r in records if r.algorithm == algo])
        for algo in config.algorithms
    }
    summary = TrialSummary(config, theory_columns(config), stats, records,
                           time.perf_counter() - t0, label)
    for algo, st in stats.items():
        log.info("%s n=%d alpha=%.4g beta=%.4g %s: w=%.5g zeta=%.5g (%d ok, %d failed)",
                 label or "experiment", config.n, config.alpha, config.beta, algo,
                 st.mean_w_norm, st.mean_zeta, st.successes, st.failures)
        if st.failures > FAILURE_LIMIT * config.trials:
            raise ExperimentFailed(
                f"{algo}: {st.failures}/{config.trials} trials failed (limit {FAILURE_LIMIT:.0%})", summary
            )
    return summary


# -- result tables ----------------------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    alpha: float
    beta_over_alpha: float  # as printed
    n: int
    nu: float               # printed theory value
    # printed experimental means: (zeta_conn, w_conn) from the penalized
    # program, (zeta_obj, w_lasso) from the constrained one
    zeta_conn: float
    w_conn: float
    zeta_obj: float
    w_lasso: float


@dataclass(frozen=True)
class TableSpec:
    rho: float
    signed: bool
    rows: tuple[TableRow, ...]


TABLES = {
    1: TableSpec(2.0, False, (
        TableRow(0.3, 0.21, 2000, 1.3141, 0.2444, 2.0225, 0.2449, 2.0188),
        TableRow(0.5, 0.27, 2000, 1.0227, 0.3159, 2.0058, 0.3162, 2.0018),
        TableRow(0.7, 0.33, 2000, 0.7959, 0.3717, 2.0168, 0.3721, 2.0155),
    )),
    2: TableSpec(3.0, False, (
        TableRow(0.3, 0.249, 3000, 1.2508, 0.1699, 3.1714, 0.1705, 3.1507),
        TableRow(0.5, 0.325, 2000, 0.9477, 0.2231, 3.0560, 0.2239, 3.0405),
        TableRow(0.7, 0.41, 2000, 0.7046, 0.2579, 3.1166, 0.2585, 3.1069),
    )),
    3: TableSpec(2.0, True, (
        TableRow(0.3, 0.286, 2000, 0.9592, 0.2454, 1.9939, 0.2461, 1.9876),
        TableRow(0.5, 0.3842, 2000, 0.6516, 0.3133, 2.0229, 0.3140, 2.0177),
        TableRow(0.7, 0.4849, 1500, 0.4292, 0.3786, 1.9947, 0.3794, 1.9886),
    )),
    4: TableSpec(3.0, True, (
        TableRow(0.3, 0.3423, 2000, 0.8197, 0.1713, 3.1213, 0.1723, 3.0898),
        TableRow(0.5, 0.4672, 2000, 0.5757, 0.2245, 2.9983, 0.2255, 2.9860),
        TableRow(0.7, 0.5971, 1500, 0.3470, 0.2644, 3.0373, 0.2654, 3.0218),
    )),
}


def scaled_size(n_full, scale):
    if not (0.0 < scale <= 1.0):
        raise ValueError("scale must lie in (0, 1]")
    return max(200, int(round(scale * n_full))), max(20, int(round(scale * 100)))


def table_configs(which, scale=1.0, master_seed=0, algorithms=("constrained", "penalized"),
                  trials=None, workers=1) -> list[ExperimentConfig]:
    """Configs for one result table; beta is taken on the exact error contour."""
    if which not in TABLES:
        raise ValueError(f"table must be one of {sorted(TABLES)}")
    table = TABLES[which]
    out = []
    for row in table.rows:
        n, n_trials = scaled_size(row.n, scale)
        beta = beta_on_contour(row.alpha, table.rho, table.signed)
        out.append(ExperimentConfig(
            n=n, alpha=row.alpha, beta=beta, trials=trials or n_trials, master_seed=master_seed,
            signed=table.signed, algorithms=tuple(algorithms), workers=workers,
        ))
    return out


def reproduce_table(which, scale=1.0, master_seed=0, algorithms=("constrained", "penalized"),
                    trials=None, workers=1) -> list[TrialSummary]:
    return [
        run_experiment(cfg, label=f"table{which}/alpha={cfg.alpha}")
        for cfg in table_configs(which, scale, master_seed, algorithms, trials, workers)
    ]


# -- export ------------------------------------------------------------------------


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return format(x, ".17g") if math.isfinite(x) else ""


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def summary_rows(summaries: Iterable[TrialSummary]):
    for s in summaries:
        cfg = s.config
        for algo in cfg.algorithms:
            st = s.stats[algo]
            yield {
                "alpha": cfg.realized_alpha, "beta": cfg.realized_beta, "n": cfg.n,
                "trials": st.successes, "algorithm": algo,
                "mean_w_norm": st.mean_w_norm, "std_w_norm": st.std_w_norm,
                "mean_zeta": st.mean_zeta, "std_zeta": st.std_zeta,
                "theory_nu": s.theory.nu, "theory_zeta": s.theory.zeta, "theory_rho": s.theory.rho,
                "seed": cfg.master_seed,
            }


def curve_rows(curves: Iterable[ContourCurve]):
    for c in curves:
        for a, b in c.points:
            yield {"rho": c.rho, "signed": c.signed, "alpha": a, "beta": b}


def _curves_path(path: Path):
    return path.with_name(path.stem + "_curves" + path.suffix)


def export_results(summaries: Sequence[TrialSummary], curves: Sequence[ContourCurve], path, format="csv"):
    """Write summaries (and contour curves) as CSV or JSON.

    CSV: summaries go to ``path`` with the fixed CSV_COLUMNS header, curves
    (if any) to ``<stem>_curves<suffix>`` with CURVE_COLUMNS. JSON: one
    document ``{"results": [...], "curves": [...]}`` with the same keys.
    Non-finite numbers become empty cells / null.
    """
    path = Path(path)
    try:
        if format == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(CSV_COLUMNS)
                for row in summary_rows(summaries):
                    w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
            if curves:
                with _curves_path(path).open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(CURVE_COLUMNS)
                    for row in curve_rows(curves):
                        w.writerow([_fmt(row[c]) for c in CURVE_COLUMNS])
        elif format == "json":
            doc = {
                "results": [
                    {c: (row[c] if c in ("algorithm", "n", "trials", "seed") else _json_num(row[c]))
                     for c in CSV_COLUMNS}
                    for row in summary_rows(summaries)
                ],
                "curves": [
                    {"rho": c.rho, "signed": c.signed, "points": [[a, b] for a, b in c.points]}
                    for c in curves
                ],
            }
            path.write_text(json.dumps(doc, indent=2) + "\n")
        else:
            raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results_csv(path):
    """Parse a results CSV back into dicts with numeric fields as floats (blank -> nan)."""
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, val in row.items():
                if key == "algorithm":
                    parsed[key] = val
                elif key in ("n", "trials", "seed"):
                    parsed[key] = int(val)
                else:
                    parsed[key] = float(val) if val != "" else math.nan
            out.append(parsed)
    return out


def summary_to_dict(s: TrialSummary):
    """JSON-ready view of a summary including per-algorithm detail."""
    cfg = asdict(s.config)
    cfg["algorithms"] = list(s.config.algorithms)
    return {
        "label": s.label,
        "config": cfg,
        "m": s.config.m,
        "k": s.config.k,
        "theory": {k: (_json_num(v) if not isinstance(v, bool) else v) for k, v in asdict(s.theory).items()},
        "stats": {a: {k: (_json_num(v) if isinstance(v, float) else v) for k, v in asdict(st).items()}
                  for a, st in s.stats.items()},
        "wall_time": s.wall_time,
    }

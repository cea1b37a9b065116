"""Exact-criterion evaluation, normalized fit metrics and the seeded
Monte-Carlo study harness."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .config import ExperimentConfig
from .lti import (
    TransferFunction,
    cancel_common_roots,
    closed_loop,
    converged_impulse_response,
    h2_norm_sq,
    impulse_response,
    is_stable,
    simulate,
    tf_mul,
    tf_one_minus,
    tf_sub,
)
from .runtime import derive_seed, worker_count
from .scenario import sample_scenarios
from .synthesis import (
    Controller,
    build_regret_program,
    solve_min_max,
    solve_min_max_regret,
    solve_nominal,
)
from .sysid import least_squares_fir, membership, uncertainty_set

__all__ = [
    "METHODS",
    "RunRecord",
    "EvaluationReport",
    "true_cost",
    "surrogate_cost",
    "fit_fw",
    "fit_fc",
    "step_response",
    "run_monte_carlo",
    "report_to_csv",
    "report_to_json",
]

METHODS = ("baseline", "nominal", "min-max", "min-max-baseline")
_SAFETY_TOL = 1e-9


def _ctf(C) -> TransferFunction:
    return C.transfer_function() if isinstance(C, Controller) else C


def true_cost(C, G: TransferFunction, W: TransferFunction, L: int = 2000) -> float:
    """Exact model-reference cost ||W - GC/(1+GC)||_2^2 against G.

    Returns +inf when the closed loop is unstable (or too close to
    marginal for the truncated norm to converge).
    """
    ctf = _ctf(C)
    try:
        loop = closed_loop(G, ctf)
    except ValueError:
        return math.inf
    if not is_stable(loop):
        return math.inf
    try:
        ir = converged_impulse_response(tf_sub(W, loop), L)
    except ValueError:
        return math.inf
    return h2_norm_sq(ir)


def surrogate_cost(C, G: TransferFunction, W: TransferFunction, L: int = 2000) -> float:
    """Convex surrogate ||W - (1-W) G C||_2^2 evaluated by rational algebra."""
    ctf = _ctf(C)
    resp = cancel_common_roots(tf_sub(W, tf_mul(tf_mul(tf_one_minus(W), G), ctf)))
    try:
        ir = converged_impulse_response(resp, L)
    except ValueError:
        return math.inf
    return h2_norm_sq(ir)


def _w_norm_sq(W: TransferFunction, L: int) -> float:
    return h2_norm_sq(converged_impulse_response(W, L))


def fit_fw(C, G_true: TransferFunction, W: TransferFunction, L: int = 2000) -> float:
    """1 - J/||W||^2: 1 is perfect reference matching, -inf an unstable loop."""
    cost = true_cost(C, G_true, W, L)
    if not math.isfinite(cost):
        return -math.inf
    return 1.0 - cost / _w_norm_sq(W, L)


def fit_fc(C, G_true: TransferFunction, W: TransferFunction, L: int = 2000) -> float:
    """Surrogate counterpart of fit_fw."""
    cost = surrogate_cost(C, G_true, W, L)
    if not math.isfinite(cost):
        return -math.inf
    return 1.0 - cost / _w_norm_sq(W, L)


def step_response(C, G: TransferFunction, length: int) -> np.ndarray:
    """Closed-loop output for a unit step reference, zero initial state."""
    loop = closed_loop(G, _ctf(C))
    if not is_stable(loop):
        raise ValueError("closed loop is unstable; no step response")
    return lfilter(loop.num, loop.den, np.ones(length))


@dataclass(frozen=True)
class RunRecord:
    run: int
    N: int
    method: str
    rho: np.ndarray | None
    f_w: float
    f_c: float
    stable: bool
    converged: bool
    beta: float
    iterations: int
    set_contains_truth: bool
    error: str | None = None


@dataclass
class EvaluationReport:
    """All per-run records of one study plus recomputable aggregates."""

    records: list[RunRecord] = field(default_factory=list)

    def values(self, method: str, metric: str = "f_w") -> np.ndarray:
        vals = [
            getattr(r, metric) for r in sorted(self.records, key=lambda r: r.run)
            if r.method == method
        ]
        return np.asarray(vals, dtype=float)

    def aggregate(self, metric: str = "f_w") -> dict:
        out = {}
        for method in METHODS:
            vals = self.values(method, metric)
            if vals.size == 0:
                continue
            finite = vals[np.isfinite(vals)]
            qs = (
                np.quantile(finite, [0.0035, 0.25, 0.5, 0.75, 0.9965])
                if finite.size
                else [math.nan] * 5
            )
            out[method] = {
                "count": int(vals.size),
                "failed": int(vals.size - finite.size),
                "whisker_lo": float(qs[0]),
                "q1": float(qs[1]),
                "median": float(qs[2]),
                "q3": float(qs[3]),
                "whisker_hi": float(qs[4]),
                "mean": float(finite.mean()) if finite.size else math.nan,
                "outliers": (
                    int(np.sum((finite < qs[0]) | (finite > qs[4])))
                    if finite.size
                    else 0
                ),
            }
        return out

    def safety_fraction(self) -> dict:
        """Among runs whose set contains the truth, how often the
        baseline-regret controller kept (or improved) the exact fit."""
        base = {r.run: r.f_w for r in self.records if r.method == "baseline"}
        cand = {
            r.run: (r.f_w, r.set_contains_truth)
            for r in self.records
            if r.method == "min-max-baseline"
        }
        covered = [run for run, (_, c) in cand.items() if c]
        if not covered:
            return {"covered_runs": 0, "safe_fraction": math.nan}
        safe = sum(
            1 for run in covered if cand[run][0] >= base[run] - _SAFETY_TOL
        )
        return {"covered_runs": len(covered), "safe_fraction": safe / len(covered)}


def _run_once(cfg: ExperimentConfig, N: int, run_idx: int) -> list[RunRecord]:
    L = cfg.truncation
    G_true = cfg.true_system
    W = cfg.reference_model()
    basis = cfg.controller_basis()
    rho_b = cfg.rho_b
    g_true = impulse_response(G_true, cfg.n).taps

    def record(method, rho, converged=True, beta=math.nan, iters=0,
               contains=False, error=None):
        if rho is None or error is not None:
            return RunRecord(
                run=run_idx, N=N, method=method, rho=rho, f_w=math.nan,
                f_c=math.nan, stable=False, converged=converged, beta=beta,
                iterations=iters, set_contains_truth=contains, error=error,
            )
        ctrl = Controller(rho=np.asarray(rho, dtype=float), basis=basis)
        fw = fit_fw(ctrl, G_true, W, L)
        fc = fit_fc(ctrl, G_true, W, L)
        return RunRecord(
            run=run_idx, N=N, method=method, rho=np.asarray(rho, dtype=float),
            f_w=fw, f_c=fc, stable=math.isfinite(fw), converged=converged,
            beta=beta, iterations=iters, set_contains_truth=contains, error=None,
        )

    try:
        rng_u = np.random.default_rng(derive_seed(cfg.master_seed, N, run_idx, 0))
        u = rng_u.standard_normal(N)
        if "variance" in cfg.noise:
            noise_std = cfg.noise_std()
        else:
            clean = simulate(G_true, u, 0.0, 0).y
            noise_std = cfg.noise_std(clean)
        data = simulate(G_true, u, noise_std, derive_seed(cfg.master_seed, N, run_idx, 1))
        est = least_squares_fir(data, cfg.n)
    except Exception as exc:  # identification failure poisons the whole run
        msg = f"{type(exc).__name__}: {exc}"
        return [record(m, None, error=msg) for m in METHODS]

    # the uncertainty set only gates the worst-case methods; baseline and
    # nominal still make sense when it cannot be built (e.g. exact fits)
    prog = None
    contains = False
    set_error = None
    try:
        uset = uncertainty_set(est, cfg.alpha, scale_by_n=cfg.scale_by_n)
        contains = membership(uset, g_true)
        sset = sample_scenarios(
            uset, cfg.scenario_count(), derive_seed(cfg.master_seed, N, run_idx, 2)
        )
        prog = build_regret_program(sset, W, basis, rho_b, L=L, box=cfg.box)
    except Exception as exc:
        set_error = f"{type(exc).__name__}: {exc}"

    out = [record("baseline", rho_b, contains=contains)]
    try:
        nom = solve_nominal(est.g_hat, W, basis, L)
        out.append(record("nominal", nom.rho, contains=contains))
    except Exception as exc:
        out.append(record("nominal", None, contains=contains,
                          error=f"{type(exc).__name__}: {exc}"))
    for method, solver in (
        ("min-max", solve_min_max),
        ("min-max-baseline", solve_min_max_regret),
    ):
        if prog is None:
            out.append(record(method, None, contains=contains, error=set_error))
            continue
        try:
            res = solver(prog, tol=cfg.tol)
            out.append(
                record(method, res.rho_star, converged=res.converged,
                       beta=res.beta_star, iters=res.iterations, contains=contains)
            )
        except Exception as exc:
            out.append(record(method, None, contains=contains,
                              error=f"{type(exc).__name__}: {exc}"))
    return out


def run_monte_carlo(
    cfg: ExperimentConfig, n_value: int | None = None, workers: int | None = None
) -> EvaluationReport:
    """Independent identify/sample/synthesize/evaluate runs at one data length.

    Every run owns seed substreams derived from (master_seed, N, run), so
    the report is identical for any worker count; failed runs are recorded
    and never abort the study.
    """
    N = int(n_value if n_value is not None else cfg.N)
    workers = worker_count() if workers is None else max(1, workers)
    task = partial(_run_once, cfg, N)
    run_ids = list(range(cfg.runs))
    if workers == 1 or cfg.runs == 1:
        batches = [task(i) for i in run_ids]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.runs)) as pool:
            batches = list(pool.map(task, run_ids))
    report = EvaluationReport()
    for batch in batches:
        report.records.extend(batch)
    return report


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def report_to_csv(report: EvaluationReport, path) -> None:
    """One row per run-method pair, deterministic formatting."""
    records = sorted(report.records, key=lambda r: (r.run, METHODS.index(r.method)))
    p = max((r.rho.size for r in records if r.rho is not None), default=0)
    cols = ["run", "N", "method", "converged", "stable", "f_w", "f_c", "beta",
            "iterations", "set_contains_truth"]
    cols += [f"rho_{k}" for k in range(p)] + ["error"]
    lines = [",".join(cols)]
    for r in records:
        rho = ["" for _ in range(p)]
        if r.rho is not None:
            rho = [_fmt(v) for v in r.rho]
        row = [
            _fmt(r.run), _fmt(r.N), r.method, _fmt(r.converged), _fmt(r.stable),
            _fmt(r.f_w), _fmt(r.f_c), _fmt(r.beta), _fmt(r.iterations),
            _fmt(r.set_contains_truth), *rho,
            (r.error or "").replace(",", ";").replace("\n", " "),
        ]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def report_to_json(report: EvaluationReport, path, extra: dict | None = None) -> None:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, float) and not math.isfinite(obj):
            return repr(obj)
        return obj

    doc = {
        "aggregates": {m: clean(report.aggregate(m)) for m in ("f_w", "f_c")},
        "safety": clean(report.safety_fraction()),
    }
    if extra:
        doc["metadata"] = clean(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")

"""Built-in case studies and their report pipelines.

Two experiments ship with the package: ``1d`` tunes a single proportional
gain for a second-order low-pass plant, and ``highdim`` tunes a six-
parameter integrator-plus-FIR controller for a fourth-order plant via a
Monte-Carlo study.  ``desk`` scale keeps runtimes interactive; ``paper``
scale switches to the original study sizes (more runs, larger scenario
counts) and is slow.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .evaluation import report_to_csv, report_to_json, run_monte_carlo
from .lti import simulate
from .runtime import derive_seed, worker_count
from .scenario import sample_scenarios, scenarios_to_dict
from .synthesis import build_regret_program, solve_min_max, solve_min_max_regret
from .sysid import (
    estimate_to_dict,
    least_squares_fir,
    uncertainty_set,
    write_dataset_csv,
)

__all__ = [
    "EXPERIMENTS",
    "REFERENCE_M",
    "builtin_config",
    "scale_config",
    "scenario_metadata",
    "run_experiment",
    "run_mc_study",
]

EXPERIMENTS = ("1d", "highdim")

# scenario counts used by the original studies; they exceed the
# ceil((2/eps)(ln(1/eta)+p)) bound and are kept for literal reproduction
REFERENCE_M = {"1d": 1523, "highdim": 6138}


def builtin_config(experiment: str) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; pick from {EXPERIMENTS}")
    text = (
        resources.files("regret_tune").joinpath(f"configs/{experiment}.json").read_text()
    )
    return ExperimentConfig.from_dict(json.loads(text))


def scale_config(cfg: ExperimentConfig, experiment: str, scale: str) -> ExperimentConfig:
    if scale == "desk":
        return cfg
    if scale != "paper":
        raise ValueError(f"unknown scale {scale!r}; pick desk or paper")
    updates: dict = {"m_override": REFERENCE_M[experiment]}
    if experiment == "highdim":
        updates["runs"] = 100
    return dataclasses.replace(cfg, **updates)


def scenario_metadata(cfg: ExperimentConfig, experiment: str | None = None) -> dict:
    bound = cfg.scenario_bound()
    used = cfg.scenario_count()
    meta = {
        "epsilon": cfg.epsilon,
        "eta": cfg.eta,
        "p": cfg.controller_basis().p,
        "m_bound": bound,
        "m_used": used,
        "radius_scaled_by_n": cfg.scale_by_n,
    }
    if experiment in REFERENCE_M:
        meta["m_reference"] = REFERENCE_M[experiment]
        if REFERENCE_M[experiment] != bound:
            meta["m_note"] = (
                f"the reference study count {REFERENCE_M[experiment]} exceeds the "
                f"sample-complexity bound {bound}; pass --m-override to use it"
            )
    return meta


# -- scalar-gain study -------------------------------------------------------


def _gain_study_cell(cfg: ExperimentConfig, seed: int, N: int) -> dict:
    """Identify once at data length N, then solve both worst-case variants
    for every baseline gain in the panel."""
    G = cfg.true_system
    W = cfg.reference_model()
    basis = cfg.controller_basis()
    rng_u = np.random.default_rng(derive_seed(seed, N, 0))
    u = rng_u.standard_normal(N)
    data = simulate(G, u, cfg.noise_std(), derive_seed(seed, N, 1))
    est = least_squares_fir(data, cfg.n)
    uset = uncertainty_set(est, cfg.alpha, scale_by_n=cfg.scale_by_n)
    sset = sample_scenarios(uset, cfg.scenario_count(), derive_seed(seed, N, 2))

    gains = np.linspace(cfg.box[0], cfg.box[1], 401)
    panel = cfg.baseline_gains or tuple(float(x) for x in cfg.rho_b)
    cells = []
    mm_result = None
    costs = None
    for k_b in panel:
        prog = build_regret_program(sset, W, basis, [k_b], L=cfg.truncation,
                                    box=cfg.box)
        if mm_result is None:
            # the worst-case solution and the cost curves are baseline-free
            mm_result = solve_min_max(prog, tol=cfg.tol)
            a, b_lin = prog.A[:, 0, 0], prog.b[:, 0]
            costs = (
                a[:, None] * gains[None, :] ** 2
                - 2.0 * b_lin[:, None] * gains[None, :]
                + prog.d
            )
        mmb = solve_min_max_regret(prog, tol=cfg.tol)
        cells.append(
            {
                "k_b": k_b,
                "k_mmb": float(mmb.rho_star[0]),
                "beta_mmb": mmb.beta_star,
                "converged_mmb": mmb.converged,
                "iterations_mmb": mmb.iterations,
                "max_violation_mmb": mmb.max_violation,
                "regret_curves": costs - prog.c[:, None],
            }
        )
    return {
        "N": N,
        "data": data,
        "estimate": estimate_to_dict(est, uset),
        "scenarios": scenarios_to_dict(sset),
        "gains": gains,
        "cost_curves": costs,
        "k_mm": float(mm_result.rho_star[0]),
        "beta_mm": mm_result.beta_star,
        "converged_mm": mm_result.converged,
        "cells": cells,
    }


def _run_gain_study(cfg: ExperimentConfig, seed: int, outdir: Path,
                    workers: int) -> bool:
    from .plots import save_cost_curves

    task = partial(_gain_study_cell, cfg, seed)
    n_values = list(cfg.n_values)
    if workers > 1 and len(n_values) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(n_values))) as pool:
            results = list(pool.map(task, n_values))
    else:
        results = [task(N) for N in n_values]

    k_opt = (
        float(cfg.reference_controller.num[0])
        if cfg.reference_kind == "closed_loop"
        else float("nan")
    )
    rows = ["N,k_b,k_mm,k_mmb,beta_mm,beta_mmb,converged_mm,converged_mmb,m_used"]
    ok = True
    for res in results:
        N = res["N"]
        write_dataset_csv(res["data"], outdir / f"data_N{N}.csv")
        (outdir / f"estimate_N{N}.json").write_text(
            json.dumps(res["estimate"]) + "\n"
        )
        (outdir / f"scenarios_N{N}.json").write_text(
            json.dumps(res["scenarios"]) + "\n"
        )
        solver_doc = {
            "minmax": {"k": res["k_mm"], "beta_star": res["beta_mm"],
                        "converged": res["converged_mm"]},
            "minmax-baseline": [
                {k: v for k, v in cell.items() if k != "regret_curves"}
                for cell in res["cells"]
            ],
        }
        (outdir / f"results_N{N}.json").write_text(
            json.dumps(solver_doc, indent=2) + "\n"
        )
        ok = ok and res["converged_mm"]
        for cell in res["cells"]:
            ok = ok and cell["converged_mmb"]
            rows.append(
                ",".join(
                    [
                        str(N),
                        repr(float(cell["k_b"])),
                        repr(res["k_mm"]),
                        repr(cell["k_mmb"]),
                        repr(res["beta_mm"]),
                        repr(float(cell["beta_mmb"])),
                        "true" if res["converged_mm"] else "false",
                        "true" if cell["converged_mmb"] else "false",
                        str(cfg.scenario_count()),
                    ]
                )
            )
            save_cost_curves(
                outdir / f"sweep_N{N}_Kb{cell['k_b']:g}.svg",
                res["gains"],
                res["cost_curves"],
                cell["regret_curves"],
                k_mm=res["k_mm"],
                k_mmb=cell["k_mmb"],
                k_b=cell["k_b"],
                k_opt=k_opt,
                title=f"N={N}, baseline gain {cell['k_b']:g}",
            )
    (outdir / "metrics.csv").write_text("\n".join(rows) + "\n")
    return ok


# -- high-dimensional Monte-Carlo study --------------------------------------


def run_mc_study(cfg: ExperimentConfig, seed: int, outdir: Path,
                 workers: int) -> bool:
    from .plots import save_metric_boxes

    cfg = dataclasses.replace(cfg, master_seed=seed)
    ok = True
    for N in cfg.n_values:
        report = run_monte_carlo(cfg, n_value=N, workers=workers)
        report_to_csv(report, outdir / f"report_N{N}.csv")
        report_to_json(
            report,
            outdir / f"aggregate_N{N}.json",
            extra={"N": N, "runs": cfg.runs, **scenario_metadata(cfg)},
        )
        base_fw = report.values("baseline", "f_w")
        base_fc = report.values("baseline", "f_c")
        save_metric_boxes(
            outdir / f"boxes_fw_N{N}.svg", report, "f_w",
            float(np.median(base_fw)), title=f"exact fit, N={N}",
        )
        save_metric_boxes(
            outdir / f"boxes_fc_N{N}.svg", report, "f_c",
            float(np.median(base_fc)), title=f"surrogate fit, N={N}",
        )
        ok = ok and all(
            r.converged for r in report.records if r.error is None
        ) and not any(r.error for r in report.records)
    return ok


def run_experiment(
    experiment: str,
    scale: str,
    seed: int | None,
    outdir,
    workers: int | None = None,
) -> bool:
    """Run a built-in study end to end; returns True iff every stage
    converged.  Artifacts (CSV, JSON, SVG) land in ``outdir``."""
    cfg = scale_config(builtin_config(experiment), experiment, scale)
    seed = cfg.master_seed if seed is None else int(seed)
    workers = worker_count() if workers is None else workers
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    meta = {
        "experiment": experiment,
        "scale": scale,
        "seed": seed,
        **scenario_metadata(cfg, experiment),
    }
    (outdir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    if experiment == "1d":
        return _run_gain_study(cfg, seed, outdir, workers)
    return run_mc_study(cfg, seed, outdir, workers)

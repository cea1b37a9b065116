"""Command-line interface: identify, synthesize, evaluate, repro, mc.

Every stage reads and writes plain files (CSV for data and reports, JSON
for estimates, scenario caches, results and configs, SVG for figures), so
pipelines can be re-run stage by stage.  Exit status is 0 only when all
requested stages converged and passed their self-checks.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from .config import load_config
from .evaluation import fit_fc, fit_fw
from .experiments import (
    EXPERIMENTS,
    run_experiment,
    run_mc_study,
    scenario_metadata,
)
from .runtime import derive_seed, worker_count
from .scenario import sample_scenarios
from .synthesis import (
    Controller,
    SynthesisResult,
    build_regret_program,
    solve_min_max,
    solve_min_max_regret,
    solve_nominal,
)
from .sysid import (
    estimate_from_dict,
    estimate_to_dict,
    least_squares_fir,
    read_dataset_csv,
    uncertainty_set,
)

_METHOD_FLAGS = ("nominal", "minmax", "minmax-baseline", "all")


@click.group()
def main():
    """Data-driven controller tuning with baseline-safety guarantees."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def identify(config_path, data_path, out_path):
    """Fit the FIR model and its uncertainty set from a u,y CSV file."""
    try:
        cfg = load_config(config_path)
        data = read_dataset_csv(data_path)
        est = least_squares_fir(data, cfg.n)
        uset = uncertainty_set(est, cfg.alpha, scale_by_n=cfg.scale_by_n)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc))
    Path(out_path).write_text(json.dumps(estimate_to_dict(est, uset)) + "\n")
    click.echo(
        f"n={est.n} N={est.N} sigma_v_sq_hat={est.sigma_v_sq_hat!r} "
        f"radius_sq={uset.radius_sq!r}"
    )


def _result_dict(res: SynthesisResult) -> dict:
    return {
        "rho_star": [float(x) for x in res.rho_star],
        "beta_star": res.beta_star,
        "iterations": res.iterations,
        "max_violation": res.max_violation,
        "converged": res.converged,
        "gap": res.gap,
    }


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--estimate", "estimate_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(_METHOD_FLAGS), default="all")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--m-override", type=int, default=None,
              help="Scenario count overriding the sample-complexity bound.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="Write a per-iteration solver trace CSV here.")
def synthesize(config_path, estimate_path, method, seed, out_path, m_override,
               trace_path):
    """Sample scenarios from a stored estimate and tune the controller."""
    try:
        cfg = load_config(config_path)
        est, uset = estimate_from_dict(json.loads(Path(estimate_path).read_text()))
        if uset is None:
            raise ValueError("estimate file does not carry an uncertainty set")
        basis = cfg.controller_basis()
        seed = cfg.master_seed if seed is None else seed
        m_used = m_override if m_override is not None else cfg.scenario_count()
        meta = scenario_metadata(cfg)
        meta.update({"seed": seed, "m_used": m_used})
        results: dict[str, dict] = {}
        keep_trace = trace_path is not None
        trace_rows: list[str] = []
        if method in ("nominal", "all"):
            nom = solve_nominal(est.g_hat, cfg.reference_model(), basis,
                                cfg.truncation)
            results["nominal"] = {
                "rho_star": [float(x) for x in nom.rho],
                "converged": True,
            }
        if method in ("minmax", "minmax-baseline", "all"):
            sset = sample_scenarios(uset, m_used, derive_seed(seed, 2))
            prog = build_regret_program(
                sset, cfg.reference_model(), basis, cfg.rho_b,
                L=cfg.truncation, box=cfg.box,
            )
            if method in ("minmax", "all"):
                res = solve_min_max(prog, tol=cfg.tol, keep_trace=keep_trace)
                results["minmax"] = _result_dict(res)
                if keep_trace:
                    trace_rows += [f"minmax,{i},{u!r},{l!r},{a}"
                                   for i, u, l, a in res.trace]
            if method in ("minmax-baseline", "all"):
                res = solve_min_max_regret(prog, tol=cfg.tol, keep_trace=keep_trace)
                results["minmax-baseline"] = _result_dict(res)
                if keep_trace:
                    trace_rows += [f"minmax-baseline,{i},{u!r},{l!r},{a}"
                                   for i, u, l, a in res.trace]
    except (ValueError, RuntimeError, OSError, KeyError,
            json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc))
    Path(out_path).write_text(
        json.dumps({"methods": results, "metadata": meta}, indent=2) + "\n"
    )
    if trace_path is not None:
        Path(trace_path).write_text(
            "\n".join(["method,iteration,upper_bound,lower_bound,active_scenario"]
                      + trace_rows) + "\n"
        )
    for name, res in results.items():
        rho = np.asarray(res["rho_star"])
        gain = f"rho={rho.tolist()}" if rho.size > 1 else f"K={rho[0]!r}"
        click.echo(f"{name}: {gain} converged={res['converged']}")
    if not all(res["converged"] for res in results.values()):
        raise SystemExit(1)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--result", "result_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def evaluate(config_path, result_path, out_path):
    """Score synthesized controllers against the configured true system."""
    try:
        cfg = load_config(config_path)
        doc = json.loads(Path(result_path).read_text())
        basis = cfg.controller_basis()
        W = cfg.reference_model()
        rows = ["method,f_w,f_c,stable"]
        entries = {"baseline": cfg.rho_b}
        for name, res in doc.get("methods", {}).items():
            entries[name] = np.asarray(res["rho_star"], dtype=float)
        for name, rho in entries.items():
            ctrl = Controller(rho=np.asarray(rho, dtype=float), basis=basis)
            fw = fit_fw(ctrl, cfg.true_system, W, cfg.truncation)
            fc = fit_fc(ctrl, cfg.true_system, W, cfg.truncation)
            rows.append(f"{name},{fw!r},{fc!r},{'true' if np.isfinite(fw) else 'false'}")
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc))
    Path(out_path).write_text("\n".join(rows) + "\n")
    click.echo("\n".join(rows))


@main.command()
@click.argument("experiment", type=click.Choice(EXPERIMENTS))
@click.option("--scale", type=click.Choice(["desk", "paper"]), default="desk")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def repro(experiment, scale, seed, out_dir):
    """Reproduce a built-in case study end to end."""
    try:
        ok = run_experiment(experiment, scale, seed, out_dir,
                            workers=worker_count())
    except (ValueError, RuntimeError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{experiment} ({scale}) -> {out_dir}: "
               + ("all stages converged" if ok else "NON-CONVERGED stages present"))
    if not ok:
        raise SystemExit(1)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n", "n_value", type=int, default=None,
              help="Run only this data length instead of the study sweep.")
def mc(config_path, seed, n_value, out_dir):
    """Monte-Carlo study for a custom experiment config."""
    try:
        cfg = load_config(config_path)
        if n_value is not None:
            import dataclasses

            cfg = dataclasses.replace(cfg, n_values=(int(n_value),))
        seed = cfg.master_seed if seed is None else seed
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ok = run_mc_study(cfg, seed, out, worker_count())
    except (ValueError, RuntimeError, OSError, KeyError,
            json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"mc study -> {out_dir}: "
               + ("all runs converged" if ok else "failures recorded in reports"))
    if not ok:
        raise SystemExit(1)


if __name__ == "__main__":
    main()

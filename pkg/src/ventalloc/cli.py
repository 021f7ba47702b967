"""Command-line workflows: simulate, optimize, bounds, export-mps, validate, tree.

Exit codes: 0 success, 2 configuration error, 3 infeasible model,
4 solver limit hit with an incumbent still reported.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bounds import bounds_report, lower_bound, solve_all_subproblems, upper_bound
from .config import ConfigError, RunConfig, fixture_path, load_config
from .epidemic import BudgetError, EpidemicError, simulate
from .milp import ModelError, RiskConfig, build, extract_solution
from .mps import write_lp, write_mps
from .report import (allocation_csv, paired_t_test, solution_summary,
                     summary_csv, trajectory_csv)
from .solver import solve_mip
from .tree import TreeError, scenario_by_branches, tree_to_json

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _load(config: str | None, fixture: str | None) -> RunConfig:
    try:
        if fixture:
            return load_config(fixture_path(fixture))
        if not config:
            raise CliError("either --config or --fixture is required", EXIT_CONFIG)
        return load_config(config)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc


def _apply_overrides(cfg: RunConfig, budget: float | None, alpha: float | None,
                     lam: float | None, policy: str | None) -> RunConfig:
    try:
        if budget is not None:
            cfg.params = dataclasses.replace(cfg.params, budget=budget)
        if alpha is not None or lam is not None:
            cfg.risk = RiskConfig(
                alpha=cfg.risk.alpha if alpha is None else alpha,
                lambda_risk=cfg.risk.lambda_risk if lam is None else lam)
        if policy:
            names = [p.strip() for p in policy.split(",")]
            from .epidemic import InterventionPolicy
            stages = max(cfg.tree_spec["stages"], len(names))
            if len(names) == 1:
                cfg.policy = InterventionPolicy.uniform(
                    names[0], stages, len(cfg.regions))
                cfg.policy_spec = {"kind": "uniform", "intervention": names[0]}
            else:
                cfg.policy = InterventionPolicy.per_stage(
                    names + [names[-1]] * (stages - len(names)), len(cfg.regions))
                cfg.policy_spec = {"kind": "per_stage", "stages": names}
    except (ValueError, EpidemicError) as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    return cfg


def _sigma2_path(cfg: RunConfig, tree, selector: str):
    try:
        if selector.isdigit():
            return int(selector)
        return scenario_by_branches(tree, selector)
    except TreeError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


common_options = [
    click.option("--config", type=click.Path(), help="Run configuration JSON."),
    click.option("--fixture", type=str,
                 help="Bundled fixture name (e.g. ny_nj_8county, desk_2region)."),
    click.option("--out", type=click.Path(), default="out",
                 help="Output directory."),
]


def _with_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", is_flag=True, help="Log solver progress lines.")
def main(verbose: bool) -> None:
    """Epidemic trajectories and risk-averse ventilator allocation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(message)s")


@main.command(name="simulate")
@_with_options(common_options)
@click.option("--policy", type=str, default=None,
              help="Intervention: one name or a per-stage comma list.")
@click.option("--path", "path_selector", type=str, default="medium",
              help="Scenario path: low|medium|high or a scenario index.")
@click.option("--stages", type=int, default=None, help="Override tree stages.")
def simulate_cmd(config, fixture, out, policy, path_selector, stages):
    """Simulate one scenario path and write trajectory / summary CSVs."""
    cfg = _apply_overrides(_load(config, fixture), None, None, None, policy)
    tree = cfg.build_tree(stages)
    w = _sigma2_path(cfg, tree, path_selector)
    pol = cfg.policy_for(tree.stages)
    try:
        traj = simulate(cfg.initial, tree.sigma2_path(w), pol, None, cfg.params)
    except EpidemicError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    out_dir = Path(out)
    t_path = _write(out_dir, "trajectory.csv",
                    trajectory_csv([traj], cfg.region_names, [w]))
    s_path = _write(out_dir, "summary.csv", summary_csv(traj, cfg.region_names))
    impacts = traj.impacts()
    click.echo(f"scenario {w}: {len(traj.frames)} stages, "
               f"total impact {impacts.sum():.1f}")
    click.echo(f"wrote {t_path} and {s_path}")


@main.command()
@_with_options(common_options)
@click.option("--budget", type=float, default=None, help="Budget override.")
@click.option("--alpha", type=float, default=None, help="CVaR confidence level.")
@click.option("--lam", "--lambda", "lam", type=float, default=None,
              help="Mean-risk trade-off weight.")
@click.option("--policy", type=str, default=None)
@click.option("--time-limit", type=float, default=None)
@click.option("--gap", type=float, default=None)
@click.option("--node-limit", type=int, default=None)
def optimize(config, fixture, out, budget, alpha, lam, policy, time_limit, gap,
             node_limit):
    """Solve the allocation MILP and write allocation / trajectory reports."""
    cfg = _apply_overrides(_load(config, fixture), budget, alpha, lam, policy)
    tree = cfg.build_tree()
    pol = cfg.policy_for(tree.stages)
    try:
        model = build(cfg.params, cfg.initial, tree, pol, cfg.risk)
    except ModelError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    limits = cfg.solver
    res = solve_mip(model,
                    time_limit=time_limit or limits["time_limit"],
                    gap_limit=gap or limits["gap"],
                    node_limit=node_limit or limits["node_limit"])
    if res.incumbent is None:
        raise CliError("model infeasible" if res.status == "infeasible"
                       else "no incumbent within limits", EXIT_INFEASIBLE)
    solution = extract_solution(model, res.incumbent.values, tree)
    solution.gap = res.gap
    solution.status = res.status
    out_dir = Path(out)
    _write(out_dir, "allocation.csv", allocation_csv(solution, cfg.region_names))
    _write(out_dir, "trajectory.csv",
           trajectory_csv(solution.trajectories, cfg.region_names))
    summary = solution_summary(solution, tree, cfg.region_names, res.summary())
    _write(out_dir, "solution.json", json.dumps(summary, indent=2) + "\n")
    click.echo(json.dumps(summary, indent=2))
    if res.status == "limit":
        raise CliError(f"stopped at limit with gap {res.gap:.3e}; "
                       f"incumbent written to {out_dir}", EXIT_LIMIT)


@main.command(name="bounds")
@_with_options(common_options)
@click.option("--budget", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--lam", "--lambda", "lam", type=float, default=None)
@click.option("--policy", type=str, default=None)
@click.option("--scenarios", type=str, default="all",
              help="Comma list of scenario indices, or 'all'.")
@click.option("--time-limit", type=float, default=None,
              help="Per-subproblem time limit.")
@click.option("--full-time-limit", type=float, default=None,
              help="Time limit for the comparison full solve.")
@click.option("--workers", type=int, default=1)
def bounds_cmd(config, fixture, out, budget, alpha, lam, policy, scenarios,
               time_limit, full_time_limit, workers):
    """Scenario-decomposition lower/upper bounds, with a full-solve comparison."""
    cfg = _apply_overrides(_load(config, fixture), budget, alpha, lam, policy)
    tree = cfg.build_tree()
    pol = cfg.policy_for(tree.stages)
    model = build(cfg.params, cfg.initial, tree, pol, cfg.risk)
    chosen = None if scenarios == "all" else \
        [int(s) for s in scenarios.split(",") if s.strip()]
    full = solve_mip(model, time_limit=full_time_limit or cfg.solver["time_limit"],
                     gap_limit=cfg.solver["gap"])
    if full.status == "infeasible":
        raise CliError("model infeasible", EXIT_INFEASIBLE)
    sub = solve_all_subproblems(
        cfg.params, cfg.initial, tree, pol, cfg.risk, scenarios=chosen,
        base_model=model, start=full.start,
        time_limit=time_limit or cfg.solver["time_limit"], workers=workers)
    doc = bounds_report(sub, full)
    path = _write(Path(out), "bounds.json", json.dumps(doc, indent=2) + "\n")
    click.echo(json.dumps({k: doc[k] for k in
                           ("lower_bound", "upper_bound", "upper_bound_scenario")},
                          indent=2))
    click.echo(f"wrote {path}")
    if full.status == "limit":
        raise CliError(f"full solve stopped at limit (gap {full.gap:.3e})",
                       EXIT_LIMIT)


@main.command(name="export-mps")
@_with_options(common_options)
@click.option("--budget", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--lam", "--lambda", "lam", type=float, default=None)
@click.option("--policy", type=str, default=None)
@click.option("--formats", type=str, default="fixed,free,lp",
              help="Comma list of fixed|free|lp.")
def export_mps(config, fixture, out, budget, alpha, lam, policy, formats):
    """Export the deterministic equivalent (MPS fixed/free, CPLEX LP) + census."""
    cfg = _apply_overrides(_load(config, fixture), budget, alpha, lam, policy)
    tree = cfg.build_tree()
    pol = cfg.policy_for(tree.stages)
    model = build(cfg.params, cfg.initial, tree, pol, cfg.risk)
    out_dir = Path(out)
    written = []
    for fmt in [f.strip() for f in formats.split(",") if f.strip()]:
        if fmt == "fixed":
            written.append(_write(out_dir, "model_fixed.mps",
                                  write_mps(model, fixed=True)))
        elif fmt == "free":
            written.append(_write(out_dir, "model_free.mps",
                                  write_mps(model, fixed=False)))
        elif fmt == "lp":
            written.append(_write(out_dir, "model.lp", write_lp(model)))
        else:
            raise CliError(f"config error: unknown format '{fmt}'", EXIT_CONFIG)
    written.append(_write(out_dir, "census.json",
                          json.dumps(model.census(), indent=2) + "\n"))
    for p in written:
        click.echo(f"wrote {p}")


@main.command()
@_with_options(common_options)
@click.option("--observed", type=click.Path(exists=True), required=True,
              help="CSV with columns region,stage,value.")
@click.option("--policy", type=str, default=None)
@click.option("--path", "path_selector", type=str, default="medium")
def validate(config, fixture, out, observed, policy, path_selector):
    """Paired t-tests of simulated new infections against observed series."""
    cfg = _apply_overrides(_load(config, fixture), None, None, None, policy)
    tree = cfg.build_tree()
    w = _sigma2_path(cfg, tree, path_selector)
    pol = cfg.policy_for(tree.stages)
    traj = simulate(cfg.initial, tree.sigma2_path(w), pol, None, cfg.params)
    series: dict[str, dict[int, float]] = {}
    with open(observed, newline="") as fh:
        for row in csv.DictReader(fh):
            series.setdefault(row["region"], {})[int(row["stage"])] = \
                float(row["value"])
    results = {}
    for name, by_stage in sorted(series.items()):
        if name not in cfg.region_names:
            raise CliError(f"config error: observed region '{name}' not in config",
                           EXIT_CONFIG)
        r = cfg.region_names.index(name)
        stages = sorted(by_stage)
        predicted = [float(traj.frames[j].flows.new_I[r]) for j in stages]
        obs = [by_stage[j] for j in stages]
        t = paired_t_test(predicted, obs)
        results[name] = {"t_stat": t.t_stat, "p_value": t.p_value,
                         "mean_predicted": t.mean_predicted,
                         "mean_observed": t.mean_observed, "df": t.df}
        click.echo(f"{name:12s} t={t.t_stat:7.3f} p={t.p_value:6.3f} "
                   f"pred_mean={t.mean_predicted:10.1f} "
                   f"obs_mean={t.mean_observed:10.1f}")
    path = _write(Path(out), "validation.json", json.dumps(results, indent=2) + "\n")
    click.echo(f"wrote {path}")


@main.group()
def tree() -> None:
    """Scenario-tree utilities."""


@tree.command(name="inspect")
@click.option("--config", type=click.Path(), default=None)
@click.option("--fixture", type=str, default=None)
@click.option("--stages", type=int, default=None)
def tree_inspect(config, fixture, stages):
    """Print the scenario tree as JSON (nodes and scenarios)."""
    cfg = _load(config, fixture)
    click.echo(tree_to_json(cfg.build_tree(stages)))


if __name__ == "__main__":
    main()

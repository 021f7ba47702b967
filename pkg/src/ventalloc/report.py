"""Result reporting: validation statistics, CSV trajectories, JSON summaries.

All tabular output is schema-stable: fixed column order, rows sorted by
(scenario, stage, region). Commands never emit partial files on error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .epidemic import Trajectory
from .milp import Solution
from .stats import t_two_tailed_p
from .tree import ScenarioTree

TRAJECTORY_COLUMNS = ("scenario", "stage", "region", "S", "I", "X", "H", "C",
                      "R", "F", "O", "Cbar", "Ibar", "K", "U", "Imig",
                      "new_infections")


class DegenerateSeriesError(ValueError):
    """Paired series with zero difference variance but nonzero mean."""


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    p_value: float
    mean_predicted: float
    mean_observed: float
    df: int


def paired_t_test(predicted: Sequence[float], observed: Sequence[float]) -> TTestResult:
    """Two-tailed paired t-test between equal-length per-stage series.

    Identical series give (t = 0, p = 1). Zero variance of the differences
    with a nonzero mean difference has no finite t statistic and raises
    DegenerateSeriesError instead of fabricating one.
    """
    pred = np.asarray(predicted, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if pred.shape != obs.shape or pred.ndim != 1:
        raise ValueError("predicted and observed must be equal-length 1-D series")
    n = pred.size
    if n < 2:
        raise ValueError(f"need at least 2 pairs, got {n}")
    diff = pred - obs
    mean_d = float(diff.mean())
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        if mean_d == 0.0:
            return TTestResult(0.0, 1.0, float(pred.mean()), float(obs.mean()), n - 1)
        raise DegenerateSeriesError(
            f"differences are constant ({mean_d}) with zero variance; "
            f"the t statistic is unbounded")
    t = mean_d / (sd / math.sqrt(n))
    return TTestResult(t, t_two_tailed_p(t, n - 1),
                       float(pred.mean()), float(obs.mean()), n - 1)


def trajectory_rows(trajectories: Sequence[Trajectory], region_names: Sequence[str],
                    scenario_labels: Sequence | None = None) -> list[list]:
    labels = scenario_labels or list(range(len(trajectories)))
    rows = []
    for w, traj in enumerate(trajectories):
        for frame in traj.frames:
            s, fl = frame.state, frame.flows
            for r, name in enumerate(region_names):
                rows.append([labels[w], frame.stage, name,
                             s.S[r], s.I[r], s.X[r], s.H[r], s.C[r], s.R[r],
                             s.F[r], fl.O[r], fl.Cbar[r], fl.Ibar[r], fl.K[r],
                             s.U[r], fl.Imig[r], fl.new_I[r]])
    return rows


def trajectory_csv(trajectories: Sequence[Trajectory], region_names: Sequence[str],
                   scenario_labels: Sequence | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    writer.writerows(trajectory_rows(trajectories, region_names, scenario_labels))
    return buf.getvalue()


def summary_series(traj: Trajectory, region_names: Sequence[str]) -> list[list]:
    """Per-stage series per region plus an 'all' aggregate.

    Columns: stage, region, new_infections, new_deaths, hospitalized, icu,
    icu_capacity.
    """
    rows = []
    horizon = len(traj.frames) - 1
    for j, frame in enumerate(traj.frames):
        prev_f = traj.frames[j - 1].state.F if j else np.zeros_like(frame.state.F)
        new_deaths = frame.state.F - prev_f
        for r, name in enumerate(region_names):
            rows.append([j, name, frame.flows.new_I[r], new_deaths[r],
                         frame.state.H[r], frame.state.C[r], frame.state.U[r]])
        rows.append([j, "all", float(frame.flows.new_I.sum()),
                     float(new_deaths.sum()), float(frame.state.H.sum()),
                     float(frame.state.C.sum()), float(frame.state.U.sum())])
    assert horizon == traj.frames[-1].stage
    return rows


def summary_csv(traj: Trajectory, region_names: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stage", "region", "new_infections", "new_deaths",
                     "hospitalized", "icu", "icu_capacity"])
    writer.writerows(summary_series(traj, region_names))
    return buf.getvalue()


def allocation_csv(solution: Solution, region_names: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "stage", "region", "ventilators"])
    alloc = solution.allocations_by_scenario
    for w in range(alloc.shape[0]):
        for j in range(alloc.shape[1]):
            for r, name in enumerate(region_names):
                writer.writerow([w, j, name, int(round(alloc[w, j, r]))])
    return buf.getvalue()


def solution_summary(solution: Solution, tree: ScenarioTree,
                     region_names: Sequence[str], result_summary: dict | None = None,
                     ) -> dict:
    by_node = {}
    for (stage, node), values in sorted(solution.allocations_by_node.items()):
        by_node[f"stage {stage} / node {node}"] = {
            name: int(values[r]) for r, name in enumerate(region_names)}
    doc = {
        "objective": solution.objective,
        "expected_impact": solution.expected_impact,
        "expected_risk": solution.expected_risk,
        "risk": {"alpha": solution.risk.alpha, "lambda": solution.risk.lambda_risk},
        "total_ventilators_by_scenario": [
            int(round(float(solution.allocations_by_scenario[w].sum())))
            for w in range(len(tree.scenarios))],
        "allocations_by_node": by_node,
        "worst_violation": solution.worst_violation,
    }
    if result_summary:
        doc["solver"] = result_summary
    return doc

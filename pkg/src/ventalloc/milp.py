"""Deterministic-equivalent MILP for the mean-CVaR allocation model.

One block of variables and constraints per scenario — compartment states,
capacity-limited admission flows with big-M linearized minima, cumulative
ventilator capacity, a per-scenario budget row and the stage-wise risk
pair (eta, z) — plus non-anticipativity equalities over scenario bundles.

Decision timing: the allocation y_j and the value-at-risk eta_j for stage j
are measurable on the stage-(j-1) node (chosen before the stage-j branch is
observed); the excess z_j is measurable on the stage-j node. That alignment
makes the risk term decompose into genuine per-node conditional CVaRs and
reproduces the published behaviour (first-stage allocations identical
across scenarios).

The admission overflows Ibar/K are pinned by the identities
Ibar = lambda3*I - O and K = lambda6*H - Cbar, so at every integer-feasible
point the model's trajectory coincides with the simulator's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .epidemic import (CompartmentState, EpidemicParams, Frame,
                       InterventionPolicy, StageFlows, Trajectory,
                       admission_flows, migration_inflow, transmission_schedule)
from .stats import cvar_discrete
from .tree import ScenarioTree

SENSE_LE, SENSE_EQ, SENSE_GE = "<=", "=", ">="
STATE_FIELDS = ("S", "I", "X", "H", "C", "R", "F")
FLOW_FIELDS = ("O", "Cb", "Ib", "K")


class ModelError(ValueError):
    """Inconsistent model input."""


@dataclass(frozen=True)
class RiskConfig:
    """CVaR confidence level alpha and mean-risk weight lambda."""

    alpha: float = 0.0
    lambda_risk: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ModelError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.lambda_risk < 0.0:
            raise ModelError(f"lambda must be nonnegative, got {self.lambda_risk}")


@dataclass
class Variable:
    name: str
    kind: str            # continuous | integer | binary
    lower: float
    upper: float


@dataclass
class Constraint:
    name: str
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float


@dataclass
class ModelMeta:
    """Everything extraction and reporting need to interpret an assignment."""

    tree: ScenarioTree
    params: EpidemicParams
    policy: InterventionPolicy
    risk: RiskConfig
    initial: CompartmentState
    sched: np.ndarray                    # sigma1 per (stage, region)
    damp: np.ndarray                     # damping per (stage, region)
    sv: dict = field(default_factory=dict)    # (field, j, r, w) -> var index
    fv: dict = field(default_factory=dict)    # (field, j, r, w)
    bv: dict = field(default_factory=dict)    # ("dO"|"dC", j, r, w)
    uv: dict = field(default_factory=dict)    # (j, r, w)
    yv: dict = field(default_factory=dict)    # (j, r, w), j in 1..horizon-1
    ev: dict = field(default_factory=dict)    # (j, w)
    zv: dict = field(default_factory=dict)    # (j, w)
    var_census: dict = field(default_factory=dict)
    con_census: dict = field(default_factory=dict)


class MilpModel:
    """Solver-agnostic variables / constraints / minimize objective."""

    def __init__(self, meta: ModelMeta | None = None):
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.meta = meta

    def add_var(self, name: str, kind: str = "continuous",
                lower: float = 0.0, upper: float = float("inf")) -> int:
        self.variables.append(Variable(name, kind, lower, upper))
        return len(self.variables) - 1

    def add_constraint(self, name: str, terms, sense: str, rhs: float) -> int:
        merged: dict[int, float] = {}
        for idx, coef in terms:
            if idx < 0 or idx >= len(self.variables):
                raise ModelError(f"constraint {name} references unknown variable {idx}")
            if coef != 0.0:
                merged[idx] = merged.get(idx, 0.0) + coef
        self.constraints.append(
            Constraint(name, tuple(sorted(merged.items())), sense, rhs))
        return len(self.constraints) - 1

    def set_objective_term(self, idx: int, coef: float) -> None:
        if coef != 0.0:
            self.objective[idx] = self.objective.get(idx, 0.0) + coef

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_cons(self) -> int:
        return len(self.constraints)

    def integer_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables)
                if v.kind in ("integer", "binary")]

    def objective_value(self, values: np.ndarray) -> float:
        return float(sum(coef * values[idx] for idx, coef in self.objective.items()))

    def constraint_violation(self, values: np.ndarray) -> tuple[float, str]:
        """Worst violation over rows and variable bounds, with its name."""
        worst, name = 0.0, ""
        for v, var in zip(values, self.variables):
            lo_gap = var.lower - v
            hi_gap = v - var.upper
            gap = max(lo_gap, hi_gap)
            if gap > worst:
                worst, name = gap, f"bound:{var.name}"
        for con in self.constraints:
            lhs = sum(coef * values[idx] for idx, coef in con.terms)
            if con.sense == SENSE_LE:
                gap = lhs - con.rhs
            elif con.sense == SENSE_GE:
                gap = con.rhs - lhs
            else:
                gap = abs(lhs - con.rhs)
            if gap > worst:
                worst, name = gap, con.name
        return worst, name

    def census(self) -> dict:
        """Variable/constraint counts by family (the model census report)."""
        meta = self.meta
        kinds: dict[str, int] = {}
        for v in self.variables:
            kinds[v.kind] = kinds.get(v.kind, 0) + 1
        doc = {
            "variables": {"total": self.n_vars, "by_kind": kinds},
            "constraints": {"total": self.n_cons},
        }
        if meta is not None:
            doc["variables"]["by_family"] = dict(meta.var_census)
            doc["constraints"]["by_family"] = dict(meta.con_census)
        return doc


def linearize_min(model: MilpModel, target: int,
                  a: tuple[Sequence[tuple[int, float]], float],
                  b: tuple[Sequence[tuple[int, float]], float],
                  big_m: float, tag: str) -> list[int]:
    """Emit target = min(a, b) via one binary and four rows.

    a and b are (terms, constant) linear expressions; big_m must dominate
    the largest attainable |a - b|. At any integer point the four rows pin
    target to the exact minimum.
    """
    if not big_m > 0.0:
        raise ModelError(f"big-M for {tag} must be positive, got {big_m}")
    a_terms, a_const = a
    b_terms, b_const = b
    delta = model.add_var(f"d{tag}", "binary", 0.0, 1.0)
    rows = [
        model.add_constraint(f"min1_{tag}",
                             [(target, 1.0)] + [(i, -c) for i, c in a_terms],
                             SENSE_LE, a_const),
        model.add_constraint(f"min2_{tag}",
                             [(target, 1.0)] + [(i, -c) for i, c in b_terms],
                             SENSE_LE, b_const),
        model.add_constraint(f"min3_{tag}",
                             [(target, 1.0)] + [(i, -c) for i, c in a_terms]
                             + [(delta, big_m)],
                             SENSE_GE, a_const),
        model.add_constraint(f"min4_{tag}",
                             [(target, 1.0)] + [(i, -c) for i, c in b_terms]
                             + [(delta, -big_m)],
                             SENSE_GE, b_const - big_m),
    ]
    return rows


def _hospital_big_m(params: EpidemicParams, initial: CompartmentState,
                    horizon: int) -> float:
    # Inflow-only migration grows the head count, so bound the pool by the
    # total initial population compounded by the total pairwise migration
    # mass per stage. Also covers the capacity side T - H <= T.
    pool = float(initial.population().sum())
    rho = float(params.migration.sum())
    pool *= (1.0 + rho) ** max(horizon, 0)
    m = max(params.lambda3 * pool, float(params.hospital_capacity.max()))
    if not m > 0.0:
        raise ModelError("degenerate population: hospital big-M is nonpositive")
    return m


def _icu_big_m(params: EpidemicParams, r: int) -> float:
    m = (params.lambda6 * float(params.hospital_capacity[r])
         + float(params.icu_init[r]) + params.max_ventilators)
    if not m > 0.0:
        raise ModelError("degenerate capacities: ICU big-M is nonpositive")
    return m


def build(params: EpidemicParams, initial: CompartmentState, tree: ScenarioTree,
          policy: InterventionPolicy, risk: RiskConfig) -> MilpModel:
    """Assemble the deterministic equivalent over the scenario tree."""
    n = params.n_regions
    if initial.n_regions != n:
        raise ModelError("initial state region count does not match parameters")
    horizon = tree.horizon
    if policy.stages < tree.stages:
        raise ModelError(
            f"policy covers {policy.stages} stages, tree needs {tree.stages}")
    if policy.n_regions != n:
        raise ModelError("policy region count does not match parameters")

    sched = transmission_schedule(params.sigma1_seed, policy,
                                  params.intervention_multipliers, horizon)
    damp = np.empty((horizon + 1, n))
    for j in range(horizon + 1):
        damp[j] = [params.migration_damping[name] for name in policy.at(j)]

    meta = ModelMeta(tree=tree, params=params, policy=policy, risk=risk,
                     initial=initial, sched=sched, damp=damp)
    model = MilpModel(meta)
    n_scen = len(tree.scenarios)
    y_top = params.max_ventilators
    m_hosp = _hospital_big_m(params, initial, horizon)
    p = params

    init_values = {"S": initial.S, "I": initial.I, "X": initial.X,
                   "H": initial.H, "C": initial.C, "R": initial.R, "F": initial.F}

    for w in range(n_scen):
        sig2 = tree.sigma2_path(w)
        for f in STATE_FIELDS:
            for j in range(horizon + 1):
                for r in range(n):
                    if j == 0:
                        v0 = float(init_values[f][r])
                        idx = model.add_var(f"{f}_{j}_{r}_{w}", "continuous", v0, v0)
                    else:
                        idx = model.add_var(f"{f}_{j}_{r}_{w}")
                    meta.sv[(f, j, r, w)] = idx
        for f in FLOW_FIELDS:
            for j in range(horizon):
                for r in range(n):
                    meta.fv[(f, j, r, w)] = model.add_var(f"{f}_{j}_{r}_{w}")
        for j in range(horizon + 1):
            for r in range(n):
                meta.uv[(j, r, w)] = model.add_var(
                    f"U_{j}_{r}_{w}", "continuous",
                    float(p.icu_init[r]), float(p.icu_init[r]) + y_top)
        for j in range(1, horizon + 1):
            for r in range(n):
                meta.yv[(j, r, w)] = model.add_var(
                    f"y_{j}_{r}_{w}", "integer", 0.0, float(y_top))
        for j in range(horizon + 1):
            meta.ev[(j, w)] = model.add_var(f"eta_{j}_{w}", "continuous",
                                            float("-inf"), float("inf"))
            meta.zv[(j, w)] = model.add_var(f"z_{j}_{w}")

        sv, fv, uv, yv = meta.sv, meta.fv, meta.uv, meta.yv

        for j in range(horizon):
            s1 = sched[j + 1]
            q = sig2[j + 1] / (1.0 - sig2[j + 1])
            for r in range(n):
                tag = f"{j}_{r}_{w}"
                I_j = sv[("I", j, r, w)]
                X_j = sv[("X", j, r, w)]
                H_j = sv[("H", j, r, w)]
                C_j = sv[("C", j, r, w)]
                O_j = fv[("O", j, r, w)]
                Cb_j = fv[("Cb", j, r, w)]
                Ib_j = fv[("Ib", j, r, w)]
                K_j = fv[("K", j, r, w)]
                model.add_constraint(
                    f"dynS_{tag}",
                    [(sv[("S", j + 1, r, w)], 1.0), (sv[("S", j, r, w)], -1.0),
                     (I_j, (1.0 + q) * s1[r]), (X_j, (1.0 + q) * s1[r])],
                    SENSE_EQ, 0.0)
                i_terms = [(sv[("I", j + 1, r, w)], 1.0),
                           (I_j, -(1.0 - p.lambda1) - s1[r]),
                           (X_j, -s1[r]),
                           (Ib_j, p.lambda2), (O_j, 1.0)]
                for rp in range(n):
                    rate = damp[j, r] * p.migration[rp, r]
                    if rp != r and rate != 0.0:
                        i_terms.append((sv[("I", j, rp, w)], -rate))
                model.add_constraint(f"dynI_{tag}", i_terms, SENSE_EQ, 0.0)
                model.add_constraint(
                    f"dynX_{tag}",
                    [(sv[("X", j + 1, r, w)], 1.0),
                     (X_j, -(1.0 - p.lambda9) - q * s1[r]),
                     (I_j, -q * s1[r])],
                    SENSE_EQ, 0.0)
                model.add_constraint(
                    f"dynH_{tag}",
                    [(sv[("H", j + 1, r, w)], 1.0), (H_j, -(1.0 - p.lambda4)),
                     (O_j, -1.0), (K_j, p.lambda5), (Cb_j, 1.0)],
                    SENSE_EQ, 0.0)
                model.add_constraint(
                    f"dynC_{tag}",
                    [(sv[("C", j + 1, r, w)], 1.0),
                     (C_j, -(1.0 - p.lambda7 - p.lambda8)), (Cb_j, -1.0)],
                    SENSE_EQ, 0.0)
                model.add_constraint(
                    f"dynR_{tag}",
                    [(sv[("R", j + 1, r, w)], 1.0), (sv[("R", j, r, w)], -1.0),
                     (I_j, -p.lambda1), (X_j, -p.lambda9),
                     (H_j, -p.lambda4), (C_j, -p.lambda7)],
                    SENSE_EQ, 0.0)
                model.add_constraint(
                    f"dynF_{tag}",
                    [(sv[("F", j + 1, r, w)], 1.0), (sv[("F", j, r, w)], -1.0),
                     (Ib_j, -p.lambda2), (K_j, -p.lambda5), (C_j, -p.lambda8)],
                    SENSE_EQ, 0.0)
                linearize_min(model, O_j,
                              ([(I_j, p.lambda3)], 0.0),
                              ([(H_j, -1.0)], float(p.hospital_capacity[r])),
                              m_hosp, f"O_{tag}")
                linearize_min(model, Cb_j,
                              ([(H_j, p.lambda6)], 0.0),
                              ([(uv[(j, r, w)], 1.0), (C_j, -1.0)], 0.0),
                              _icu_big_m(p, r), f"C_{tag}")
                model.add_constraint(
                    f"pinIb_{tag}",
                    [(Ib_j, 1.0), (I_j, -p.lambda3), (O_j, 1.0)], SENSE_EQ, 0.0)
                model.add_constraint(
                    f"pinK_{tag}",
                    [(K_j, 1.0), (H_j, -p.lambda6), (Cb_j, 1.0)], SENSE_EQ, 0.0)
                model.add_constraint(
                    f"ovfIb_{tag}",
                    [(Ib_j, 1.0), (I_j, -p.lambda3), (H_j, -1.0)],
                    SENSE_GE, -float(p.hospital_capacity[r]))
                model.add_constraint(
                    f"ovfK_{tag}",
                    [(K_j, 1.0), (H_j, -p.lambda6), (uv[(j, r, w)], 1.0),
                     (C_j, -1.0)],
                    SENSE_GE, 0.0)

        for j in range(horizon + 1):
            for r in range(n):
                terms = [(uv[(j, r, w)], 1.0)]
                terms += [(yv[(l, r, w)], -1.0) for l in range(1, j + 1)]
                model.add_constraint(f"defU_{j}_{r}_{w}", terms, SENSE_EQ,
                                     float(p.icu_init[r]))

        budget_terms = [(idx, p.vent_cost) for (jj, rr, ww), idx in yv.items()
                        if ww == w]
        model.add_constraint(f"budget_{w}", budget_terms, SENSE_LE, p.budget)

        for j in range(horizon + 1):
            terms = [(meta.zv[(j, w)], 1.0), (meta.ev[(j, w)], 1.0)]
            terms += [(sv[("I", j, r, w)], -1.0) for r in range(n)]
            terms += [(sv[("F", j, r, w)], -1.0) for r in range(n)]
            model.add_constraint(f"cvar_{j}_{w}", terms, SENSE_GE, 0.0)

    _nonanticipativity(model, meta)
    _objective(model, meta)
    _record_census(model, meta)
    return model


def _nonanticipativity(model: MilpModel, meta: ModelMeta) -> None:
    """Bundle equalities: y_{t+1}, eta_{t+1} on each stage-t node; z_t literal.

    The root additionally ties eta_0 and z_0 so the stage-0 risk pair is a
    single decision.
    """
    tree = meta.tree
    horizon = tree.horizon
    for node in tree.nodes:
        bundle = tree.bundles[node.id]
        if len(bundle) <= 1:
            continue
        rep = bundle[0]
        t = node.stage
        for w in bundle[1:]:
            model.add_constraint(
                f"naZ_{t}_n{node.id}_w{w}",
                [(meta.zv[(t, w)], 1.0), (meta.zv[(t, rep)], -1.0)],
                SENSE_EQ, 0.0)
            if t + 1 <= horizon:
                model.add_constraint(
                    f"naE_{t + 1}_n{node.id}_w{w}",
                    [(meta.ev[(t + 1, w)], 1.0), (meta.ev[(t + 1, rep)], -1.0)],
                    SENSE_EQ, 0.0)
            if node.id == 0:
                model.add_constraint(
                    f"naE_0_n0_w{w}",
                    [(meta.ev[(0, w)], 1.0), (meta.ev[(0, rep)], -1.0)],
                    SENSE_EQ, 0.0)
            if 1 <= t + 1 <= horizon:
                for r in range(meta.params.n_regions):
                    model.add_constraint(
                        f"naY_{t + 1}_{r}_n{node.id}_w{w}",
                        [(meta.yv[(t + 1, r, w)], 1.0),
                         (meta.yv[(t + 1, r, rep)], -1.0)],
                        SENSE_EQ, 0.0)


def _objective(model: MilpModel, meta: ModelMeta) -> None:
    tree, risk = meta.tree, meta.risk
    n = meta.params.n_regions
    lam, alpha = risk.lambda_risk, risk.alpha
    for w, scen in enumerate(tree.scenarios):
        pw = scen.probability
        for j in range(tree.horizon + 1):
            for r in range(n):
                model.set_objective_term(meta.sv[("I", j, r, w)], pw)
                model.set_objective_term(meta.sv[("F", j, r, w)], pw)
            if lam > 0.0:
                model.set_objective_term(meta.ev[(j, w)], pw * lam)
                model.set_objective_term(meta.zv[(j, w)], pw * lam / (1.0 - alpha))


def cvar_layer(model: MilpModel, tree: ScenarioTree, risk: RiskConfig) -> None:
    """Re-weight the risk terms of an already-built model.

    The excess rows z_j >= impact_j - eta_j and the non-anticipativity ties
    are emitted by build(); this adds (or replaces) the objective weights
    p * lambda * (eta + z / (1 - alpha)).
    """
    meta = model.meta
    if meta is None:
        raise ModelError("cvar_layer needs a model built with metadata")
    lam, alpha = risk.lambda_risk, risk.alpha
    for w, scen in enumerate(tree.scenarios):
        for j in range(tree.horizon + 1):
            model.objective.pop(meta.ev[(j, w)], None)
            model.objective.pop(meta.zv[(j, w)], None)
            if lam > 0.0:
                model.set_objective_term(meta.ev[(j, w)], scen.probability * lam)
                model.set_objective_term(meta.zv[(j, w)],
                                         scen.probability * lam / (1.0 - alpha))
    meta.risk = risk


def _record_census(model: MilpModel, meta: ModelMeta) -> None:
    tree = meta.tree
    n = meta.params.n_regions
    jbar = tree.horizon
    n_scen = len(tree.scenarios)
    na_rows = sum(1 for c in model.constraints if c.name.startswith("na"))
    meta.var_census.update({
        "state": 7 * (jbar + 1) * n * n_scen,
        "flow": 4 * jbar * n * n_scen,
        "linearization_binary": 2 * jbar * n * n_scen,
        "capacity": (jbar + 1) * n * n_scen,
        "allocation": jbar * n * n_scen,
        "risk": 2 * (jbar + 1) * n_scen,
    })
    meta.con_census.update({
        "dynamics": 7 * jbar * n * n_scen,
        "linearization": 8 * jbar * n * n_scen,
        "overflow_pin": 2 * jbar * n * n_scen,
        "overflow_floor": 2 * jbar * n * n_scen,
        "capacity_def": (jbar + 1) * n * n_scen,
        "budget": n_scen,
        "cvar": (jbar + 1) * n_scen,
        "nonanticipativity": na_rows,
    })
    assert sum(meta.var_census.values()) == model.n_vars
    assert sum(meta.con_census.values()) == model.n_cons


def allocation_bounds(model: MilpModel, alloc_by_scenario: np.ndarray,
                      tol: float = 0.0) -> MilpModel:
    """Copy of the model with every y fixed to the given plan.

    alloc_by_scenario has shape (scenarios, stages, regions); only stages
    1..horizon-1 may be nonzero. Used by the round-trip oracle tests.
    """
    meta = model.meta
    clone = MilpModel(meta)
    clone.variables = [Variable(v.name, v.kind, v.lower, v.upper)
                       for v in model.variables]
    clone.constraints = model.constraints
    clone.objective = dict(model.objective)
    for (j, r, w), idx in meta.yv.items():
        val = float(alloc_by_scenario[w, j, r])
        clone.variables[idx].lower = val - tol
        clone.variables[idx].upper = val + tol
    return clone


@dataclass
class Solution:
    """Optimal allocations, per-scenario trajectories and the objective split."""

    objective: float
    expected_impact: float
    expected_risk: float
    risk: RiskConfig
    allocations_by_scenario: np.ndarray       # (scenarios, stages, regions)
    allocations_by_node: dict                 # (stage, node id) -> (regions,) ints
    trajectories: list[Trajectory]
    probabilities: np.ndarray
    worst_violation: float
    gap: float = 0.0
    status: str = "optimal"

    def total_ventilators(self, scenario: int = 0) -> int:
        return int(round(float(self.allocations_by_scenario[scenario].sum())))


def stage_impacts(model_or_meta, values: np.ndarray | None = None,
                  trajectories: Sequence[Trajectory] | None = None) -> np.ndarray:
    """Impact (sum_r I + F) per (stage, scenario), from LP values or frames."""
    meta = model_or_meta.meta if isinstance(model_or_meta, MilpModel) else model_or_meta
    tree = meta.tree
    n = meta.params.n_regions
    out = np.zeros((tree.horizon + 1, len(tree.scenarios)))
    if trajectories is not None:
        for w, traj in enumerate(trajectories):
            out[:, w] = traj.impacts()
        return out
    for w in range(len(tree.scenarios)):
        for j in range(tree.horizon + 1):
            out[j, w] = sum(values[meta.sv[("I", j, r, w)]]
                            + values[meta.sv[("F", j, r, w)]] for r in range(n))
    return out


def expected_conditional_cvar(tree: ScenarioTree, impacts: np.ndarray,
                              alpha: float) -> float:
    """Risk term by direct sorted-tail evaluation, no LP.

    For each stage j the conditioning nodes are the stage-(j-1) nodes (the
    root for j = 0 and j = 1); the conditional distribution of the stage-j
    impact over a node's bundle is evaluated exactly and weighted by the
    node probability.
    """
    probs = np.array([s.probability for s in tree.scenarios])
    total = 0.0
    for j in range(tree.horizon + 1):
        cond_stage = max(j - 1, 0)
        for node_id in tree.nodes_at_stage(cond_stage):
            bundle = tree.bundles[node_id]
            p_node = probs[list(bundle)].sum()
            if p_node <= 0.0:
                continue
            weights = probs[list(bundle)] / p_node
            _, cvar = cvar_discrete(impacts[j, list(bundle)], weights, alpha)
            total += p_node * cvar
    return float(total)


def extract_solution(model: MilpModel, values: np.ndarray,
                     tree: ScenarioTree | None = None,
                     feas_tol: float = 1e-6) -> Solution:
    """Interpret a feasible assignment: allocations, trajectories, objective split.

    Expected risk is always the post-hoc conditional-CVaR evaluation of the
    realized impacts (identical to the LP's risk terms at any optimum, and
    well-defined for lambda = 0 where the LP leaves eta/z arbitrary).
    """
    meta = model.meta
    tree = tree or meta.tree
    worst, name = model.constraint_violation(values)
    if worst > feas_tol:
        raise ModelError(
            f"assignment infeasible: worst violation {worst:.3e} at {name}")
    n = meta.params.n_regions
    horizon = tree.horizon
    n_scen = len(tree.scenarios)

    alloc = np.zeros((n_scen, horizon + 1, n))
    for (j, r, w), idx in meta.yv.items():
        alloc[w, j, r] = round(float(values[idx]))
    alloc_by_node: dict = {}
    for j in range(1, horizon + 1):
        for node_id in tree.nodes_at_stage(j - 1):
            rep = tree.bundles[node_id][0]
            alloc_by_node[(j, node_id)] = alloc[rep, j].astype(int)

    trajectories = []
    for w in range(n_scen):
        frames = []
        for j in range(horizon + 1):
            state = CompartmentState(
                *(np.array([values[meta.sv[(f, j, r, w)]] for r in range(n)])
                  for f in STATE_FIELDS),
                U=np.array([values[meta.uv[(j, r, w)]] for r in range(n)]))
            if j < horizon:
                flows_arr = {f: np.array([values[meta.fv[(f, j, r, w)]]
                                          for r in range(n)])
                             for f in FLOW_FIELDS}
                O, Cb, Ib, K = (flows_arr[f] for f in FLOW_FIELDS)
            else:
                O, Cb, Ib, K = admission_flows(state, meta.params)
            imig = migration_inflow(state.I, meta.params.migration, meta.damp[j])
            if j == 0:
                new_I = np.zeros(n)
                new_X = np.zeros(n)
            else:
                prev = frames[j - 1].state
                sig2 = tree.sigma2_path(w)[j]
                s1 = meta.sched[j]
                pressure = s1 * (prev.I + prev.X)
                new_I = pressure
                new_X = pressure * sig2 / (1.0 - sig2)
            frames.append(Frame(j, state, StageFlows(O, Cb, Ib, K, imig,
                                                     new_I, new_X)))
        trajectories.append(Trajectory(frames, meta.params))

    probs = np.array([s.probability for s in tree.scenarios])
    impacts = stage_impacts(meta, trajectories=trajectories)
    expected_impact = float(impacts.sum(axis=0) @ probs)
    expected_risk = expected_conditional_cvar(tree, impacts, meta.risk.alpha)
    objective = expected_impact + meta.risk.lambda_risk * expected_risk
    return Solution(objective=objective, expected_impact=expected_impact,
                    expected_risk=expected_risk, risk=meta.risk,
                    allocations_by_scenario=alloc,
                    allocations_by_node=alloc_by_node,
                    trajectories=trajectories, probabilities=probs,
                    worst_violation=worst)

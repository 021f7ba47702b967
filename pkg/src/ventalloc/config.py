"""Run configuration: JSON ingestion, validation, defaults, bundled fixtures.

One JSON document holds everything a run needs — regions (population,
initial census, capacities, per-region transmission seeds and intervention
multipliers), the migration matrix (missing cells are zero), biweekly
transition rates, the scenario-tree recipe, the intervention policy, the
risk preferences and solver limits. load_config applies documented
defaults and re-emits a resolved document that loads back to an identical
run.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .epidemic import (DEFAULT_MIGRATION_DAMPING, INTERVENTIONS,
                       CompartmentState, EpidemicParams, InterventionPolicy)
from .milp import RiskConfig
from .tree import NodeDistribution, ScenarioTree, build_tree, table1_std_policy

# Biweekly rate defaults: midpoints of the published ranges where a range
# is given, point values otherwise.
DEFAULT_RATES = {
    "lambda1": 0.74, "lambda2": 0.40, "lambda3": 0.26, "lambda4": 0.88,
    "lambda5": 0.40, "lambda6": 0.12, "lambda7": 0.643, "lambda8": 0.357,
    "lambda9": 1.0,
}
DEFAULT_ICU_FRACTION = 0.4
DEFAULT_VENT_COST = 5000.0
DEFAULT_TREE = {
    "stages": 4,
    "branch_probs": [0.3, 0.4, 0.3],
    "root_mean": 0.26,
    "root_std": 0.05,
    "prop_min": 0.15,
    "prop_max": 0.40,
}
DEFAULT_SOLVER = {"time_limit": 300.0, "gap": 1e-9, "node_limit": 1_000_000}


class ConfigError(ValueError):
    """Schema or invariant violation; message carries a JSON-pointer path."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


def _need(doc: dict, key: str, pointer: str, kind=None):
    if key not in doc:
        raise ConfigError(f"{pointer}/{key}", "required field missing")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{pointer}/{key}",
                          f"expected {getattr(kind, '__name__', kind)}, "
                          f"got {type(value).__name__}")
    return value


def _number(doc: dict, key: str, pointer: str, default=None, lo=None, hi=None):
    if key not in doc:
        if default is None:
            raise ConfigError(f"{pointer}/{key}", "required field missing")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{pointer}/{key}", "expected a number")
    if lo is not None and value < lo:
        raise ConfigError(f"{pointer}/{key}", f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{pointer}/{key}", f"must be <= {hi}, got {value}")
    return float(value)


@dataclass(frozen=True)
class RegionSpec:
    name: str
    population: float
    initial_infections: float
    initial_asymptomatic: float
    initial_hospitalized: float
    initial_icu: float
    initial_recovered: float
    initial_deceased: float
    hospital_capacity: float
    icu_capacity: float
    transmission_stage1: float
    transmission_stage2: float
    multipliers: dict[str, float]


@dataclass
class RunConfig:
    name: str
    regions: list[RegionSpec]
    params: EpidemicParams
    initial: CompartmentState
    tree_spec: dict
    policy: InterventionPolicy
    policy_spec: dict
    risk: RiskConfig
    budget_levels: list[float]
    solver: dict
    resolved: dict

    @property
    def region_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.regions)

    def build_tree(self, stages: int | None = None) -> ScenarioTree:
        spec = self.tree_spec
        stages = stages or spec["stages"]
        root = NodeDistribution(spec["root_mean"], spec["root_std"])
        return build_tree(stages, root, spec["std_policy"], spec["branch_probs"],
                          (spec["prop_min"], spec["prop_max"]))

    def policy_for(self, stages: int) -> InterventionPolicy:
        if self.policy.stages >= stages:
            return self.policy
        # uniform policies extend to any horizon
        if self.policy_spec.get("kind") == "uniform":
            return InterventionPolicy.uniform(
                self.policy_spec["intervention"], stages, len(self.regions))
        raise ConfigError("/policy", f"policy covers {self.policy.stages} stages, "
                                     f"run needs {stages}")


def _parse_region(doc: Any, i: int) -> RegionSpec:
    ptr = f"/regions/{i}"
    if not isinstance(doc, dict):
        raise ConfigError(ptr, "expected an object")
    name = _need(doc, "name", ptr, str)
    population = _number(doc, "population", ptr, lo=0.0)
    mult_doc = doc.get("multipliers", {})
    if not isinstance(mult_doc, dict):
        raise ConfigError(f"{ptr}/multipliers", "expected an object")
    multipliers = {"none": _number(mult_doc, "none", f"{ptr}/multipliers",
                                   default=1.0, lo=0.0),
                   "mask_distance": _number(mult_doc, "mask_distance",
                                            f"{ptr}/multipliers", default=0.4, lo=0.0),
                   "lockdown": _number(mult_doc, "lockdown", f"{ptr}/multipliers",
                                       default=0.6, lo=0.0)}
    spec = RegionSpec(
        name=name,
        population=population,
        initial_infections=_number(doc, "initial_infections", ptr, lo=0.0),
        initial_asymptomatic=_number(doc, "initial_asymptomatic", ptr,
                                     default=0.0, lo=0.0),
        initial_hospitalized=_number(doc, "initial_hospitalized", ptr,
                                     default=0.0, lo=0.0),
        initial_icu=_number(doc, "initial_icu", ptr, default=0.0, lo=0.0),
        initial_recovered=_number(doc, "initial_recovered", ptr, default=0.0, lo=0.0),
        initial_deceased=_number(doc, "initial_deceased", ptr, default=0.0, lo=0.0),
        hospital_capacity=_number(doc, "hospital_capacity", ptr, lo=0.0),
        icu_capacity=_number(doc, "icu_capacity", ptr, lo=0.0),
        transmission_stage1=_number(doc, "transmission_stage1", ptr, lo=0.0),
        transmission_stage2=_number(doc, "transmission_stage2", ptr, lo=0.0),
        multipliers=multipliers,
    )
    initial_sum = (spec.initial_infections + spec.initial_asymptomatic
                   + spec.initial_hospitalized + spec.initial_icu
                   + spec.initial_recovered + spec.initial_deceased)
    if initial_sum > spec.population + 1e-9:
        raise ConfigError(ptr, f"initial compartments sum to {initial_sum}, "
                               f"exceeding population {spec.population}")
    return spec


def _parse_policy(doc: dict, n_regions: int, stages: int) -> tuple[InterventionPolicy, dict]:
    spec = doc.get("policy", {"kind": "uniform", "intervention": "lockdown"})
    if not isinstance(spec, dict):
        raise ConfigError("/policy", "expected an object")
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        name = spec.get("intervention", "lockdown")
        if name not in INTERVENTIONS:
            raise ConfigError("/policy/intervention", f"unknown intervention '{name}'")
        return InterventionPolicy.uniform(name, stages, n_regions), \
            {"kind": "uniform", "intervention": name}
    if kind == "per_stage":
        names = spec.get("stages")
        if not isinstance(names, list) or not names:
            raise ConfigError("/policy/stages", "expected a non-empty list")
        for k, nm in enumerate(names):
            if nm not in INTERVENTIONS:
                raise ConfigError(f"/policy/stages/{k}", f"unknown intervention '{nm}'")
        if len(names) < stages:
            names = list(names) + [names[-1]] * (stages - len(names))
        return InterventionPolicy.per_stage(names, n_regions), \
            {"kind": "per_stage", "stages": list(names)}
    raise ConfigError("/policy/kind", f"unknown policy kind '{kind}'")


def load_config(source: str | Path | dict) -> RunConfig:
    """Parse, validate and resolve a run configuration.

    Accepts a path or an already-decoded document. Raises ConfigError with
    a JSON-pointer path on the first violation.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError("/", f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("/", f"invalid JSON: {exc}") from exc
    else:
        doc = copy.deepcopy(source)
    if not isinstance(doc, dict):
        raise ConfigError("/", "top-level document must be an object")

    name = doc.get("name", "unnamed")
    regions_doc = _need(doc, "regions", "", list)
    if not regions_doc:
        raise ConfigError("/regions", "at least one region is required")
    regions = [_parse_region(r, i) for i, r in enumerate(regions_doc)]
    names = [r.name for r in regions]
    if len(set(names)) != len(names):
        raise ConfigError("/regions", "region names must be unique")
    n = len(regions)

    migration = np.zeros((n, n))
    mig_doc = doc.get("migration", {})
    if not isinstance(mig_doc, dict):
        raise ConfigError("/migration", "expected an object of objects")
    index = {nm: i for i, nm in enumerate(names)}
    for src, row in mig_doc.items():
        if src not in index:
            raise ConfigError(f"/migration/{src}", "unknown region name")
        if not isinstance(row, dict):
            raise ConfigError(f"/migration/{src}", "expected an object")
        for dst, rate in row.items():
            if dst not in index:
                raise ConfigError(f"/migration/{src}/{dst}", "unknown region name")
            if dst == src:
                raise ConfigError(f"/migration/{src}/{dst}",
                                  "self-migration must be absent (diagonal is zero)")
            if isinstance(rate, bool) or not isinstance(rate, (int, float)) \
                    or not 0.0 <= rate <= 1.0:
                raise ConfigError(f"/migration/{src}/{dst}",
                                  f"rate must be a number in [0, 1], got {rate}")
            migration[index[src], index[dst]] = float(rate)

    rates = dict(DEFAULT_RATES)
    rates_doc = doc.get("rates", {})
    if not isinstance(rates_doc, dict):
        raise ConfigError("/rates", "expected an object")
    for key, value in rates_doc.items():
        if key not in DEFAULT_RATES:
            raise ConfigError(f"/rates/{key}", "unknown rate")
        rates[key] = _number(rates_doc, key, "/rates", lo=0.0, hi=1.0)
    if abs(rates["lambda7"] + rates["lambda8"] - 1.0) > 1e-9:
        raise ConfigError("/rates", "lambda7 + lambda8 must equal 1 "
                                    f"(got {rates['lambda7'] + rates['lambda8']})")
    if rates["lambda1"] + rates["lambda3"] > 1.0 + 1e-9:
        raise ConfigError("/rates", "lambda1 + lambda3 must not exceed 1")
    if rates["lambda4"] + rates["lambda6"] > 1.0 + 1e-9:
        raise ConfigError("/rates", "lambda4 + lambda6 must not exceed 1")

    icu_fraction = _number(doc, "icu_available_fraction", "",
                           default=DEFAULT_ICU_FRACTION, lo=0.0, hi=1.0)
    vent_cost = _number(doc, "ventilator_cost", "", default=DEFAULT_VENT_COST,
                        lo=1e-9)
    budget = _number(doc, "budget", "", default=0.0, lo=0.0)
    budget_levels_doc = doc.get("budget_levels", [budget])
    if not isinstance(budget_levels_doc, list) or not all(
            isinstance(b, (int, float)) and not isinstance(b, bool) and b >= 0
            for b in budget_levels_doc):
        raise ConfigError("/budget_levels", "expected a list of nonnegative numbers")
    budget_levels = [float(b) for b in budget_levels_doc]

    tree_doc = {**DEFAULT_TREE, **doc.get("tree", {})}
    stages = tree_doc["stages"]
    if not isinstance(stages, int) or stages < 1:
        raise ConfigError("/tree/stages", f"must be a positive integer, got {stages}")
    probs = tree_doc["branch_probs"]
    if not isinstance(probs, list) or not probs:
        raise ConfigError("/tree/branch_probs", "expected a non-empty list")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise ConfigError("/tree/branch_probs", f"must sum to 1, got {sum(probs)}")
    if "std_policy" not in tree_doc:
        tree_doc["std_policy"] = table1_std_policy(stages)
    root_mean = _number(tree_doc, "root_mean", "/tree", lo=0.0, hi=1.0)
    root_std = _number(tree_doc, "root_std", "/tree", lo=0.0)
    prop_min = _number(tree_doc, "prop_min", "/tree", lo=0.0, hi=1.0)
    prop_max = _number(tree_doc, "prop_max", "/tree", lo=0.0)
    if prop_min > prop_max:
        raise ConfigError("/tree/prop_min", "prop_min exceeds prop_max")
    tree_spec = {"stages": stages, "branch_probs": [float(p) for p in probs],
                 "root_mean": root_mean, "root_std": root_std,
                 "std_policy": tree_doc["std_policy"],
                 "prop_min": prop_min, "prop_max": prop_max}

    risk_doc = doc.get("risk", {})
    if not isinstance(risk_doc, dict):
        raise ConfigError("/risk", "expected an object")
    try:
        risk = RiskConfig(alpha=_number(risk_doc, "alpha", "/risk", default=0.0),
                          lambda_risk=_number(risk_doc, "lambda", "/risk", default=0.0))
    except ValueError as exc:
        raise ConfigError("/risk", str(exc)) from exc

    solver = {**DEFAULT_SOLVER, **doc.get("solver", {})}

    policy, policy_spec = _parse_policy(doc, n, stages)

    sigma1_seed = np.array([[r.transmission_stage1 for r in regions],
                            [r.transmission_stage2 for r in regions]])
    multipliers = {nm: np.array([r.multipliers[nm] for r in regions])
                   for nm in INTERVENTIONS}
    icu_init = np.array([math.floor(r.icu_capacity * icu_fraction) for r in regions],
                        dtype=float)
    try:
        params = EpidemicParams(
            lambda1=rates["lambda1"], lambda2=rates["lambda2"],
            lambda3=rates["lambda3"], lambda4=rates["lambda4"],
            lambda5=rates["lambda5"], lambda6=rates["lambda6"],
            lambda7=rates["lambda7"], lambda8=rates["lambda8"],
            lambda9=rates["lambda9"],
            sigma1_seed=sigma1_seed,
            intervention_multipliers=multipliers,
            migration=migration,
            migration_damping=dict(DEFAULT_MIGRATION_DAMPING),
            hospital_capacity=np.array([r.hospital_capacity for r in regions]),
            icu_init=icu_init,
            icu_available_fraction=icu_fraction,
            vent_cost=vent_cost,
            budget=budget,
            region_names=tuple(names),
        )
    except ValueError as exc:
        raise ConfigError("/", str(exc)) from exc

    initial = CompartmentState(
        S=np.array([r.population - r.initial_infections - r.initial_asymptomatic
                    - r.initial_hospitalized - r.initial_icu - r.initial_recovered
                    - r.initial_deceased for r in regions]),
        I=np.array([r.initial_infections for r in regions]),
        X=np.array([r.initial_asymptomatic for r in regions]),
        H=np.array([r.initial_hospitalized for r in regions]),
        C=np.array([r.initial_icu for r in regions]),
        R=np.array([r.initial_recovered for r in regions]),
        F=np.array([r.initial_deceased for r in regions]),
        U=icu_init.copy(),
    )

    resolved = {
        "name": name,
        "regions": [
            {"name": r.name, "population": r.population,
             "initial_infections": r.initial_infections,
             "initial_asymptomatic": r.initial_asymptomatic,
             "initial_hospitalized": r.initial_hospitalized,
             "initial_icu": r.initial_icu,
             "initial_recovered": r.initial_recovered,
             "initial_deceased": r.initial_deceased,
             "hospital_capacity": r.hospital_capacity,
             "icu_capacity": r.icu_capacity,
             "transmission_stage1": r.transmission_stage1,
             "transmission_stage2": r.transmission_stage2,
             "multipliers": dict(r.multipliers)} for r in regions],
        "migration": {names[i]: {names[j]: migration[i, j] for j in range(n)
                                 if migration[i, j] != 0.0}
                      for i in range(n) if np.any(migration[i] != 0.0)},
        "rates": rates,
        "icu_available_fraction": icu_fraction,
        "ventilator_cost": vent_cost,
        "budget": budget,
        "budget_levels": budget_levels,
        "tree": {**tree_spec,
                 "std_policy": tree_spec["std_policy"]
                 if isinstance(tree_spec["std_policy"], (int, float))
                 else {str(k): v for k, v in tree_spec["std_policy"].items()}},
        "policy": policy_spec,
        "risk": {"alpha": risk.alpha, "lambda": risk.lambda_risk},
        "solver": solver,
    }

    return RunConfig(name=name, regions=regions, params=params, initial=initial,
                     tree_spec=tree_spec, policy=policy, policy_spec=policy_spec,
                     risk=risk, budget_levels=budget_levels, solver=solver,
                     resolved=resolved)


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture config (e.g. 'ny_nj_8county')."""
    ref = resources.files("ventalloc") / "fixtures" / f"{name}.json"
    with resources.as_file(ref) as p:
        return Path(p)


def load_fixture(name: str) -> RunConfig:
    return load_config(fixture_path(name))

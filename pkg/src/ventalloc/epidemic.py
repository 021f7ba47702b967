"""Deterministic compartmental dynamics for one scenario path.

Seven compartments per region — susceptible S, tested infected I, untested
asymptomatic X, hospitalized H, ICU C, recovered R, deceased F — advanced
stage by stage. Hospital and ICU admissions are capacity-limited minima;
the unserved remainders (Ibar, K) die at elevated rates. New infections at
stage j+1 are sigma1[j+1]*(I_j+X_j) tested plus the sigma2/(1-sigma2)
multiple untested, both debited from S. Short-term migration adds an
inflow-only term to I (no debit at the source region).

Counts are continuous; only ventilator allocations are integral.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

INTERVENTIONS = ("none", "mask_distance", "lockdown")
DEFAULT_MIGRATION_DAMPING = {"none": 1.0, "mask_distance": 0.6, "lockdown": 0.0}


class EpidemicError(ValueError):
    """Invalid dynamics input."""


class BudgetError(EpidemicError):
    """Allocation plan exceeds the ventilator budget."""


def _vec(x, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape == (1,) and n > 1:
        arr = np.full(n, arr[0])
    if arr.shape != (n,):
        raise EpidemicError(f"{name} must have length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class EpidemicParams:
    """Rates, transmission seeds, migration and logistics capacities.

    lambda1..lambda3 act on tested infections (recovery, overflow death,
    hospitalization), lambda4..lambda6 on hospitalized (recovery, overflow
    death, ICU requirement), lambda7/lambda8 on ICU patients (recovery,
    death; they sum to 1), lambda9 on asymptomatics. sigma1_seed holds the
    data-driven stage-1/stage-2 transmission rates per region.
    """

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    lambda5: float
    lambda6: float
    lambda7: float
    lambda8: float
    lambda9: float
    sigma1_seed: np.ndarray              # shape (2, R)
    intervention_multipliers: Mapping[str, np.ndarray]   # name -> (R,)
    migration: np.ndarray                # (R, R), [from, to], zero diagonal
    migration_damping: Mapping[str, float]
    hospital_capacity: np.ndarray        # T, (R,)
    icu_init: np.ndarray                 # U0, (R,) — already the available share
    icu_available_fraction: float
    vent_cost: float                     # e1
    budget: float                        # Delta
    region_names: tuple[str, ...]

    def __post_init__(self) -> None:
        rates = {f"lambda{i}": getattr(self, f"lambda{i}") for i in range(1, 10)}
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise EpidemicError(f"{name} must lie in [0, 1], got {value}")
        # Non-negativity of I and H under the overflow death flows needs
        # lambda1+lambda3 <= 1 and lambda4+lambda6 <= 1 (the overflow pools
        # are bounded by lambda3*I and lambda6*H respectively).
        if self.lambda1 + self.lambda3 > 1.0 + 1e-9:
            raise EpidemicError("lambda1 + lambda3 must not exceed 1")
        if self.lambda4 + self.lambda6 > 1.0 + 1e-9:
            raise EpidemicError("lambda4 + lambda6 must not exceed 1")
        if abs(self.lambda7 + self.lambda8 - 1.0) > 1e-9:
            raise EpidemicError("lambda7 + lambda8 must equal 1")
        n = len(self.region_names)
        if self.sigma1_seed.shape != (2, n):
            raise EpidemicError(f"sigma1_seed must have shape (2, {n})")
        if self.migration.shape != (n, n):
            raise EpidemicError(f"migration matrix must have shape ({n}, {n})")
        if np.any(self.migration < 0.0) or np.any(self.migration > 1.0):
            raise EpidemicError("migration rates must lie in [0, 1]")
        if np.any(np.diag(self.migration) != 0.0):
            raise EpidemicError("migration matrix diagonal must be zero")
        for name in INTERVENTIONS:
            if name not in self.intervention_multipliers:
                raise EpidemicError(f"missing transmission multiplier for '{name}'")
            if name not in self.migration_damping:
                raise EpidemicError(f"missing migration damping for '{name}'")
        if self.vent_cost <= 0.0:
            raise EpidemicError("ventilator cost must be positive")
        if self.budget < 0.0:
            raise EpidemicError("budget must be nonnegative")

    @property
    def n_regions(self) -> int:
        return len(self.region_names)

    @property
    def max_ventilators(self) -> int:
        return int(np.floor(self.budget / self.vent_cost + 1e-9))


@dataclass(frozen=True)
class InterventionPolicy:
    """One intervention name per (stage, region); exactly one is active."""

    table: tuple[tuple[str, ...], ...]   # [stage][region]

    def __post_init__(self) -> None:
        for row in self.table:
            for name in row:
                if name not in INTERVENTIONS:
                    raise EpidemicError(f"unknown intervention '{name}'")

    @property
    def stages(self) -> int:
        return len(self.table)

    @property
    def n_regions(self) -> int:
        return len(self.table[0]) if self.table else 0

    def at(self, stage: int) -> tuple[str, ...]:
        return self.table[stage]

    @staticmethod
    def uniform(name: str, stages: int, n_regions: int) -> "InterventionPolicy":
        return InterventionPolicy(tuple(tuple([name] * n_regions) for _ in range(stages)))

    @staticmethod
    def per_stage(names: Sequence[str], n_regions: int) -> "InterventionPolicy":
        return InterventionPolicy(tuple(tuple([n] * n_regions) for n in names))


@dataclass(frozen=True)
class CompartmentState:
    """Per-region census at one stage; U is cumulative ventilator capacity."""

    S: np.ndarray
    I: np.ndarray
    X: np.ndarray
    H: np.ndarray
    C: np.ndarray
    R: np.ndarray
    F: np.ndarray
    U: np.ndarray

    def __post_init__(self) -> None:
        n = self.S.shape[0]
        for name in ("S", "I", "X", "H", "C", "R", "F", "U"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise EpidemicError(f"state field {name} must have shape ({n},)")
            if np.any(arr < -1e-9):
                raise EpidemicError(f"state field {name} has negative entries")

    @property
    def n_regions(self) -> int:
        return self.S.shape[0]

    def population(self) -> np.ndarray:
        """S+I+X+H+C+R+F per region (conserved absent migration inflow)."""
        return self.S + self.I + self.X + self.H + self.C + self.R + self.F

    @staticmethod
    def make(S, I, X=0.0, H=0.0, C=0.0, R=0.0, F=0.0, U=0.0) -> "CompartmentState":
        s = np.atleast_1d(np.asarray(S, dtype=float))
        n = s.shape[0]
        return CompartmentState(
            s, _vec(I, n, "I"), _vec(X, n, "X"), _vec(H, n, "H"),
            _vec(C, n, "C"), _vec(R, n, "R"), _vec(F, n, "F"), _vec(U, n, "U"))


@dataclass(frozen=True)
class StageFlows:
    """Stage-j admissions, overflows and arrivals.

    O/Cbar are this stage's hospital/ICU admissions, Ibar/K the unserved
    remainders, Imig the migration inflow feeding the next stage's I, and
    new_I/new_X the infection arrivals INTO this stage (zero at stage 0).
    """

    O: np.ndarray
    Cbar: np.ndarray
    Ibar: np.ndarray
    K: np.ndarray
    Imig: np.ndarray
    new_I: np.ndarray
    new_X: np.ndarray


@dataclass(frozen=True)
class Frame:
    stage: int
    state: CompartmentState
    flows: StageFlows


class Trajectory:
    """Stage-indexed frames for one scenario path."""

    def __init__(self, frames: list[Frame], params: EpidemicParams):
        self.frames = frames
        self.params = params

    def __len__(self) -> int:
        return len(self.frames)

    def impacts(self) -> np.ndarray:
        """Stage-wise impact: sum over regions of I + F."""
        return np.array([float((f.state.I + f.state.F).sum()) for f in self.frames])

    def total_impact(self) -> float:
        return float(self.impacts().sum())

    def new_infections(self) -> np.ndarray:
        """Stage-wise tested-infection arrivals, aggregated over regions."""
        return np.array([float(f.flows.new_I.sum()) for f in self.frames])

    def cumulative_infections(self) -> np.ndarray:
        return np.cumsum(self.new_infections())


def transmission_schedule(seed: np.ndarray, policy: InterventionPolicy,
                          multipliers: Mapping[str, np.ndarray],
                          horizon: int) -> np.ndarray:
    """Per-stage, per-region transmission rates sigma1[1..horizon].

    sigma1[1] and sigma1[2] come straight from the data seed; from stage 3
    on, the intervention taken at stage j scales the rate for stage j+1:
    sigma1[j+1] = sigma1[j] * m(intervention at j). Row 0 of the result is
    NaN — there is no stage-0 transmission (nothing arrives at stage 0).
    """
    seed = np.asarray(seed, dtype=float)
    n = seed.shape[1]
    if policy.n_regions != n:
        raise EpidemicError(f"policy covers {policy.n_regions} regions, expected {n}")
    if policy.stages < horizon:
        raise EpidemicError(
            f"policy covers {policy.stages} stages, horizon needs {horizon}")
    sched = np.full((horizon + 1, n), np.nan)
    if horizon >= 1:
        sched[1] = seed[0]
    if horizon >= 2:
        sched[2] = seed[1]
    for j in range(2, horizon):
        names = policy.at(j)
        m = np.empty(n)
        for r, name in enumerate(names):
            if name not in multipliers:
                raise EpidemicError(f"missing transmission multiplier for '{name}'")
            m[r] = multipliers[name][r]
        sched[j + 1] = sched[j] * m
    return sched


def migration_inflow(I, migration: np.ndarray, damping) -> np.ndarray:
    """Infected inflow per region: damping * sum_{r'} migration[r', r] * I[r']."""
    I = np.atleast_1d(np.asarray(I, dtype=float))
    migration = np.asarray(migration, dtype=float)
    n = I.shape[0]
    if migration.shape != (n, n):
        raise EpidemicError(
            f"migration matrix shape {migration.shape} does not match {n} regions")
    damping = _vec(damping, n, "damping")
    return damping * (migration.T @ I)


def admission_flows(state: CompartmentState, params: EpidemicParams,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Capacity-limited admissions and overflows at the state's stage.

    O = min(lambda3*I, T - H), Ibar = lambda3*I - O,
    Cbar = min(lambda6*H, U - C), K = lambda6*H - Cbar.
    """
    need_h = params.lambda3 * state.I
    room_h = params.hospital_capacity - state.H
    O = np.minimum(need_h, room_h)
    O = np.maximum(O, 0.0)
    Ibar = np.maximum(need_h - O, 0.0)
    need_c = params.lambda6 * state.H
    room_c = state.U - state.C
    Cbar = np.minimum(need_c, room_c)
    Cbar = np.maximum(Cbar, 0.0)
    K = np.maximum(need_c - Cbar, 0.0)
    return O, Cbar, Ibar, K


def infection_arrivals(state: CompartmentState, sigma1, sigma2: float,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Tested and untested infection arrivals for the next stage.

    Both flows are debited from S; if they would overdraw it, they are
    rescaled proportionally so S lands exactly at zero (the tested/untested
    ratio sigma2/(1-sigma2) is preserved).
    """
    if sigma2 >= 1.0:
        raise EpidemicError(f"sigma2 must be < 1, got {sigma2}")
    if sigma2 < 0.0:
        raise EpidemicError(f"sigma2 must be nonnegative, got {sigma2}")
    sigma1 = _vec(sigma1, state.n_regions, "sigma1")
    if np.any(sigma1 < 0.0):
        raise EpidemicError("sigma1 must be nonnegative")
    pressure = sigma1 * (state.I + state.X)
    ratio = sigma2 / (1.0 - sigma2)
    new_I = pressure
    new_X = pressure * ratio
    debit = new_I + new_X
    over = debit > state.S
    if np.any(over):
        scale = np.ones_like(debit)
        nz = over & (debit > 0.0)
        scale[nz] = state.S[nz] / debit[nz]
        new_I = new_I * scale
        new_X = new_X * scale
    return new_I, new_X


def _scrub(arr: np.ndarray) -> np.ndarray:
    # roundoff hygiene only; the rate invariants keep true values >= 0
    return np.where((arr < 0.0) & (arr > -1e-9), 0.0, arr)


def _transition(state: CompartmentState, params: EpidemicParams,
                sigma1_next, sigma2_next: float, damping,
                ) -> tuple[CompartmentState, StageFlows, np.ndarray, np.ndarray]:
    """Stage-j flows plus the stage-(j+1) state; U must already include y."""
    O, Cbar, Ibar, K = admission_flows(state, params)
    Imig = migration_inflow(state.I, params.migration, damping)
    new_I, new_X = infection_arrivals(state, sigma1_next, sigma2_next)
    p = params
    S_next = state.S - new_I - new_X
    I_next = state.I + Imig + new_I - p.lambda1 * state.I - p.lambda2 * Ibar - O
    X_next = state.X + new_X - p.lambda9 * state.X
    H_next = state.H + O - p.lambda4 * state.H - p.lambda5 * K - Cbar
    C_next = state.C + Cbar - (p.lambda7 + p.lambda8) * state.C
    R_next = state.R + p.lambda1 * state.I + p.lambda9 * state.X \
        + p.lambda4 * state.H + p.lambda7 * state.C
    F_next = state.F + p.lambda2 * Ibar + p.lambda5 * K + p.lambda8 * state.C
    nxt = CompartmentState(
        _scrub(S_next), _scrub(I_next), _scrub(X_next), _scrub(H_next),
        _scrub(C_next), _scrub(R_next), _scrub(F_next), state.U)
    return nxt, StageFlows(O, Cbar, Ibar, K, Imig, new_I, new_X), new_I, new_X


def step(state: CompartmentState, sigma1, sigma2: float, params: EpidemicParams,
         y=0.0, damping=1.0) -> CompartmentState:
    """Advance one stage: returns the next state (U updated by y first).

    y is this stage's ventilator allocation (integral, >= 0); damping is
    the migration factor of the intervention active this stage.
    """
    y = _vec(y, state.n_regions, "y")
    if np.any(y < 0.0):
        raise EpidemicError("allocation must be nonnegative")
    if np.any(np.abs(y - np.round(y)) > 1e-6):
        raise EpidemicError("allocation must be integral")
    state = replace(state, U=state.U + y)
    nxt, _, _, _ = _transition(state, params, sigma1, sigma2, damping)
    return nxt


def simulate(initial: CompartmentState, sigma2_path: Sequence[float],
             policy: InterventionPolicy, allocations, params: EpidemicParams,
             ) -> Trajectory:
    """Run the dynamics along one scenario path.

    sigma2_path has one value per stage (index 0 is the root realization,
    which drives nothing: the j -> j+1 transition uses sigma2_path[j+1]).
    allocations is an array (stages, regions) covering stages 1..horizon
    (stage 0 must be zero: initial capacity is data). The plan must respect
    the budget — checked, never silently truncated.
    """
    horizon = len(sigma2_path) - 1
    n = initial.n_regions
    if policy.stages < horizon + 1:
        raise EpidemicError(
            f"policy covers {policy.stages} stages, path needs {horizon + 1}")
    if policy.n_regions != n:
        raise EpidemicError("policy region count does not match the state")
    alloc = np.zeros((horizon + 1, n))
    if allocations is not None:
        given = np.asarray(allocations, dtype=float)
        if given.shape != (horizon + 1, n):
            raise EpidemicError(
                f"allocations must have shape ({horizon + 1}, {n}), got {given.shape}")
        alloc = given
    if np.any(alloc[0] != 0.0):
        raise EpidemicError("allocations at stage 0 must be zero")
    spend = float(alloc.sum()) * params.vent_cost
    if spend > params.budget + 1e-6:
        raise BudgetError(
            f"allocation cost {spend:.2f} exceeds budget {params.budget:.2f}")

    sched = transmission_schedule(params.sigma1_seed, policy,
                                  params.intervention_multipliers, horizon)
    damp = np.empty((horizon + 1, n))
    for j in range(horizon + 1):
        damp[j] = [params.migration_damping[name] for name in policy.at(j)]

    frames: list[Frame] = []
    state = initial
    arrivals = (np.zeros(n), np.zeros(n))
    for j in range(horizon + 1):
        state = replace(state, U=state.U + alloc[j])
        if j == horizon:
            O, Cbar, Ibar, K = admission_flows(state, params)
            Imig = migration_inflow(state.I, params.migration, damp[j])
            frames.append(Frame(j, state, StageFlows(O, Cbar, Ibar, K, Imig,
                                                     arrivals[0], arrivals[1])))
            break
        nxt, flows, new_I, new_X = _transition(
            state, params, sched[j + 1], sigma2_path[j + 1], damp[j])
        frames.append(Frame(j, state, StageFlows(
            flows.O, flows.Cbar, flows.Ibar, flows.K, flows.Imig,
            arrivals[0], arrivals[1])))
        state = nxt
        arrivals = (new_I, new_X)
    return Trajectory(frames, params)

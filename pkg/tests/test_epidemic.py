import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import make_params, make_state
from ventalloc.config import load_fixture
from ventalloc.epidemic import (BudgetError, EpidemicError, InterventionPolicy,
                                admission_flows, migration_inflow, simulate,
                                step, transmission_schedule)
from ventalloc.tree import scenario_by_branches


def test_params_validation():
    with pytest.raises(EpidemicError):
        make_params(rates={"lambda1": 0.9, "lambda3": 0.2})   # sum > 1
    with pytest.raises(EpidemicError):
        make_params(rates={"lambda4": 0.95, "lambda6": 0.1})
    with pytest.raises(EpidemicError):
        make_params(rates={"lambda7": 0.7, "lambda8": 0.4})   # must sum to 1
    with pytest.raises(EpidemicError):
        make_params(rates={"lambda2": 1.2})
    with pytest.raises(EpidemicError):
        make_params(n=2, migration=np.array([[0.1, 0.0], [0.0, 0.0]]))  # diagonal
    with pytest.raises(EpidemicError):
        make_params(n=2, migration=np.zeros((3, 3)))


def test_policy_validation():
    with pytest.raises(EpidemicError):
        InterventionPolicy.uniform("quarantine", 3, 2)
    pol = InterventionPolicy.per_stage(["none", "lockdown"], 2)
    assert pol.at(1) == ("lockdown", "lockdown")


def test_transmission_schedule_mask_example():
    p = make_params()
    pol = InterventionPolicy.per_stage(
        ["none", "none", "mask_distance", "mask_distance"], 1)
    sched = transmission_schedule(np.array([[4.5], [0.9855]]), pol,
                                  p.intervention_multipliers, 3)
    assert sched[1, 0] == 4.5
    assert sched[2, 0] == 0.9855
    assert sched[3, 0] == pytest.approx(0.3942, abs=1e-12)


def test_transmission_schedule_identity_multiplier():
    p = make_params()
    pol = InterventionPolicy.uniform("none", 6, 1)
    sched = transmission_schedule(np.array([[2.0], [1.5]]), pol,
                                  p.intervention_multipliers, 5)
    assert np.allclose(sched[2:], 1.5)


def test_transmission_schedule_lockdown_compounds():
    p = make_params()
    pol = InterventionPolicy.uniform("lockdown", 6, 1)
    sched = transmission_schedule(np.array([[22.0], [2.409]]), pol,
                                  p.intervention_multipliers, 5)
    assert sched[5, 0] == pytest.approx(2.409 * 0.6 ** 3, abs=1e-12)
    assert sched[5, 0] == pytest.approx(0.5204, abs=1e-4)


def test_transmission_schedule_policy_too_short():
    p = make_params()
    pol = InterventionPolicy.uniform("none", 2, 1)
    with pytest.raises(EpidemicError):
        transmission_schedule(np.array([[2.0], [1.5]]), pol,
                              p.intervention_multipliers, 5)


def test_migration_lockdown_zeroes_inflow():
    matrix = np.array([[0.0, 0.2], [0.1, 0.0]])
    assert np.all(migration_inflow([50.0, 80.0], matrix, 0.0) == 0.0)


def test_migration_single_region():
    assert migration_inflow([100.0], np.zeros((1, 1)), 1.0) == pytest.approx([0.0])


def test_migration_hand_case():
    matrix = np.array([[0.0, 0.05], [0.0, 0.0]])
    inflow = migration_inflow([100.0, 0.0], matrix, 1.0)
    assert inflow == pytest.approx([0.0, 5.0])


def test_migration_dimension_mismatch():
    with pytest.raises(EpidemicError):
        migration_inflow([1.0, 2.0], np.zeros((3, 3)), 1.0)


def test_step_no_infection_pressure():
    p = make_params()
    s0 = make_state(S=900.0, I=0.0, X=0.0, R=30.0, F=5.0)
    s1 = step(s0, 1.2, 0.26, p)
    assert s1.S == pytest.approx(s0.S)
    assert s1.R == pytest.approx(s0.R)
    assert s1.F == pytest.approx(s0.F)
    assert s1.I == pytest.approx([0.0])


def test_admission_min_and_overflow():
    # lambda3*I = 10 against 4 free beds: admit 4, overflow 6
    p = make_params(rates={"lambda3": 0.25, "lambda1": 0.74}, hospital=104.0)
    state = make_state(S=1000.0, I=40.0, H=100.0)
    O, Cbar, Ibar, K = admission_flows(state, p)
    assert O == pytest.approx([4.0])
    assert Ibar == pytest.approx([6.0])


def test_step_golden_one_region():
    # frozen from a by-hand evaluation of the transition equations:
    # new tested 0.9855*100 = 98.55, untested ratio 0.26/0.74,
    # outflow (lambda1 + lambda3) = 1 exactly so I' = new arrivals
    p = make_params()
    s0 = make_state(S=1000.0, I=100.0)
    s1 = step(s0, 0.9855, 0.26, p)
    assert s1.I == pytest.approx([98.55], abs=1e-12)
    assert s1.X == pytest.approx([2562.3 / 74.0], abs=1e-12)
    assert s1.S == pytest.approx([1000.0 - 98.55 - 2562.3 / 74.0], abs=1e-10)
    assert s1.H == pytest.approx([26.0], abs=1e-12)
    assert s1.R == pytest.approx([74.0], abs=1e-12)
    assert s1.C == pytest.approx([0.0])
    assert s1.F == pytest.approx([0.0])


def test_step_rejects_bad_inputs():
    p = make_params()
    s0 = make_state(S=100.0, I=10.0)
    with pytest.raises(EpidemicError):
        step(s0, 1.0, 1.0, p)           # sigma2 >= 1
    with pytest.raises(EpidemicError):
        step(s0, 1.0, 0.2, p, y=-1.0)   # negative allocation
    with pytest.raises(EpidemicError):
        step(s0, 1.0, 0.2, p, y=0.5)    # fractional allocation


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_step_conserves_population(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 31)))
    s0 = make_state(S=float(rng.uniform(0, 5e4)), I=float(rng.uniform(0, 5e3)),
                    X=float(rng.uniform(0, 5e3)), H=float(rng.uniform(0, 2e3)),
                    C=float(rng.uniform(0, 50.0)), R=float(rng.uniform(0, 1e4)),
                    F=float(rng.uniform(0, 1e3)), U=float(rng.uniform(50, 500)))
    p = make_params(hospital=float(rng.uniform(2e3, 1e4)))
    sigma1 = float(rng.uniform(0.0, 4.0))
    sigma2 = float(rng.uniform(0.0, 0.9))
    s1 = step(s0, sigma1, sigma2, p)
    before = float(s0.population()[0])
    after = float(s1.population()[0])
    assert abs(after - before) <= 1e-9 * max(before, 1.0)


def test_step_nonnegative_and_capacity():
    rng = np.random.default_rng(5)
    p = make_params(hospital=800.0)
    for _ in range(200):
        s = make_state(S=float(rng.uniform(0, 1e4)), I=float(rng.uniform(0, 2e3)),
                       X=float(rng.uniform(0, 2e3)), H=float(rng.uniform(0, 800.0)),
                       C=float(rng.uniform(0, 30.0)), U=float(rng.uniform(30, 200)))
        s1 = step(s, float(rng.uniform(0, 3)), float(rng.uniform(0, 0.8)), p)
        for f in "SIXHCRF":
            assert np.all(getattr(s1, f) >= 0.0)
        assert np.all(s1.H <= p.hospital_capacity + 1e-9)
        assert np.all(s1.C <= s1.U + 1e-9)


def test_step_monotone_in_sigma1():
    p = make_params()
    s0 = make_state(S=1e5, I=500.0, X=100.0)
    previous = -1.0
    for sigma1 in (0.2, 0.5, 1.0, 2.0, 3.0):
        s1 = step(s0, sigma1, 0.26, p)
        assert s1.I[0] >= previous
        previous = s1.I[0]


def test_asymptomatic_coupling_exact():
    cfg = load_fixture("desk_2region")
    tree = cfg.build_tree()
    for w in (0, 4, 8):
        path = tree.sigma2_path(w)
        traj = simulate(cfg.initial, path, cfg.policy, None, cfg.params)
        for j in range(1, len(path)):
            fl = traj.frames[j].flows
            ratio = path[j] / (1.0 - path[j])
            mask = fl.new_I > 0
            assert np.allclose(fl.new_X[mask], fl.new_I[mask] * ratio, rtol=1e-12)


def test_simulate_disease_free_is_absorbing():
    p = make_params(n=2, migration=np.array([[0.0, 0.1], [0.2, 0.0]]))
    initial = make_state(S=[1000.0, 800.0], I=[0.0, 0.0], U=[5.0, 5.0])
    pol = InterventionPolicy.uniform("none", 4, 2)
    traj = simulate(initial, (0.26, 0.2, 0.3, 0.25), pol, None, p)
    for frame in traj.frames:
        assert np.all(frame.state.S == initial.S)
        assert np.all(frame.state.I == 0.0)
        assert np.all(frame.state.F == 0.0)


def test_simulate_budget_checked():
    cfg = load_fixture("desk_2region")
    tree = cfg.build_tree()
    alloc = np.zeros((3, 2))
    alloc[1] = (5, 5)   # 10 ventilators > budget of 6
    with pytest.raises(BudgetError):
        simulate(cfg.initial, tree.sigma2_path(0), cfg.policy, alloc, cfg.params)


def test_simulate_horizon_mismatch():
    cfg = load_fixture("desk_2region")
    pol = InterventionPolicy.uniform("none", 2, 2)
    with pytest.raises(EpidemicError):
        simulate(cfg.initial, (0.26, 0.2, 0.3), pol, None, cfg.params)


@pytest.fixture(scope="module")
def county_runs():
    cfg = load_fixture("ny_nj_8county_full")
    tree = cfg.build_tree()
    w = scenario_by_branches(tree, "medium")
    path = tree.sigma2_path(w)
    runs = {}
    for name in ("none", "mask_distance", "lockdown"):
        pol = InterventionPolicy.uniform(name, tree.stages, len(cfg.regions))
        runs[name] = simulate(cfg.initial, path, pol, None, cfg.params)
    return cfg, runs


def test_lockdown_new_infections_decay_after_stage_two(county_runs):
    _, runs = county_runs
    series = runs["lockdown"].new_infections()
    # the curve restricted to stages after stage 2 is strictly decreasing
    for j in range(3, len(series) - 1):
        assert series[j + 1] < series[j]


def test_none_dominates_lockdown_cumulative(county_runs):
    _, runs = county_runs
    cum_none = runs["none"].cumulative_infections()
    cum_lock = runs["lockdown"].cumulative_infections()
    for j in range(3, len(cum_none)):
        assert cum_none[j] >= cum_lock[j] - 1e-9

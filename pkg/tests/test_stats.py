import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from ventalloc.stats import (betainc_reg, cvar_discrete, norm_cdf, norm_ppf,
                             normal_quantile, t_two_tailed_p)


def test_norm_ppf_matches_scipy_below_1e9():
    grid = np.concatenate([np.geomspace(1e-12, 0.5, 120),
                           1.0 - np.geomspace(1e-12, 0.5, 120)])
    for p in grid:
        assert abs(norm_ppf(float(p)) - scipy.stats.norm.ppf(p)) < 1e-9


def test_norm_ppf_key_quantiles():
    assert norm_ppf(0.5) == 0.0
    assert norm_ppf(0.15) == pytest.approx(-1.0364333894937898, abs=1e-12)
    assert norm_ppf(0.85) == pytest.approx(1.0364333894937898, abs=1e-12)


def test_norm_ppf_rejects_out_of_range():
    for p in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            norm_ppf(p)


def test_norm_cdf_round_trip():
    for x in (-6.0, -1.2, 0.0, 0.7, 4.4):
        assert norm_ppf(norm_cdf(x)) == pytest.approx(x, abs=1e-10)


def test_normal_quantile_degenerate_std():
    assert normal_quantile(0.26, 0.0, 0.15) == 0.26
    with pytest.raises(ValueError):
        normal_quantile(0.2, -0.1, 0.5)


def test_betainc_matches_scipy():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = float(rng.uniform(0.2, 40.0))
        b = float(rng.uniform(0.2, 40.0))
        x = float(rng.uniform(0.0, 1.0))
        assert betainc_reg(a, b, x) == pytest.approx(
            float(scipy.special.betainc(a, b, x)), abs=1e-12)


def test_t_two_tailed_matches_scipy():
    for t, df in ((0.0, 4), (2.39, 4), (-1.7, 7), (0.14, 7), (12.0, 2)):
        expect = 2.0 * scipy.stats.t.sf(abs(t), df)
        assert t_two_tailed_p(t, df) == pytest.approx(expect, abs=1e-12)
    assert t_two_tailed_p(0.0, 9) == 1.0


def test_cvar_alpha_zero_is_mean():
    values = [3.0, 1.0, 4.0]
    probs = [0.2, 0.5, 0.3]
    var, cvar = cvar_discrete(values, probs, 0.0)
    assert var == 1.0
    assert cvar == pytest.approx(np.dot(values, probs))


def test_cvar_point_mass_is_the_point():
    var, cvar = cvar_discrete([7.0], [1.0], 0.6)
    assert var == 7.0 and cvar == 7.0


def test_cvar_three_atoms_hand_case():
    # atoms 10/20/30 with probs 0.3/0.4/0.3 at alpha 0.6: the 40% tail holds
    # the 0.3-mass atom 30 plus 0.1 of atom 20 -> (0.1*20 + 0.3*30)/0.4 = 27.5
    var, cvar = cvar_discrete([10.0, 20.0, 30.0], [0.3, 0.4, 0.3], 0.6)
    assert var == 20.0
    assert cvar == pytest.approx(27.5, abs=1e-12)


def _ru_objective(eta, values, probs, alpha):
    excess = np.maximum(np.asarray(values) - eta, 0.0)
    return eta + float(np.dot(probs, excess)) / (1.0 - alpha)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=7),
       st.floats(0.0, 0.95))
def test_cvar_matches_grid_infimum(values, alpha):
    rng = np.random.default_rng(len(values))
    probs = rng.uniform(0.05, 1.0, len(values))
    probs = probs / probs.sum()
    _, cvar = cvar_discrete(values, probs, alpha)
    # the RU objective is piecewise linear with breakpoints at the atoms, so
    # a grid containing every atom attains the exact infimum
    grid = np.unique(np.concatenate([np.asarray(values, float),
                                     np.linspace(min(values), max(values), 400)]))
    best = min(_ru_objective(float(e), values, probs, alpha) for e in grid)
    assert cvar == pytest.approx(best, abs=1e-9)


def test_cvar_rejects_bad_input():
    with pytest.raises(ValueError):
        cvar_discrete([1.0], [1.0], 1.0)
    with pytest.raises(ValueError):
        cvar_discrete([1.0, 2.0], [0.4, 0.4], 0.5)
    with pytest.raises(ValueError):
        cvar_discrete([], [], 0.5)

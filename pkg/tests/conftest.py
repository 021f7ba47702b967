"""Session fixtures shared across the suite, and the acceptance summary table.

The desk-scale model is built and solved once per session; acceptance and
module tests warm start from its basis instead of repeating the cold solve.
"""

from __future__ import annotations

import numpy as np
import pytest

from ventalloc.config import load_fixture
from ventalloc.milp import RiskConfig, build
from ventalloc.solver import solve_mip


@pytest.fixture(scope="session")
def desk_cfg():
    return load_fixture("desk_2region")


@pytest.fixture(scope="session")
def desk_tree(desk_cfg):
    return desk_cfg.build_tree()


@pytest.fixture(scope="session")
def desk_model(desk_cfg, desk_tree):
    """Risk-averse desk model (alpha 0.6, lambda 1); never mutated."""
    return build(desk_cfg.params, desk_cfg.initial, desk_tree, desk_cfg.policy,
                 RiskConfig(alpha=0.6, lambda_risk=1.0))


@pytest.fixture(scope="session")
def desk_free(desk_model):
    """The session's one cold solve of the free desk model."""
    res = solve_mip(desk_model, time_limit=300.0)
    assert res.status == "optimal"
    return res


@pytest.fixture(scope="session")
def shortfall_cfg():
    return load_fixture("shortfall_1region")


ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def record_acceptance(number: int, description: str, passed: bool) -> None:
    ACCEPTANCE_RESULTS.append(
        (f"{number:2d}", description, "PASS" if passed else "FAIL"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, verdict in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"  {verdict}  criterion {number}: {description}")

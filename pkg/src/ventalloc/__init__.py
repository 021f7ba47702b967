"""Epidemic forecasting and risk-averse multi-stage ventilator allocation.

Library layout:

- tree: scenario trees over the uncertain untested-asymptomatic proportion
- epidemic: compartmental dynamics, transmission schedules, migration
- milp: the deterministic-equivalent mean-CVaR MILP and solution extraction
- solver: embedded simplex + branch-and-bound
- bounds: scenario-decomposition lower/upper bounds
- config: JSON run configurations and bundled fixtures
- report: validation statistics and CSV/JSON reporting
- cli: the ventalloc command-line interface
"""

from .bounds import (ScenarioBound, evaluate_allocation, lower_bound,
                     scenario_subproblem, solve_all_subproblems, upper_bound)
from .config import ConfigError, RunConfig, load_config, load_fixture
from .epidemic import (CompartmentState, EpidemicError, EpidemicParams,
                       InterventionPolicy, Trajectory, migration_inflow,
                       simulate, step, transmission_schedule)
from .milp import (MilpModel, RiskConfig, Solution, build, cvar_layer,
                   extract_solution, linearize_min)
from .report import TTestResult, paired_t_test
from .solver import (LpSolution, MipResult, solve_lp, solve_mip, warm_start)
from .tree import (NodeDistribution, Scenario, ScenarioTree, TreeNode,
                   build_tree, bundles_at, conditional_quantiles,
                   tree_from_json, tree_to_json)

__version__ = "0.1.0"

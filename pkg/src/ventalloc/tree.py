"""Multi-stage scenario tree for the uncertain untested-asymptomatic proportion.

The tree discretizes a normal distribution at every node into k branches
(default 3: low/medium/high with probabilities 0.3/0.4/0.3). Each branch
realizes the quantile at the midpoint of its probability cell — the cells
[0, .3], [.3, .7], [.7, 1] give the 0.15-, 0.50- and 0.85-quantiles — and
the child node's distribution is re-centred on that realization with a
standard deviation taken from an explicit per-stage/per-branch table.
Everything is deterministic: no sampling anywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .stats import normal_quantile

DEFAULT_BRANCH_PROBS = (0.3, 0.4, 0.3)

# Stage-1 child spreads recovered from the published example tree by
# inverting the 0.15-quantile: low 0.21 - 1.03643*s = 0.17 -> 0.0386,
# high 0.31 - 1.03643*s = 0.12 -> 0.1833. The medium child keeps the root
# spread (its realization is the parent mean: no new information).
TABLE1_STAGE1_STD = {"low": 0.0386, "medium": 0.05, "high": 0.1833}
# Bounds wide enough that none of the published realizations clamp.
TABLE1_PROP_BOUNDS = (0.0, 0.99)


class TreeError(ValueError):
    """Invalid scenario-tree input or query."""


def _branch_labels(branching: int) -> tuple[str, ...]:
    if branching == 1:
        return ("medium",)
    if branching == 2:
        return ("low", "high")
    if branching == 3:
        return ("low", "medium", "high")
    return tuple(f"b{i}" for i in range(branching))


def table1_std_policy(stages: int) -> dict[int, dict[str, float]]:
    """Per-stage/per-branch std table seeded from the published stage-1 row.

    Stages past 1 reuse the stage-1 value of the same branch (the source
    gives no deeper rows).
    """
    return {j: dict(TABLE1_STAGE1_STD) for j in range(1, max(stages, 2))}


@dataclass(frozen=True)
class NodeDistribution:
    """Normal distribution of the asymptomatic proportion at one node."""

    mean: float
    std: float
    lower_q: float = 0.001
    upper_q: float = 0.999

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean <= 1.0:
            raise TreeError(f"distribution mean must lie in [0, 1], got {self.mean}")
        if self.std < 0.0:
            raise TreeError(f"distribution std must be nonnegative, got {self.std}")
        if not 0.0 < self.lower_q < self.upper_q < 1.0:
            raise TreeError(
                f"quantile levels must satisfy 0 < lower < upper < 1, "
                f"got ({self.lower_q}, {self.upper_q})")


@dataclass(frozen=True)
class TreeNode:
    id: int
    stage: int
    parent: int | None
    branch: str | None
    realized_value: float
    distribution: NodeDistribution
    branch_prob: float


@dataclass(frozen=True)
class Scenario:
    """A root-to-leaf path: node ids per stage and its probability."""

    path: tuple[int, ...]
    probability: float


@dataclass(frozen=True)
class ScenarioTree:
    stages: int
    branching: int
    nodes: tuple[TreeNode, ...]
    scenarios: tuple[Scenario, ...]
    bundles: Mapping[int, tuple[int, ...]]
    prop_min: float
    prop_max: float
    _by_stage: Mapping[int, tuple[int, ...]] = field(repr=False, default_factory=dict)

    @property
    def horizon(self) -> int:
        """Last stage index (number of transitions)."""
        return self.stages - 1

    def node(self, node_id: int) -> TreeNode:
        if not 0 <= node_id < len(self.nodes):
            raise TreeError(f"unknown node id {node_id}")
        return self.nodes[node_id]

    def nodes_at_stage(self, stage: int) -> tuple[int, ...]:
        if stage not in self._by_stage:
            raise TreeError(f"stage {stage} outside 0..{self.stages - 1}")
        return self._by_stage[stage]

    def children(self, node_id: int) -> tuple[int, ...]:
        self.node(node_id)
        return tuple(n.id for n in self.nodes if n.parent == node_id)

    def sigma2_path(self, scenario: int) -> tuple[float, ...]:
        """Realized proportions along the scenario's path, one per stage."""
        if not 0 <= scenario < len(self.scenarios):
            raise TreeError(f"unknown scenario index {scenario}")
        return tuple(self.nodes[n].realized_value for n in self.scenarios[scenario].path)

    def scenario_node(self, scenario: int, stage: int) -> int:
        return self.scenarios[scenario].path[stage]


def conditional_quantiles(dist: NodeDistribution,
                          prop_min: float = 0.0,
                          prop_max: float = 1.0) -> tuple[float, float, float]:
    """Low/medium/high conditional realizations of a node's distribution.

    Returns the 0.15-, 0.50- and 0.85-quantiles of N(mean, std), each
    clamped to [prop_min, prop_max]. The medium value equals the mean
    whenever no clamp binds.
    """
    q = _cell_quantiles(dist, DEFAULT_BRANCH_PROBS, prop_min, prop_max)
    return q[0], q[1], q[2]


def _cell_quantiles(dist: NodeDistribution, probs: Sequence[float],
                    prop_min: float, prop_max: float) -> tuple[float, ...]:
    if prop_min > prop_max:
        raise TreeError(f"prop_min {prop_min} exceeds prop_max {prop_max}")
    out = []
    cum = 0.0
    for p in probs:
        mid = cum + p / 2.0
        value = normal_quantile(dist.mean, dist.std, mid)
        out.append(min(max(value, prop_min), prop_max))
        cum += p
    return tuple(out)


def build_tree(stages: int,
               root: NodeDistribution,
               std_policy: float | Mapping,
               probs: Sequence[float] = DEFAULT_BRANCH_PROBS,
               prop_bounds: tuple[float, float] = (0.15, 0.40)) -> ScenarioTree:
    """Build a uniform scenario tree with ``stages`` levels (root at stage 0).

    Children realize the conditional quantiles of their parent's
    distribution; each child's distribution is re-centred on its realized
    value with a spread from ``std_policy`` (a constant, or a mapping
    stage -> std or stage -> {branch label: std} covering stages
    1..stages-1). A tree with ``stages`` levels has branching**(stages-1)
    scenarios.
    """
    if stages < 1:
        raise TreeError(f"stages must be >= 1, got {stages}")
    probs = tuple(float(p) for p in probs)
    if any(p <= 0.0 for p in probs):
        raise TreeError("branch probabilities must be positive")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise TreeError(f"branch probabilities sum to {sum(probs)}, expected 1")
    branching = len(probs)
    labels = _branch_labels(branching)
    prop_min, prop_max = prop_bounds
    std_for = _normalize_std_policy(std_policy, stages, labels)

    root_value = min(max(root.mean, prop_min), prop_max)
    nodes: list[TreeNode] = [TreeNode(0, 0, None, None, root_value, root, 1.0)]
    frontier = [0]
    for stage in range(1, stages):
        next_frontier: list[int] = []
        for parent_id in frontier:
            parent = nodes[parent_id]
            values = _cell_quantiles(parent.distribution, probs, prop_min, prop_max)
            for i, value in enumerate(values):
                child_dist = NodeDistribution(
                    mean=value, std=std_for(stage, labels[i]),
                    lower_q=root.lower_q, upper_q=root.upper_q)
                node = TreeNode(len(nodes), stage, parent_id, labels[i], value,
                                child_dist, probs[i])
                nodes.append(node)
                next_frontier.append(node.id)
        frontier = next_frontier

    scenarios: list[Scenario] = []
    for leaf_id in frontier:
        path = []
        nid: int | None = leaf_id
        prob = 1.0
        while nid is not None:
            node = nodes[nid]
            path.append(nid)
            prob *= node.branch_prob
            nid = node.parent
        scenarios.append(Scenario(tuple(reversed(path)), prob))

    bundles: dict[int, tuple[int, ...]] = {}
    for node in nodes:
        bundles[node.id] = tuple(
            w for w, sc in enumerate(scenarios) if node.id in sc.path)

    by_stage: dict[int, tuple[int, ...]] = {}
    for node in nodes:
        by_stage.setdefault(node.stage, ())
        by_stage[node.stage] += (node.id,)

    return ScenarioTree(stages=stages, branching=branching,
                        nodes=tuple(nodes), scenarios=tuple(scenarios),
                        bundles=bundles, prop_min=prop_min, prop_max=prop_max,
                        _by_stage=by_stage)


def _normalize_std_policy(std_policy: float | Mapping, stages: int,
                          labels: tuple[str, ...]):
    if isinstance(std_policy, (int, float)):
        value = float(std_policy)
        if value < 0.0:
            raise TreeError(f"constant std must be nonnegative, got {value}")
        return lambda stage, label: value
    if not isinstance(std_policy, Mapping):
        raise TreeError("std_policy must be a number or a per-stage mapping")
    table: dict[int, dict[str, float]] = {}
    for key, entry in std_policy.items():
        stage = int(key)
        if isinstance(entry, (int, float)):
            table[stage] = {label: float(entry) for label in labels}
        else:
            table[stage] = {str(k): float(v) for k, v in entry.items()}
    for stage in range(1, stages):
        if stage not in table:
            raise TreeError(
                f"std_policy covers fewer stages than requested: stage {stage} missing")
        for label in labels:
            if label not in table[stage]:
                raise TreeError(f"std_policy stage {stage} missing branch '{label}'")
            if table[stage][label] < 0.0:
                raise TreeError(f"std_policy stage {stage} branch '{label}' is negative")
    return lambda stage, label: table[stage][label]


def bundles_at(tree: ScenarioTree, node_id: int) -> tuple[int, ...]:
    """Scenario indices whose paths pass through ``node_id``."""
    tree.node(node_id)
    return tree.bundles[node_id]


def scenario_by_branches(tree: ScenarioTree, label: str) -> int:
    """Index of the scenario that takes the same branch at every stage."""
    for w, sc in enumerate(tree.scenarios):
        if all(tree.nodes[nid].branch == label for nid in sc.path[1:]):
            return w
    raise TreeError(f"no scenario follows branch '{label}' at every stage")


def tree_to_json(tree: ScenarioTree) -> str:
    doc = {
        "stages": tree.stages,
        "branching": tree.branching,
        "prop_min": tree.prop_min,
        "prop_max": tree.prop_max,
        "nodes": [
            {"id": n.id, "stage": n.stage, "parent": n.parent, "branch": n.branch,
             "value": n.realized_value, "prob": n.branch_prob,
             "mean": n.distribution.mean, "std": n.distribution.std}
            for n in tree.nodes],
        "scenarios": [
            {"path": list(s.path), "probability": s.probability}
            for s in tree.scenarios],
    }
    return json.dumps(doc, indent=2)


def tree_from_json(text: str) -> ScenarioTree:
    doc = json.loads(text)
    nodes = tuple(
        TreeNode(d["id"], d["stage"], d["parent"], d["branch"], d["value"],
                 NodeDistribution(d["mean"], d["std"]), d["prob"])
        for d in doc["nodes"])
    scenarios = tuple(
        Scenario(tuple(d["path"]), d["probability"]) for d in doc["scenarios"])
    bundles = {n.id: tuple(w for w, sc in enumerate(scenarios) if n.id in sc.path)
               for n in nodes}
    by_stage: dict[int, tuple[int, ...]] = {}
    for n in nodes:
        by_stage.setdefault(n.stage, ())
        by_stage[n.stage] += (n.id,)
    return ScenarioTree(stages=doc["stages"], branching=doc["branching"],
                        nodes=nodes, scenarios=scenarios, bundles=bundles,
                        prop_min=doc["prop_min"], prop_max=doc["prop_max"],
                        _by_stage=by_stage)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ventalloc.tree import (TABLE1_PROP_BOUNDS, NodeDistribution, TreeError,
                            build_tree, bundles_at, conditional_quantiles,
                            scenario_by_branches, table1_std_policy,
                            tree_from_json, tree_to_json)

ROOT = NodeDistribution(mean=0.26, std=0.05)


def test_conditional_quantiles_root_row():
    low, med, high = conditional_quantiles(ROOT)
    assert low == pytest.approx(0.21, abs=0.005)
    assert med == pytest.approx(0.26, abs=1e-12)
    assert high == pytest.approx(0.31, abs=0.005)


def test_conditional_quantiles_degenerate():
    assert conditional_quantiles(NodeDistribution(0.26, 0.0)) == (0.26, 0.26, 0.26)


def test_conditional_quantiles_node1_row():
    # std recovered by inverting z_0.15 against the published low value 0.17
    low, med, high = conditional_quantiles(NodeDistribution(0.21, 0.0386))
    assert low == pytest.approx(0.17, abs=0.005)
    assert med == pytest.approx(0.21, abs=1e-12)
    assert high == pytest.approx(0.25, abs=0.005)


def test_conditional_quantiles_clamping():
    low, med, high = conditional_quantiles(NodeDistribution(0.31, 0.1833),
                                           prop_min=0.15, prop_max=0.40)
    assert low == 0.15
    assert high == 0.40
    assert med == pytest.approx(0.31, abs=1e-12)


def test_distribution_validation():
    with pytest.raises(TreeError):
        NodeDistribution(-0.1, 0.05)
    with pytest.raises(TreeError):
        NodeDistribution(1.1, 0.05)
    with pytest.raises(TreeError):
        NodeDistribution(0.3, -0.01)
    with pytest.raises(TreeError):
        NodeDistribution(0.3, 0.05, lower_q=0.9, upper_q=0.1)


def test_build_tree_node3_children_match_published_row():
    tree = build_tree(3, ROOT, table1_std_policy(3), prop_bounds=TABLE1_PROP_BOUNDS)
    children = tree.children(3)
    assert children == (10, 11, 12)
    values = [tree.nodes[c].realized_value for c in children]
    assert values[0] == pytest.approx(0.12, abs=0.01)
    assert values[1] == pytest.approx(0.31, abs=0.01)
    assert values[2] == pytest.approx(0.50, abs=0.01)


def test_build_tree_single_stage():
    tree = build_tree(1, ROOT, 0.05)
    assert len(tree.nodes) == 1
    assert len(tree.scenarios) == 1
    assert tree.scenarios[0].probability == 1.0
    assert tree.sigma2_path(0) == (0.26,)


def test_build_tree_two_stage_low_low_probability():
    tree = build_tree(3, ROOT, 0.05)
    assert len(tree.scenarios) == 9
    # scenario 0 follows the low branch twice
    path = tree.scenarios[0].path
    assert all(tree.nodes[n].branch == "low" for n in path[1:])
    assert tree.scenarios[0].probability == pytest.approx(0.09, abs=1e-15)


def test_bundles():
    tree = build_tree(3, ROOT, 0.05)
    assert bundles_at(tree, 0) == tuple(range(9))
    leaf = tree.nodes_at_stage(2)[0]
    assert bundles_at(tree, leaf) == (0,)
    assert bundles_at(tree, 1) == (0, 1, 2)
    with pytest.raises(TreeError):
        bundles_at(tree, 99)


def test_bundles_partition_each_stage():
    tree = build_tree(4, ROOT, 0.04)
    for stage in range(tree.stages):
        seen: list[int] = []
        for node_id in tree.nodes_at_stage(stage):
            chunk = bundles_at(tree, node_id)
            assert not set(chunk) & set(seen)
            seen.extend(chunk)
        assert sorted(seen) == list(range(len(tree.scenarios)))


@settings(max_examples=40, deadline=None)
@given(stages=st.integers(1, 6), branching=st.integers(2, 3))
def test_probability_mass(stages, branching):
    probs = [0.3, 0.4, 0.3] if branching == 3 else [0.5, 0.5]
    tree = build_tree(stages, ROOT, 0.03, probs=probs)
    total = sum(s.probability for s in tree.scenarios)
    assert abs(total - 1.0) <= 1e-12
    assert len(tree.scenarios) == branching ** (stages - 1)


def test_monotone_quantiles_every_node():
    tree = build_tree(4, ROOT, table1_std_policy(4), prop_bounds=(0.0, 0.99))
    for node in tree.nodes:
        if not tree.children(node.id):
            continue
        vals = [tree.nodes[c].realized_value for c in tree.children(node.id)]
        assert vals == sorted(vals)


def test_reproducibility():
    a = build_tree(4, ROOT, table1_std_policy(4))
    b = build_tree(4, ROOT, table1_std_policy(4))
    assert [n.realized_value for n in a.nodes] == [n.realized_value for n in b.nodes]
    assert [s.probability for s in a.scenarios] == [s.probability for s in b.scenarios]


def test_json_round_trip():
    tree = build_tree(3, ROOT, table1_std_policy(3), prop_bounds=TABLE1_PROP_BOUNDS)
    clone = tree_from_json(tree_to_json(tree))
    assert clone.stages == tree.stages
    assert [n.realized_value for n in clone.nodes] == \
        [n.realized_value for n in tree.nodes]
    assert [s.path for s in clone.scenarios] == [s.path for s in tree.scenarios]
    assert clone.bundles == tree.bundles


def test_scenario_by_branches():
    tree = build_tree(3, ROOT, 0.05)
    w = scenario_by_branches(tree, "medium")
    assert tree.sigma2_path(w) == (0.26, 0.26, 0.26)
    with pytest.raises(TreeError):
        scenario_by_branches(tree, "sideways")


def test_build_tree_errors():
    with pytest.raises(TreeError):
        build_tree(0, ROOT, 0.05)
    with pytest.raises(TreeError):
        build_tree(3, ROOT, 0.05, probs=[0.5, 0.4])
    with pytest.raises(TreeError):
        build_tree(3, ROOT, {1: {"low": 0.1, "medium": 0.1, "high": 0.1}})
    with pytest.raises(TreeError):
        build_tree(2, ROOT, {1: {"low": 0.1}})
    with pytest.raises(TreeError):
        build_tree(2, ROOT, -0.05)

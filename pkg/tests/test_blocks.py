"""Structure checks and block partitioning against a brute-force closure."""
from __future__ import annotations

import numpy as np
import pytest

from relcomp.blocks import (
    Block,
    block_state_counts,
    equivalent_node,
    find_blocks,
    validate_structure,
)
from relcomp.errors import ModelError, NumericError
from relcomp.model import Node, SystemModel
from relcomp.rules import DeterministicRule, TabularRule

from gen import random_single_leaf_model


def det(parent_states, lut):
    return DeterministicRule(
        child_states=int(max(lut)), parent_states=tuple(parent_states),
        lut=np.asarray(lut))


def copy_rule(n):
    return DeterministicRule(child_states=n, parent_states=(n,),
                             lut=np.arange(1, n + 1))


def conditions(model):
    return {v.condition for v in validate_structure(model)}


# ---------------------------------------------------------------------------
# structural conditions


def test_case1_structure_accepted(case1_model):
    assert validate_structure(case1_model) == []


def test_condition1_two_leaves():
    m = SystemModel(
        [Node("R", 2), Node("A", 2), Node("B", 2)],
        {"A": (("R",), copy_rule(2)), "B": (("R",), copy_rule(2))},
        {"R": [0.5, 0.5]},
    )
    assert conditions(m) == {1}


def test_condition2_deep_chain():
    m = SystemModel(
        [Node("R", 2), Node("X", 2), Node("Y", 2), Node("S", 2)],
        {"X": (("R",), copy_rule(2)), "Y": (("X",), copy_rule(2)),
         "S": (("Y",), copy_rule(2))},
        {"R": [0.5, 0.5]},
    )
    assert 2 in conditions(m)


def test_condition3_arc_between_leaf_parents():
    m = SystemModel(
        [Node("R1", 2), Node("R2", 2), Node("A", 2), Node("B", 2), Node("S", 2)],
        {"A": (("R1",), copy_rule(2)),
         "B": (("R2", "A"), det((2, 2), [1, 1, 1, 2])),
         "S": (("A", "B"), det((2, 2), [1, 1, 1, 2]))},
        {"R1": [0.5, 0.5], "R2": [0.5, 0.5]},
    )
    assert 3 in conditions(m)


def test_condition4_arc_in_root_layer():
    m = SystemModel(
        [Node("H1", 2), Node("H2", 2), Node("A", 2), Node("B", 2), Node("S", 2)],
        {"H2": (("H1",), copy_rule(2)),
         "A": (("H2",), copy_rule(2)),
         "B": (("H1",), copy_rule(2)),
         "S": (("A", "B"), det((2, 2), [1, 1, 1, 2]))},
        {"H1": [0.5, 0.5]},
    )
    assert 4 in conditions(m)


def test_condition5_root_feeds_leaf_and_dependent():
    m = SystemModel(
        [Node("P", 2), Node("R", 2), Node("A", 2), Node("S", 2)],
        {"A": (("P", "R"), det((2, 2), [1, 1, 1, 2])),
         "S": (("P", "A"), det((2, 2), [1, 1, 1, 2]))},
        {"P": [0.5, 0.5], "R": [0.5, 0.5]},
    )
    assert 5 in conditions(m)


def test_violation_str():
    m = SystemModel(
        [Node("R", 2), Node("A", 2), Node("B", 2)],
        {"A": (("R",), copy_rule(2)), "B": (("R",), copy_rule(2))},
        {"R": [0.5, 0.5]},
    )
    v = validate_structure(m)[0]
    assert str(v).startswith("condition 1:")


def test_find_blocks_requires_valid_structure():
    m = SystemModel(
        [Node("R", 2), Node("A", 2), Node("B", 2)],
        {"A": (("R",), copy_rule(2)), "B": (("R",), copy_rule(2))},
        {"R": [0.5, 0.5]},
    )
    with pytest.raises(ModelError):
        find_blocks(m)


# ---------------------------------------------------------------------------
# partitioning


def test_case1_partition(case1_model):
    part = find_blocks(case1_model)
    assert part.independent_nodes == ("SM",)
    assert len(part.blocks) == 1
    blk = part.blocks[0]
    assert blk.roots == ("C",)
    assert blk.children == ("DF", "HR")
    assert block_state_counts(blk) == (8, 4)


def test_all_roots_means_no_blocks():
    m = SystemModel(
        [Node("R1", 2), Node("R2", 3), Node("S", 2)],
        {"S": (("R1", "R2"), det((2, 3), [1, 1, 1, 1, 1, 2]))},
        {"R1": [0.5, 0.5], "R2": [0.2, 0.3, 0.5]},
    )
    part = find_blocks(m)
    assert part.blocks == ()
    assert part.independent_nodes == ("R1", "R2")


def test_lone_dependent_child_forms_own_block():
    m = SystemModel(
        [Node("H", 2), Node("A", 2), Node("S", 2)],
        {"A": (("H",), copy_rule(2)), "S": (("A",), copy_rule(2))},
        {"H": [0.3, 0.7]},
    )
    part = find_blocks(m)
    assert len(part.blocks) == 1
    assert part.blocks[0].children == ("A",)
    assert part.blocks[0].roots == ("H",)


def test_block_state_counts_products():
    b = Block(roots=("H",), children=("C",), root_radices=(2,),
              child_radices=(3,))
    assert block_state_counts(b) == (6, 3)
    b2 = Block(roots=("H2", "H3"), children=("T1", "T2", "T3"),
               root_radices=(2, 2), child_radices=(3, 3, 3))
    assert block_state_counts(b2) == (108, 27)


def brute_force_partition(model):
    """Independent reference: pairwise merge over shared roots."""
    leaf_parents = list(model.parents[model.leaf])
    dep = [p for p in leaf_parents if not model.is_root(p)]
    groups = [{c} for c in dep]
    changed = True
    while changed:
        changed = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                share = any(
                    set(model.parents[a]) & set(model.parents[b])
                    for a in groups[i] for b in groups[j]
                )
                if share:
                    groups[i] |= groups[j]
                    del groups[j]
                    changed = True
                    break
            if changed:
                break
    indep = {p for p in leaf_parents if model.is_root(p)}
    return indep, {frozenset(g) for g in groups}


def test_partition_matches_brute_force_closure():
    rng = np.random.default_rng(2024)
    for _ in range(60):
        model = random_single_leaf_model(rng)
        part = find_blocks(model)
        want_indep, want_groups = brute_force_partition(model)
        assert set(part.independent_nodes) == want_indep
        got_groups = {frozenset(b.children) for b in part.blocks}
        assert got_groups == want_groups
        # disjoint cover of the leaf's parents
        seen = list(part.independent_nodes)
        for b in part.blocks:
            seen.extend(b.children)
        assert sorted(seen) == sorted(model.parents[model.leaf])
        # block roots are exactly the union of the children's parents
        for b in part.blocks:
            want_roots = set()
            for c in b.children:
                want_roots |= set(model.parents[c])
            assert set(b.roots) == want_roots


def test_partition_order_is_declaration_order():
    rng = np.random.default_rng(99)
    for _ in range(20):
        model = random_single_leaf_model(rng)
        order = {n.id: i for i, n in enumerate(model.nodes)}
        part = find_blocks(model)
        for b in part.blocks:
            assert list(b.children) == sorted(b.children, key=order.__getitem__)
            assert list(b.roots) == sorted(b.roots, key=order.__getitem__)
        blocks_first = [order[b.children[0]] for b in part.blocks]
        assert blocks_first == sorted(blocks_first)


# ---------------------------------------------------------------------------
# equivalent nodes


def test_equivalent_node_decode(case1_model):
    part = find_blocks(case1_model)
    blk = part.blocks[0]
    joint = np.array([0.1, 0.2, 0.3, 0.4])
    eq = equivalent_node(blk, joint)
    assert eq.node.states == 4
    assert eq.decode(1) == (1, 1)
    assert eq.decode(4) == (2, 2)
    assert np.array_equal(eq.marginal, joint)


def test_equivalent_node_single_child_identity():
    b = Block(roots=("H",), children=("A",), root_radices=(2,),
              child_radices=(3,))
    joint = np.array([0.2, 0.3, 0.5])
    eq = equivalent_node(b, joint)
    assert eq.node.states == 3
    assert [eq.decode(k) for k in (1, 2, 3)] == [(1,), (2,), (3,)]


def test_equivalent_node_rejects_bad_joint():
    b = Block(roots=("H",), children=("A",), root_radices=(2,),
              child_radices=(2,))
    with pytest.raises(NumericError):
        equivalent_node(b, np.array([0.5, 0.6]))
    with pytest.raises(ModelError):
        equivalent_node(b, np.array([1.0]))

"""Block decomposition: structural checks, block detection, equivalent nodes.

The inference algorithms assume a single-leaf network shape: one leaf,
whose parents either are roots themselves or have only root parents.
Dependent leaf-parents that share a root parent form a block; a block's
children collapse into one equivalent multistate node whose states
enumerate the children's state combinations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, NumericError
from .model import Node, SystemModel
from .radix import row_to_states, total_states

__all__ = [
    "Violation",
    "Block",
    "Partition",
    "validate_structure",
    "find_blocks",
    "block_state_counts",
    "EquivalentNode",
    "equivalent_node",
]

JOINT_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    """One failed structural condition (numbered 1..4, 5 for overlap)."""

    condition: int
    message: str

    def __str__(self) -> str:
        return f"condition {self.condition}: {self.message}"


@dataclass(frozen=True)
class Block:
    """Dependent leaf-parents plus the roots they share."""

    roots: tuple[str, ...]
    children: tuple[str, ...]
    root_radices: tuple[int, ...]
    child_radices: tuple[int, ...]


@dataclass(frozen=True)
class Partition:
    """All blocks plus the leaf-parents that are plain roots."""

    blocks: tuple[Block, ...]
    independent_nodes: tuple[str, ...]


def validate_structure(model: SystemModel) -> list[Violation]:
    """Check the single-leaf shape; returns violations (empty means ok).

    Conditions: (1) exactly one leaf; (2) every parent of a leaf-parent
    is a root; (3) no arc between leaf-parents; (4) no arc between the
    roots feeding leaf-parents.  A fifth check flags a root that feeds
    both the leaf and a dependent leaf-parent, which would break the
    block/independent partition.
    """
    violations: list[Violation] = []
    leaves = model.leaf_candidates()
    if len(leaves) != 1:
        violations.append(
            Violation(1, f"expected exactly one leaf, found {len(leaves)}: {list(leaves)}")
        )
        return violations

    leaf = leaves[0]
    leaf_parents = model.parents.get(leaf, ())
    grandparents: list[str] = []
    seen: set[str] = set()
    for p in leaf_parents:
        for g in model.parents.get(p, ()):
            if g not in seen:
                seen.add(g)
                grandparents.append(g)

    for g in grandparents:
        if not model.is_root(g):
            violations.append(
                Violation(2, f"{g!r} feeds a leaf-parent but is not a root")
            )

    lp_set = set(leaf_parents)
    for p in leaf_parents:
        for q in model.parents.get(p, ()):
            if q in lp_set:
                violations.append(Violation(3, f"arc between leaf-parents {q!r} -> {p!r}"))

    gp_set = set(grandparents)
    for g in grandparents:
        for h in model.parents.get(g, ()):
            if h in gp_set:
                violations.append(
                    Violation(4, f"arc between root-layer nodes {h!r} -> {g!r}")
                )

    for p in leaf_parents:
        if model.is_root(p) and p in gp_set:
            violations.append(
                Violation(5, f"root {p!r} feeds both the leaf and a dependent node")
            )
    return violations


def find_blocks(model: SystemModel) -> Partition:
    """Partition the leaf's parents into blocks and independent roots.

    Blocks are the connected components of "shares a root parent" over
    the non-root leaf-parents; a dependent node sharing nothing forms a
    block by itself.
    """
    violations = validate_structure(model)
    if violations:
        raise ModelError(
            "model violates the single-leaf structure: "
            + "; ".join(str(v) for v in violations)
        )

    order = {n.id: i for i, n in enumerate(model.nodes)}
    leaf_parents = list(model.parents.get(model.leaf, ()))
    dependent = [p for p in leaf_parents if not model.is_root(p)]
    independent = sorted(
        (p for p in leaf_parents if model.is_root(p)), key=order.__getitem__
    )

    # union-find over dependent children, merged through shared roots
    parent_ptr = {c: c for c in dependent}

    def find(x: str) -> str:
        while parent_ptr[x] != x:
            parent_ptr[x] = parent_ptr[parent_ptr[x]]
            x = parent_ptr[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent_ptr[rb] = ra

    owner: dict[str, str] = {}
    for c in dependent:
        for r in model.parents[c]:
            if r in owner:
                union(owner[r], c)
            else:
                owner[r] = c

    groups: dict[str, list[str]] = {}
    for c in dependent:
        groups.setdefault(find(c), []).append(c)

    blocks: list[Block] = []
    for members in groups.values():
        children = tuple(sorted(members, key=order.__getitem__))
        roots_seen: set[str] = set()
        roots: list[str] = []
        for c in children:
            for r in model.parents[c]:
                if r not in roots_seen:
                    roots_seen.add(r)
                    roots.append(r)
        roots_t = tuple(sorted(roots, key=order.__getitem__))
        blocks.append(
            Block(
                roots=roots_t,
                children=children,
                root_radices=tuple(model.states(r) for r in roots_t),
                child_radices=tuple(model.states(c) for c in children),
            )
        )
    blocks.sort(key=lambda b: order[b.children[0]])
    return Partition(blocks=tuple(blocks), independent_nodes=tuple(independent))


def block_state_counts(b: Block) -> tuple[int, int]:
    """(all-node combination count, children-only combination count)."""
    t_children = total_states(b.child_radices)
    t_all = total_states(tuple(b.root_radices) + tuple(b.child_radices))
    return t_all, t_children


@dataclass(frozen=True)
class EquivalentNode:
    """A block folded into one multistate node over child combinations."""

    node: Node
    children: tuple[str, ...]
    child_radices: tuple[int, ...]
    marginal: np.ndarray

    def decode(self, state: int) -> tuple[int, ...]:
        """1-based equivalent state -> 1-based child state combination."""
        return row_to_states(state, self.child_radices)


def equivalent_node(b: Block, joint: np.ndarray) -> EquivalentNode:
    """Build the equivalent node for a block from its children's joint."""
    _, t_children = block_state_counts(b)
    arr = np.asarray(joint, dtype=np.float64)
    if arr.shape != (t_children,):
        raise ModelError(
            f"joint has {arr.size} entries, block children enumerate {t_children}"
        )
    if (arr < 0).any() or abs(arr.sum() - 1.0) > JOINT_TOL:
        raise NumericError(
            f"block joint is not a distribution (sum {arr.sum()!r})"
        )
    return EquivalentNode(
        node=Node(id="+".join(b.children), states=t_children),
        children=b.children,
        child_radices=b.child_radices,
        marginal=arr.copy(),
    )

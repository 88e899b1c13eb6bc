"""Exact inference on compressed tables: block joints, conditionals, queries.

Three layers:

* block_joint folds a block's root marginals through its child rules and
  eliminates the roots, yielding the children's joint distribution.
* independent_infer answers Pr(leaf | Q, E) when the leaf's parents are
  mutually independent, by streaming the conditional table with query
  parents reordered leftmost and eliminating the rest under marginal
  weights.
* dependent_infer dispatches on the query: no query, query over
  independent parents only, or query touching block children.  The last
  case extends the query set with whole equivalent nodes, multiplies in
  their marginals, marginalizes back down to the asked nodes, and divides
  by the query probability.

All heavy state spaces stay compressed; only result-sized vectors are
ever dense.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .blocks import Block, EquivalentNode, Partition, equivalent_node, find_blocks
from .ctable import decompress
from .eliminate import eliminate_last, reorder_generate
from .errors import (
    DomainError,
    NumericError,
    SizeGuardError,
    UndefinedConditionalError,
)
from .model import Node, SystemModel
from .radix import decode_offsets, encode_offsets, total_states
from .rules import Rule

__all__ = [
    "QuerySpec",
    "Distribution",
    "InferenceResult",
    "block_joint",
    "independent_infer",
    "dependent_infer",
    "marginalize_keep",
]

SUM_TOL = 1e-9
MASS_TOL = 1e-12
DENSE_GUARD = 10_000_000
CHUNK = 1 << 16


@dataclass(frozen=True)
class QuerySpec:
    """Query targets and observed evidence, both as node -> 1-based state."""

    query: dict[str, int] = field(default_factory=dict)
    evidence: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        overlap = set(self.query) & set(self.evidence)
        if overlap:
            raise DomainError(f"nodes both queried and evidenced: {sorted(overlap)}")


@dataclass
class Distribution:
    """Probability vector over a labeled mixed-radix state space."""

    values: np.ndarray
    radices: tuple[int, ...]
    names: tuple[str, ...]
    normalized: bool = True

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.radices = tuple(int(r) for r in self.radices)
        self.names = tuple(self.names)
        if len(self.names) != len(self.radices):
            raise DomainError("one name per radix required")
        if self.values.shape != (total_states(self.radices),):
            raise DomainError(
                f"{self.values.size} values for a {total_states(self.radices)}-state space"
            )
        if (self.values < 0).any():
            raise NumericError("negative probability entry")
        if self.normalized and abs(self.values.sum() - 1.0) > SUM_TOL:
            raise NumericError(
                f"distribution sums to {self.values.sum()!r}, outside tolerance"
            )

    @property
    def mass(self) -> float:
        return float(self.values.sum())

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DomainError(f"unknown node {name!r} in distribution") from None

    def at(self, **states: int) -> float:
        """Value at the given 1-based states (all axes required)."""
        if set(states) != set(self.names):
            raise DomainError("all axes must be specified")
        cols = np.array(
            [[states[n] - 1 for n in self.names]], dtype=np.int64
        )
        return float(self.values[encode_offsets(cols, self.radices)[0]])


@dataclass(frozen=True)
class InferenceResult:
    """Leaf distribution plus how it was obtained."""

    distribution: Distribution
    situation: int
    query: dict[str, int]
    evidence: dict[str, int]
    pre_normalization_mass: float

    @property
    def values(self) -> np.ndarray:
        return self.distribution.values


# --------------------------------------------------------------------------
# table sources


class _BlockJointSource:
    """Joint over [children..., roots...] with roots varying fastest."""

    def __init__(self, block: Block, model: SystemModel, root_weights: Mapping[str, np.ndarray]) -> None:
        self.block = block
        self.radices = tuple(block.child_radices) + tuple(block.root_radices)
        n = len(block.children)
        root_col = {r: n + i for i, r in enumerate(block.roots)}
        self._children = []
        for i, c in enumerate(block.children):
            rule = model.rules[c]
            cols = [root_col[p] for p in model.parents[c]]
            self._children.append((i, cols, rule))
        self._weights = [
            np.asarray(root_weights[r], dtype=np.float64) for r in block.roots
        ]
        self._n = n

    def values_for_states(self, states0: np.ndarray) -> np.ndarray:
        out = np.ones(states0.shape[0], dtype=np.float64)
        for i, cols, rule in self._children:
            out *= rule.prob_for_states(states0[:, cols], states0[:, i])
        for j, w in enumerate(self._weights):
            out *= w[states0[:, self._n + j]]
        return out


class _RuleConditionalSource:
    """Conditional table over [leaf, parents...] in rule parent order."""

    def __init__(self, leaf_states: int, rule: Rule) -> None:
        self.rule = rule
        self.radices = (leaf_states,) + tuple(rule.parent_states)

    def values_for_states(self, states0: np.ndarray) -> np.ndarray:
        return self.rule.prob_for_states(states0[:, 1:], states0[:, 0])


class _EquivalentLeafRule(Rule):
    """Leaf rule re-indexed over equivalent nodes in place of block children.

    Parent slots follow the reduced order handed in; equivalent slots
    decode into the original children's states before delegating.
    """

    def __init__(
        self,
        inner: Rule,
        slots: Sequence[object],
        canonical_index: Mapping[str, int],
    ) -> None:
        # slots: node id (independent) or EquivalentNode
        parent_states = []
        for slot in slots:
            if isinstance(slot, EquivalentNode):
                parent_states.append(slot.node.states)
            else:
                parent_states.append(inner.parent_states[canonical_index[slot]])
        object.__setattr__(self, "child_states", inner.child_states)
        object.__setattr__(self, "parent_states", tuple(parent_states))
        object.__setattr__(self, "_inner", inner)
        object.__setattr__(self, "_slots", tuple(slots))
        object.__setattr__(self, "_canon", dict(canonical_index))

    def _expand(self, states0: np.ndarray) -> np.ndarray:
        full = np.empty(
            (states0.shape[0], len(self._inner.parent_states)), dtype=np.int64
        )
        for j, slot in enumerate(self._slots):
            if isinstance(slot, EquivalentNode):
                decoded = decode_offsets(states0[:, j], slot.child_radices)
                for child, col in zip(slot.children, decoded.T):
                    full[:, self._canon[child]] = col
            else:
                full[:, self._canon[slot]] = states0[:, j]
        return full

    def _rows_for_offsets(self, offs: np.ndarray) -> np.ndarray:
        states0 = decode_offsets(offs, self.parent_states)
        return self._inner._rows_for_offsets(
            encode_offsets(self._expand(states0), self._inner.parent_states)
        )

    def _probs_at(self, offs: np.ndarray, child_state0) -> np.ndarray:
        states0 = decode_offsets(offs, self.parent_states)
        return self._inner._probs_at(
            encode_offsets(self._expand(states0), self._inner.parent_states),
            child_state0,
        )


# --------------------------------------------------------------------------
# block joint


def block_joint(
    b: Block,
    model: SystemModel,
    *,
    root_weights: Mapping[str, np.ndarray] | None = None,
    t: float | None = None,
) -> Distribution:
    """Joint distribution of a block's children, roots eliminated.

    The [children, roots] joint is streamed in compressed form (roots
    varying fastest) and the roots are summed out last-first; only the
    final children-joint is decompressed.
    """
    weights = dict(root_weights or {})
    for r in b.roots:
        if r not in weights:
            weights[r] = model.root_marginal(r, t)
    source = _BlockJointSource(b, model, weights)
    ct = reorder_generate(source, tuple(range(len(source.radices))), chunk_size=CHUNK)
    for n in reversed(b.root_radices):
        ct = eliminate_last(ct, n)
    values = decompress(ct)
    total = values.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise NumericError(f"block joint mass {total!r} is not 1")
    return Distribution(
        values=values / total,
        radices=b.child_radices,
        names=b.children,
    )


# --------------------------------------------------------------------------
# independent inference core


def _point_mass(n: int, state: int) -> np.ndarray:
    w = np.zeros(n)
    w[state - 1] = 1.0
    return w


def _check_state(name: str, state: int, n: int) -> None:
    if not (1 <= state <= n):
        raise DomainError(f"state {state} out of range for {name!r} ({n} states)")


def _conditional_table(
    leaf_states: int,
    parent_ids: Sequence[str],
    parent_radices: Sequence[int],
    marginals: Mapping[str, np.ndarray],
    rule: Rule,
    query_ids: Sequence[str],
    evidence: Mapping[str, int],
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Dense Pr(leaf | query parents, E) over [leaf, query parents...].

    Non-query parents are eliminated rightmost-first with their marginal
    (or evidence point-mass) as weights; the result axis order is the
    leaf followed by query_ids in the given order.
    """
    index = {p: i for i, p in enumerate(parent_ids)}
    for q in query_ids:
        if q not in index:
            raise DomainError(f"query node {q!r} is not a parent here")
    for e in evidence:
        if e not in index:
            raise DomainError(f"evidence node {e!r} is not a parent here")

    weights: dict[str, np.ndarray] = {}
    for p in parent_ids:
        w = np.asarray(marginals[p], dtype=np.float64)
        if p in evidence:
            state = evidence[p]
            _check_state(p, state, len(w))
            if w[state - 1] <= 0.0:
                raise UndefinedConditionalError(
                    f"evidence {p}={state} has zero probability"
                )
            w = _point_mass(len(w), state)
        weights[p] = w

    rest = [p for p in parent_ids if p not in set(query_ids)]
    perm = (
        (0,)
        + tuple(1 + index[q] for q in query_ids)
        + tuple(1 + index[p] for p in rest)
    )
    source = _RuleConditionalSource(leaf_states, rule)
    ct = reorder_generate(source, perm, chunk_size=CHUNK)
    for p in reversed(rest):
        ct = eliminate_last(ct, len(weights[p]), weights=weights[p])

    out_radices = (leaf_states,) + tuple(parent_radices[index[q]] for q in query_ids)
    if total_states(out_radices) > DENSE_GUARD:
        raise SizeGuardError("conditional table too large to decompress")
    return decompress(ct), out_radices


def independent_infer(
    leaf: Node,
    parents: Sequence[tuple[Node, np.ndarray]],
    rule: Rule,
    spec: QuerySpec,
) -> InferenceResult:
    """Pr(leaf | Q, E) for a leaf whose parents are mutually independent."""
    parent_ids = [n.id for n, _ in parents]
    parent_radices = [n.states for n, _ in parents]
    marginals = {n.id: np.asarray(m, dtype=np.float64) for n, m in parents}
    for n, m in parents:
        if m.shape != (n.states,):
            raise DomainError(f"marginal for {n.id!r} has wrong length")

    known = set(parent_ids)
    for name in list(spec.query) + list(spec.evidence):
        if name not in known:
            raise DomainError(f"{name!r} is not a parent of {leaf.id!r}")

    query_ids = [p for p in parent_ids if p in spec.query]
    table, radices = _conditional_table(
        leaf.states, parent_ids, parent_radices, marginals, rule,
        query_ids, spec.evidence,
    )

    # Pr(Q, E) must be positive for the conditional to exist
    q_mass = 1.0
    for q in query_ids:
        state = spec.query[q]
        _check_state(q, state, marginals[q].size)
        q_mass *= float(marginals[q][state - 1])
    if q_mass <= 0.0:
        raise UndefinedConditionalError("query states have zero joint probability")

    cube = table.reshape(radices)
    sel: list[object] = [slice(None)]
    for q in query_ids:
        sel.append(spec.query[q] - 1)
    vector = np.ascontiguousarray(cube[tuple(sel)], dtype=np.float64)
    mass = float(vector.sum())
    if abs(mass - 1.0) > SUM_TOL:
        raise NumericError(f"conditional mass {mass!r} is not 1")
    return InferenceResult(
        distribution=Distribution(
            values=vector / mass, radices=(leaf.states,), names=(leaf.id,)
        ),
        situation=2 if query_ids else 1,
        query=dict(spec.query),
        evidence=dict(spec.evidence),
        pre_normalization_mass=mass,
    )


# --------------------------------------------------------------------------
# marginalization on labeled distributions


class _DenseDistributionSource:
    def __init__(self, d: Distribution) -> None:
        self.radices = d.radices
        self._values = d.values

    def values_for_states(self, states0: np.ndarray) -> np.ndarray:
        return self._values[encode_offsets(states0, self.radices)]


def marginalize_keep(d: Distribution, keep: Sequence[str]) -> Distribution:
    """Reorder the kept axes leftmost and sum out everything else."""
    keep = list(keep)
    axes = [d.axis(name) for name in keep]
    if len(set(axes)) != len(axes):
        raise DomainError("kept nodes must be distinct")
    rest = [i for i in range(len(d.radices)) if i not in set(axes)]
    perm = tuple(axes + rest)
    source = _DenseDistributionSource(d)
    ct = reorder_generate(source, perm, chunk_size=CHUNK)
    for i in reversed(rest):
        ct = eliminate_last(ct, d.radices[i])
    values = decompress(ct)
    if abs(values.sum() - d.mass) > max(MASS_TOL, 1e-12 * max(d.mass, 1.0)):
        raise NumericError("marginalization drifted the total mass")
    return Distribution(
        values=values,
        radices=tuple(d.radices[i] for i in axes),
        names=tuple(keep),
        normalized=d.normalized,
    )


# --------------------------------------------------------------------------
# dependent inference


def _fold_block_evidence(
    joint: Distribution, block: Block, evidence: Mapping[str, int]
) -> Distribution:
    """Condition a block's child joint on evidence over its children."""
    hits = {c: evidence[c] for c in block.children if c in evidence}
    if not hits:
        return joint
    offsets = decode_offsets(
        np.arange(joint.values.size, dtype=np.int64), joint.radices
    )
    mask = np.ones(joint.values.size, dtype=bool)
    for c, state in hits.items():
        _check_state(c, state, joint.radices[joint.axis(c)])
        mask &= offsets[:, joint.axis(c)] == state - 1
    values = np.where(mask, joint.values, 0.0)
    mass = values.sum()
    if mass <= 0.0:
        raise UndefinedConditionalError(
            f"evidence on {sorted(hits)} has zero probability"
        )
    return Distribution(
        values=values / mass, radices=joint.radices, names=joint.names
    )


def dependent_infer(
    model: SystemModel,
    spec: QuerySpec,
    *,
    t: float | None = None,
    partition: Partition | None = None,
    force_situation3: bool = False,
) -> InferenceResult:
    """Pr(leaf | Q, E) for a single-leaf model with dependent parents.

    Evidence may name independent leaf-parents, block roots, or block
    children; queries may name independent leaf-parents or block
    children.  Block-root evidence folds into that root's marginal before
    the block joint is formed; block-child evidence conditions the block
    joint itself.
    """
    if partition is None:
        partition = find_blocks(model)
    leaf_id = model.leaf
    leaf = model.node(leaf_id)
    rule = model.rules[leaf_id]
    canonical = model.parents[leaf_id]
    canonical_index = {p: i for i, p in enumerate(canonical)}

    block_of: dict[str, Block] = {}
    for blk in partition.blocks:
        for c in blk.children:
            block_of[c] = blk
    block_roots = {r for blk in partition.blocks for r in blk.roots}
    independent = set(partition.independent_nodes)

    for name, state in spec.query.items():
        if name in independent or name in block_of:
            _check_state(name, state, model.states(name))
        else:
            raise DomainError(
                f"query node {name!r} must be an independent leaf-parent or a block child"
            )
    for name, state in spec.evidence.items():
        if name in independent or name in block_of or name in block_roots:
            _check_state(name, state, model.states(name))
        else:
            raise DomainError(
                f"evidence node {name!r} must be a leaf-parent, block child, or block root"
            )

    # evidence on block roots folds into their marginals up front
    root_weights: dict[str, np.ndarray] = {}
    for name, state in spec.evidence.items():
        if name in block_roots:
            w = model.root_marginal(name, t)
            if w[state - 1] <= 0.0:
                raise UndefinedConditionalError(
                    f"evidence {name}={state} has zero probability"
                )
            root_weights[name] = _point_mass(len(w), state)

    joints: dict[str, Distribution] = {}
    equivalents: dict[str, EquivalentNode] = {}
    for blk in partition.blocks:
        joint = block_joint(blk, model, root_weights=root_weights, t=t)
        joint = _fold_block_evidence(joint, blk, spec.evidence)
        key = blk.children[0]
        joints[key] = joint
        equivalents[key] = equivalent_node(blk, joint.values)

    # reduced parent slots: independents stay, each block collapses to its
    # equivalent node at the position of its first-listed child
    slots: list[object] = []
    slot_margs: list[tuple[Node, np.ndarray]] = []
    placed: set[str] = set()
    for p in canonical:
        if p in independent:
            slots.append(p)
            slot_margs.append((model.node(p), model.root_marginal(p, t)))
        else:
            blk = block_of[p]
            key = blk.children[0]
            if key in placed:
                continue
            placed.add(key)
            eq = equivalents[key]
            slots.append(eq)
            slot_margs.append((eq.node, eq.marginal))
    reduced_rule = _EquivalentLeafRule(rule, slots, canonical_index)

    touched = [
        blk for blk in partition.blocks
        if any(c in spec.query for c in blk.children)
    ]

    if not touched and not force_situation3:
        # Situations 1 and 2: the reduced network is an independent fan-in
        reduced_evidence = {
            k: v for k, v in spec.evidence.items() if k in independent
        }
        sub = QuerySpec(query=dict(spec.query), evidence=reduced_evidence)
        result = independent_infer(leaf, slot_margs, reduced_rule, sub)
        return InferenceResult(
            distribution=result.distribution,
            situation=result.situation,
            query=dict(spec.query),
            evidence=dict(spec.evidence),
            pre_normalization_mass=result.pre_normalization_mass,
        )

    return _situation3(
        model, spec, leaf, slots, slot_margs, reduced_rule,
        joints, independent, touched, t,
    )


def _situation3(
    model: SystemModel,
    spec: QuerySpec,
    leaf: Node,
    slots: Sequence[object],
    slot_margs: Sequence[tuple[Node, np.ndarray]],
    reduced_rule: Rule,
    joints: Mapping[str, Distribution],
    independent: set[str],
    touched: Sequence[Block],
    t: float | None,
) -> InferenceResult:
    """Query touches block children: extend Q to whole equivalent nodes."""
    touched_keys = {blk.children[0] for blk in touched}
    slot_ids = [
        s.node.id if isinstance(s, EquivalentNode) else s for s in slots
    ]
    marginals = {n.id: m for n, m in slot_margs}
    radix_of = {n.id: n.states for n, _ in slot_margs}

    # extended query: queried independents plus touched equivalent nodes
    qprime: list[str] = []
    for sid, slot in zip(slot_ids, slots):
        if isinstance(slot, EquivalentNode):
            if slot.children[0] in touched_keys:
                qprime.append(sid)
        elif sid in spec.query:
            qprime.append(sid)

    reduced_evidence = {k: v for k, v in spec.evidence.items() if k in independent}
    table, radices = _conditional_table(
        leaf.states,
        slot_ids,
        [radix_of[s] for s in slot_ids],
        marginals,
        reduced_rule,
        qprime,
        reduced_evidence,
    )

    # joint Pr(leaf, Q') = Pr(leaf | Q') * prod of extended-query marginals
    shape = list(radices)
    cube = table.reshape(shape)
    for k, name in enumerate(qprime):
        bshape = [1] * len(shape)
        bshape[k + 1] = shape[k + 1]
        cube = cube * marginals[name].reshape(bshape)
    joint_sq = Distribution(
        values=cube.reshape(-1),
        radices=tuple(radices),
        names=(leaf.id,) + tuple(qprime),
        normalized=False,
    )

    # relabel equivalent axes as their child axes (same enumeration order)
    eq_by_id = {
        s.node.id: s for s in slots if isinstance(s, EquivalentNode)
    }
    new_radices: list[int] = [joint_sq.radices[0]]
    new_names: list[str] = [leaf.id]
    for name, radix in zip(joint_sq.names[1:], joint_sq.radices[1:]):
        eq = eq_by_id.get(name)
        if eq is not None:
            new_radices.extend(eq.child_radices)
            new_names.extend(eq.children)
        else:
            new_radices.append(radix)
            new_names.append(name)
    relabeled = Distribution(
        values=joint_sq.values,
        radices=tuple(new_radices),
        names=tuple(new_names),
        normalized=False,
    )

    keep = [leaf.id] + [n for n in new_names[1:] if n in spec.query]
    joint_sq_kept = marginalize_keep(relabeled, keep)

    # Pr(Q): independents factor directly; each touched block contributes
    # the marginal of its queried children under the block joint
    q_mass = 1.0
    for name, state in spec.query.items():
        if name in independent:
            w = marginals[name]
            _check_state(name, state, len(w))
            q_mass *= float(w[state - 1])
    for blk in touched:
        joint = joints[blk.children[0]]
        queried = [c for c in blk.children if c in spec.query]
        marg = marginalize_keep(joint, queried)
        q_mass *= marg.at(**{c: spec.query[c] for c in queried})
    if q_mass <= 0.0:
        raise UndefinedConditionalError("query states have zero joint probability")

    cube = joint_sq_kept.values.reshape(joint_sq_kept.radices)
    sel: list[object] = [slice(None)]
    for name in joint_sq_kept.names[1:]:
        sel.append(spec.query[name] - 1)
    vector = np.ascontiguousarray(cube[tuple(sel)], dtype=np.float64)
    conditional = vector / q_mass
    mass = float(conditional.sum())
    if abs(mass - 1.0) > SUM_TOL:
        raise NumericError(f"conditional mass {mass!r} is not 1")
    return InferenceResult(
        distribution=Distribution(
            values=conditional / mass, radices=(leaf.states,), names=(leaf.id,)
        ),
        situation=3,
        query=dict(spec.query),
        evidence=dict(spec.evidence),
        pre_normalization_mass=mass,
    )

"""Whole-system evaluation: multilevel propagation and the flat cascade.

Multilevel mode walks the model bottom-up.  Each non-root node's marginal
comes from an independent fan-in computation over its parents; parents
that share root ancestors (common-cause factors) are folded into a local
block first, exactly as the leaf-level machinery does.  Exactness needs
the tree shape this class of models has: every non-root node feeds
exactly one child, and distinct parent groups have disjoint ancestries.
Both conditions are checked, not assumed.

Flat mode instead composes every deterministic layer above the first
into a single system rule over the level-1 nodes, then streams the
system table in bounded chunks, weighting by the level-1 marginals to
produce the leaf distribution, optionally counting the compressed form
of the full table without ever materializing it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .blocks import Block, EquivalentNode, equivalent_node, validate_structure
from .ctable import CountingAssembler, StreamScanner, TableStats
from .errors import DomainError, ModelError, UndefinedConditionalError
from .inference import (
    Distribution,
    QuerySpec,
    _EquivalentLeafRule,
    block_joint,
    independent_infer,
)
from .model import SystemModel, TimeGrid
from .radix import decode_offsets, total_states
from .rules import DeterministicRule

__all__ = [
    "node_marginals",
    "leaf_distribution",
    "flat_leaf_distribution",
    "flat_leaf_report",
    "flat_compress_stats",
    "npt_compress_stats",
    "parent_groups",
    "FlatReport",
    "CurveResult",
    "reliability_curve",
    "reliability_states_for",
]

FLAT_CHUNK = 1 << 18
MAX_FLAT_CHUNK = 1_000_000


def _fold_root_evidence(
    model: SystemModel, evidence: Mapping[str, int] | None, t: float | None
) -> dict[str, np.ndarray]:
    """Point-mass weight vectors for evidenced roots (zero mass rejected)."""
    weights: dict[str, np.ndarray] = {}
    for name, state in (evidence or {}).items():
        if not model.is_root(name):
            raise DomainError(
                f"system-level evidence must name root nodes, got {name!r}"
            )
        w = model.root_marginal(name, t)
        if not (1 <= state <= len(w)):
            raise DomainError(f"state {state} out of range for {name!r}")
        if w[state - 1] <= 0.0:
            raise UndefinedConditionalError(
                f"evidence {name}={state} has zero probability"
            )
        pm = np.zeros(len(w))
        pm[state - 1] = 1.0
        weights[name] = pm
    return weights


def _root_ancestors(model: SystemModel) -> dict[str, frozenset[str]]:
    anc: dict[str, frozenset[str]] = {}
    for name in model.topo_order:
        if model.is_root(name):
            anc[name] = frozenset((name,))
        else:
            s: set[str] = set()
            for p in model.parents[name]:
                s |= anc[p]
            anc[name] = frozenset(s)
    return anc


def _group_parents(
    model: SystemModel, parents: Sequence[str], anc: Mapping[str, frozenset[str]]
) -> list[list[str]]:
    """Partition a parent list into ancestry-sharing groups."""
    groups: list[tuple[set[str], list[str]]] = []
    for p in parents:
        hit = None
        merged: list[tuple[set[str], list[str]]] = []
        for roots, members in groups:
            if roots & anc[p]:
                if hit is None:
                    hit = (roots, members)
                else:
                    hit[0].update(roots)
                    hit[1].extend(members)
                    continue
            merged.append((roots, members))
        if hit is None:
            merged.append((set(anc[p]), [p]))
        else:
            hit[0].update(anc[p])
            hit[1].append(p)
        groups = merged
    order = {p: i for i, p in enumerate(parents)}
    return [sorted(members, key=order.__getitem__) for _, members in groups]


def _local_block(model: SystemModel, members: Sequence[str]) -> Block:
    """Block over dependent siblings; their parents must all be roots."""
    decl = {n.id: i for i, n in enumerate(model.nodes)}
    roots: list[str] = []
    seen: set[str] = set()
    for c in members:
        for r in model.parents[c]:
            if not model.is_root(r):
                raise ModelError(
                    f"dependent nodes {list(members)} have non-root parent {r!r}; "
                    "this shape is outside the supported class"
                )
            if r not in seen:
                seen.add(r)
                roots.append(r)
    roots.sort(key=decl.__getitem__)
    children = tuple(sorted(members, key=decl.__getitem__))
    return Block(
        roots=tuple(roots),
        children=children,
        root_radices=tuple(model.states(r) for r in roots),
        child_radices=tuple(model.states(c) for c in children),
    )


def _fanin_slots(
    model: SystemModel,
    node_id: str,
    marginals: Mapping[str, np.ndarray],
    root_weights: Mapping[str, np.ndarray],
    anc: Mapping[str, frozenset[str]],
    t: float | None,
):
    """Parent slots for one node: equivalents for dependent groups.

    Returns (slots, (node, marginal) pairs, reduced rule).
    """
    parents = model.parents[node_id]
    groups = _group_parents(model, parents, anc)
    group_of: dict[str, list[str]] = {}
    for g in groups:
        for p in g:
            group_of[p] = g

    slots: list[object] = []
    slot_margs: list[tuple[object, np.ndarray]] = []
    placed: set[str] = set()
    for p in parents:
        g = group_of[p]
        if len(g) == 1:
            if model.is_root(p):
                w = root_weights.get(p)
                m = w if w is not None else model.root_marginal(p, t)
            else:
                m = marginals[p]
            slots.append(p)
            slot_margs.append((model.node(p), m))
        else:
            key = g[0]
            if key in placed:
                continue
            placed.add(key)
            if any(model.is_root(q) for q in g):
                raise ModelError(
                    f"root in dependent group {g}: a shared root also feeds "
                    f"{node_id!r} directly, which is outside the supported class"
                )
            blk = _local_block(model, g)
            joint = block_joint(blk, model, root_weights=root_weights, t=t)
            eq = equivalent_node(blk, joint.values)
            slots.append(eq)
            slot_margs.append((eq.node, eq.marginal))

    canonical_index = {p: i for i, p in enumerate(parents)}
    rule = _EquivalentLeafRule(model.rules[node_id], slots, canonical_index)
    return slots, slot_margs, rule


def parent_groups(
    model: SystemModel,
) -> dict[str, list[tuple[tuple[str, ...], tuple[str, ...]]]]:
    """Per non-root node: its parents split into ancestry-sharing groups.

    Each group is (members, roots shared by their ancestries).  Groups of
    size one are independent parents; larger groups need a local block.
    """
    anc = _root_ancestors(model)
    decl = {n.id: i for i, n in enumerate(model.nodes)}
    out: dict[str, list[tuple[tuple[str, ...], tuple[str, ...]]]] = {}
    for name in model.topo_order:
        if model.is_root(name):
            continue
        groups = []
        for g in _group_parents(model, model.parents[name], anc):
            roots: set[str] = set()
            for p in g:
                roots |= anc[p]
            groups.append((tuple(g), tuple(sorted(roots, key=decl.__getitem__))))
        out[name] = groups
    return out


def node_marginals(
    model: SystemModel,
    *,
    t: float | None = None,
    evidence: Mapping[str, int] | None = None,
) -> dict[str, np.ndarray]:
    """Marginal of every node, propagated bottom-up level by level.

    Evidence is restricted to root nodes and folds in as point masses.
    """
    root_weights = _fold_root_evidence(model, evidence, t)
    anc = _root_ancestors(model)

    for name in model.topo_order:
        if not model.is_root(name) and name != model.leaf:
            if len(model.children[name]) != 1:
                raise ModelError(
                    f"non-root node {name!r} feeds {len(model.children[name])} "
                    "children; multilevel propagation needs a tree"
                )

    out: dict[str, np.ndarray] = {}
    for name in model.topo_order:
        if model.is_root(name):
            w = root_weights.get(name)
            out[name] = w.copy() if w is not None else model.root_marginal(name, t)
            continue
        _, slot_margs, rule = _fanin_slots(
            model, name, out, root_weights, anc, t
        )
        res = independent_infer(model.node(name), slot_margs, rule, QuerySpec())
        out[name] = res.values
    return out


def leaf_distribution(
    model: SystemModel,
    *,
    t: float | None = None,
    evidence: Mapping[str, int] | None = None,
    mode: str = "multilevel",
    chunk: int = FLAT_CHUNK,
) -> Distribution:
    """Leaf marginal (or root-conditioned marginal) for a whole system."""
    if mode == "multilevel":
        values = node_marginals(model, t=t, evidence=evidence)[model.leaf]
        return Distribution(
            values=values, radices=(model.states(model.leaf),), names=(model.leaf,)
        )
    if mode == "flat":
        return flat_leaf_distribution(model, t=t, evidence=evidence, chunk=chunk)
    raise DomainError(f"unknown mode {mode!r}")


# --------------------------------------------------------------------------
# flat mode


class _FlatComposer:
    """Composes all layers above level 1 into one vectorized evaluator.

    Level-1 nodes are the non-roots whose parents are all roots.  Every
    node above them must be deterministic and fed only by level-1 or
    higher nodes.  Dependent level-1 nodes enter as equivalent-node axes
    that decode to their member states on the fly.
    """

    def __init__(
        self,
        model: SystemModel,
        root_weights: Mapping[str, np.ndarray],
        t: float | None,
    ) -> None:
        self.model = model
        leaf = model.leaf
        level1 = [
            n.id
            for n in model.nodes
            if not model.is_root(n.id)
            and all(model.is_root(p) for p in model.parents[n.id])
        ]
        if not level1:
            raise ModelError("flat mode needs at least one level-1 node")
        upper = [
            name
            for name in model.topo_order
            if not model.is_root(name) and name not in set(level1)
        ]
        l1_set = set(level1)
        for name in upper:
            rule = model.rules[name]
            if not isinstance(rule, DeterministicRule):
                raise ModelError(
                    f"flat mode needs deterministic upper layers; {name!r} is not"
                )
            for p in model.parents[name]:
                if model.is_root(p):
                    raise ModelError(
                        f"root {p!r} feeds {name!r} above level 1; flat mode "
                        "supports roots only below level-1 nodes"
                    )
        if leaf in l1_set:
            raise ModelError("flat mode needs at least two levels")

        anc = _root_ancestors(model)
        groups = _group_parents(model, level1, anc)

        self.slots: list[object] = []
        self.weights: list[np.ndarray] = []
        self.axis_names: list[str] = []
        member_axis: dict[str, tuple[int, EquivalentNode | None]] = {}
        for g in groups:
            if len(g) == 1:
                name = g[0]
                slots_idx = len(self.slots)
                self.slots.append(name)
                _, slot_margs, rule = _fanin_slots(
                    model, name, {}, root_weights, anc, t
                )
                res = independent_infer(
                    model.node(name), slot_margs, rule, QuerySpec()
                )
                self.weights.append(res.values)
                self.axis_names.append(name)
                member_axis[name] = (slots_idx, None)
            else:
                blk = _local_block(model, g)
                joint = block_joint(blk, model, root_weights=root_weights, t=t)
                eq = equivalent_node(blk, joint.values)
                slots_idx = len(self.slots)
                self.slots.append(eq)
                self.weights.append(eq.marginal)
                self.axis_names.append(eq.node.id)
                for c in eq.children:
                    member_axis[c] = (slots_idx, eq)

        self.radices = tuple(
            s.node.states if isinstance(s, EquivalentNode) else model.states(s)
            for s in self.slots
        )
        self.total = total_states(self.radices)
        self._member_axis = member_axis
        self._upper = upper
        self._leaf = leaf
        self.leaf_states = model.states(leaf)

    def eval(
        self, states0: np.ndarray, *, with_weights: bool = True
    ) -> tuple[np.ndarray, np.ndarray | None, int]:
        """(leaf states0, row weights, working bytes) for slot-state rows."""
        cols: dict[str, np.ndarray] = {}
        live = states0.nbytes
        for j, slot in enumerate(self.slots):
            if isinstance(slot, EquivalentNode):
                decoded = decode_offsets(states0[:, j], slot.child_radices)
                live += decoded.nbytes
                for c, col in zip(slot.children, decoded.T):
                    cols[c] = col
            else:
                cols[slot] = states0[:, j]
        w = None
        if with_weights:
            w = np.ones(states0.shape[0])
            for j in range(len(self.slots)):
                w *= self.weights[j][states0[:, j]]
            live += w.nbytes
        for name in self._upper:
            rule = self.model.rules[name]
            parents = self.model.parents[name]
            # accumulate the mixed-radix offset in place of stacking columns
            acc = cols[parents[0]].copy()
            for p, radix in zip(parents[1:], rule.parent_states[1:]):
                acc *= radix
                acc += cols[p]
            cols[name] = rule.lut[acc] - 1
            live += acc.nbytes + cols[name].nbytes
        return cols[self._leaf], w, live


@dataclass(frozen=True)
class FlatReport:
    """What one flat pass measured."""

    distribution: Distribution
    stats: TableStats | None
    dense_equivalent_bytes: int
    chunk_entries: int
    peak_table_bytes: int


def _flat_pass(
    model: SystemModel,
    *,
    t: float | None,
    evidence: Mapping[str, int] | None,
    chunk: int,
    count_compressed: bool,
) -> FlatReport:
    if not (1 <= chunk <= MAX_FLAT_CHUNK):
        raise DomainError(f"flat chunk must be within 1..{MAX_FLAT_CHUNK}")
    root_weights = _fold_root_evidence(model, evidence, t)
    composer = _FlatComposer(model, root_weights, t)
    total = composer.total
    k = composer.leaf_states

    # NPT layout: leaf state slowest, then the level-1 axes.  Each entry
    # is Pr(leaf = s | axes) which is 0 or 1, so the leaf marginal is the
    # weighted tally of composed leaf states, one parent-space sweep.
    dense_entries = total * k
    dense_bytes = dense_entries * 8

    acc = np.zeros(k, dtype=np.float64)
    peak = 0
    counting = CountingAssembler() if count_compressed else None
    scanner = StreamScanner(counting) if counting is not None else None

    # NPT entries stream leaf-state-major; the marginal only needs the
    # first sweep, the compressed-size count needs all of them
    sweeps = k if count_compressed else 1
    for s in range(sweeps):
        for start in range(0, total, chunk):
            stop = min(start + chunk, total)
            offs = np.arange(start, stop, dtype=np.int64)
            states0 = decode_offsets(offs, composer.radices)
            leaf0, w, live = composer.eval(states0, with_weights=(s == 0))
            if s == 0:
                acc += np.bincount(leaf0, weights=w, minlength=k)
            live += offs.nbytes + leaf0.nbytes
            if scanner is not None:
                ind = (leaf0 == s).astype(np.float64)
                scanner.feed(ind)
                live += ind.nbytes
            peak = max(peak, live)

    stats = None
    if counting is not None and scanner is not None:
        scanner.flush()
        stats = counting.finish(dense_entries)

    mass = acc.sum()
    dist = Distribution(
        values=acc / mass, radices=(k,), names=(model.leaf,)
    )
    return FlatReport(
        distribution=dist,
        stats=stats,
        dense_equivalent_bytes=dense_bytes,
        chunk_entries=chunk,
        peak_table_bytes=peak,
    )


def flat_leaf_distribution(
    model: SystemModel,
    *,
    t: float | None = None,
    evidence: Mapping[str, int] | None = None,
    chunk: int = FLAT_CHUNK,
) -> Distribution:
    return _flat_pass(
        model, t=t, evidence=evidence, chunk=chunk, count_compressed=False
    ).distribution


def flat_leaf_report(
    model: SystemModel,
    *,
    t: float | None = None,
    evidence: Mapping[str, int] | None = None,
    chunk: int = FLAT_CHUNK,
) -> FlatReport:
    """One flat sweep: leaf distribution plus size accounting, no row count."""
    return _flat_pass(
        model, t=t, evidence=evidence, chunk=chunk, count_compressed=False
    )


def flat_compress_stats(
    model: SystemModel,
    *,
    t: float | None = None,
    evidence: Mapping[str, int] | None = None,
    chunk: int = FLAT_CHUNK,
) -> FlatReport:
    """Stream the whole flat table, counting its compressed size."""
    return _flat_pass(
        model, t=t, evidence=evidence, chunk=chunk, count_compressed=True
    )


def _leaf_table_pass(
    model: SystemModel,
    *,
    t: float | None,
    evidence: Mapping[str, int] | None,
    chunk: int,
) -> FlatReport:
    """Compression stats for a single-layer model's leaf conditional table.

    Streams Pr(leaf = s | slots) leaf-state-major over the reduced parent
    slots (dependent siblings folded into equivalent nodes), tallying the
    leaf marginal from the same sweep.
    """
    if not (1 <= chunk <= MAX_FLAT_CHUNK):
        raise DomainError(f"flat chunk must be within 1..{MAX_FLAT_CHUNK}")
    root_weights = _fold_root_evidence(model, evidence, t)
    anc = _root_ancestors(model)
    margs = node_marginals(model, t=t, evidence=evidence)
    _, slot_margs, rule = _fanin_slots(
        model, model.leaf, margs, root_weights, anc, t
    )
    radices = rule.parent_states
    weights = [np.asarray(m, dtype=np.float64) for _, m in slot_margs]
    k = model.states(model.leaf)
    total = total_states(radices)
    dense_entries = total * k

    acc = np.zeros(k, dtype=np.float64)
    peak = 0
    counting = CountingAssembler()
    scanner = StreamScanner(counting)
    for s in range(k):
        for start in range(0, total, chunk):
            stop = min(start + chunk, total)
            offs = np.arange(start, stop, dtype=np.int64)
            states0 = decode_offsets(offs, radices)
            probs = rule.prob_for_states(states0, s)
            w = np.ones(offs.size)
            for j in range(len(weights)):
                w *= weights[j][states0[:, j]]
            acc[s] += float(probs @ w)
            scanner.feed(probs)
            peak = max(
                peak, offs.nbytes + states0.nbytes + probs.nbytes + w.nbytes
            )
    scanner.flush()
    stats = counting.finish(dense_entries)

    dist = Distribution(
        values=acc / acc.sum(), radices=(k,), names=(model.leaf,)
    )
    return FlatReport(
        distribution=dist,
        stats=stats,
        dense_equivalent_bytes=dense_entries * 8,
        chunk_entries=chunk,
        peak_table_bytes=peak,
    )


def npt_compress_stats(
    model: SystemModel,
    *,
    t: float | None = None,
    evidence: Mapping[str, int] | None = None,
    chunk: int = FLAT_CHUNK,
) -> FlatReport:
    """Compression stats for the system table a model implies.

    Single-layer models stream the leaf's reduced conditional table;
    layered models stream the flat-composed system table.
    """
    if not validate_structure(model):
        return _leaf_table_pass(model, t=t, evidence=evidence, chunk=chunk)
    return _flat_pass(
        model, t=t, evidence=evidence, chunk=chunk, count_compressed=True
    )


# --------------------------------------------------------------------------
# reliability curves


def reliability_states_for(model: SystemModel) -> tuple[int, ...]:
    """States counted as 'working' for R(t): declared, or top-from-3 rule."""
    if model.reliability_states is not None:
        return model.reliability_states
    k = model.states(model.leaf)
    return tuple(range(min(3, k), k + 1))


@dataclass(frozen=True)
class CurveResult:
    times: np.ndarray
    state_probs: np.ndarray  # [len(times), leaf states]
    reliability: np.ndarray
    reliability_states: tuple[int, ...]
    monotone: bool


def reliability_curve(
    model: SystemModel,
    grid: TimeGrid | None = None,
    *,
    mode: str = "multilevel",
    evidence: Mapping[str, int] | None = None,
    threads: int = 1,
    chunk: int = FLAT_CHUNK,
) -> CurveResult:
    """Leaf state probabilities and R(t) across the time grid."""
    if grid is None:
        grid = model.time_grid
    if grid is None:
        raise DomainError("no time grid: give one or declare it in the model")
    if not model.needs_time:
        raise DomainError("reliability curves need lifetime-law marginals")
    times = grid.times()
    rs = reliability_states_for(model)

    def point(t: float) -> np.ndarray:
        return leaf_distribution(
            model, t=float(t), evidence=evidence, mode=mode, chunk=chunk
        ).values

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(point, times))
    else:
        rows = [point(t) for t in times]

    probs = np.vstack(rows)
    mask = np.array([s - 1 for s in rs], dtype=np.int64)
    rel = probs[:, mask].sum(axis=1)
    monotone = bool(np.all(np.diff(rel) <= 1e-9))
    return CurveResult(
        times=times,
        state_probs=probs,
        reliability=rel,
        reliability_states=rs,
        monotone=monotone,
    )

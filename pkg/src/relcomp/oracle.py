"""Ground-truth engines: dense chain-rule enumeration and Monte Carlo.

Everything the compressed path computes is cross-checked against one of
these two.  Enumeration is exact and limited to small joint spaces;
Monte Carlo scales to the full case studies and reports standard errors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SizeGuardError
from .model import SystemModel
from .radix import decode_offsets, encode_offsets, total_states
from .rules import DeterministicRule

__all__ = ["DenseJoint", "enumerate_joint", "MonteCarloResult", "monte_carlo"]

ENUM_GUARD = 10_000_000


@dataclass(frozen=True)
class DenseJoint:
    """Full joint over every node, in model declaration order."""

    names: tuple[str, ...]
    radices: tuple[int, ...]
    values: np.ndarray

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DomainError(f"unknown node {name!r}") from None

    def marginal(self, name: str) -> np.ndarray:
        cube = self.values.reshape(self.radices)
        axes = tuple(i for i in range(len(self.radices)) if i != self.axis(name))
        return cube.sum(axis=axes)

    def joint_of(self, names: list[str]) -> np.ndarray:
        """Joint over the named nodes, their axes in the given order."""
        cube = self.values.reshape(self.radices)
        keep = [self.axis(n) for n in names]
        drop = tuple(i for i in range(len(self.radices)) if i not in set(keep))
        out = cube.sum(axis=drop) if drop else cube
        order = np.argsort(np.argsort(keep))
        return np.ascontiguousarray(np.transpose(out, order))

    def conditional(
        self, target: str, query: dict[str, int], evidence: dict[str, int]
    ) -> np.ndarray:
        """Pr(target | query states, evidence states); zero-mass -> error."""
        fixed = {**query, **evidence}
        if target in fixed:
            raise DomainError("target cannot be queried or evidenced")
        sub = self.joint_of([target] + list(fixed))
        sel: list[object] = [slice(None)]
        for name in fixed:
            sel.append(fixed[name] - 1)
        vec = np.ascontiguousarray(sub[tuple(sel)], dtype=np.float64)
        mass = vec.sum()
        if mass <= 0.0:
            raise ZeroDivisionError("conditioning event has zero probability")
        return vec / mass


def enumerate_joint(model: SystemModel, *, t: float | None = None) -> DenseJoint:
    """Exact chain-rule joint over all nodes (size-guarded, vectorized)."""
    names = tuple(n.id for n in model.nodes)
    radices = tuple(n.states for n in model.nodes)
    total = total_states(radices)
    if total > ENUM_GUARD:
        raise SizeGuardError(f"joint space of {total} states exceeds the oracle guard")
    col = {name: i for i, name in enumerate(names)}

    values = np.ones(total, dtype=np.float64)
    states0 = decode_offsets(np.arange(total, dtype=np.int64), radices)
    for name in names:
        if model.is_root(name):
            w = model.root_marginal(name, t)
            values *= w[states0[:, col[name]]]
        else:
            rule = model.rules[name]
            parent_cols = [col[p] for p in model.parents[name]]
            values *= rule.prob_for_states(
                states0[:, parent_cols], states0[:, col[name]]
            )
    return DenseJoint(names=names, radices=radices, values=values)


@dataclass(frozen=True)
class MonteCarloResult:
    """Leaf state tallies from forward sampling."""

    node: str
    estimate: np.ndarray
    std_error: np.ndarray
    samples: int
    seed: int


def monte_carlo(
    model: SystemModel,
    samples: int,
    seed: int,
    *,
    t: float | None = None,
    node: str | None = None,
    chunk: int = 1 << 18,
) -> MonteCarloResult:
    """Forward-sample the whole network and tally one node's states.

    Roots are drawn from their marginals; every other node is evaluated
    in topological order by sampling its rule row.  The seed spawns one
    child RNG per chunk, so a fixed (seed, chunk) pair reproduces the
    estimate exactly and chunks are safe to run in parallel.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    target = node or model.leaf
    k = model.states(target)
    counts = np.zeros(k, dtype=np.int64)

    root_marg = {r: model.root_marginal(r, t) for r in model.root_ids}
    seq = np.random.SeedSequence(seed)
    n_chunks = (samples + chunk - 1) // chunk
    children_seeds = seq.spawn(n_chunks)

    for ci in range(n_chunks):
        n = min(chunk, samples - ci * chunk)
        rng = np.random.default_rng(children_seeds[ci])
        states0: dict[str, np.ndarray] = {}
        for name in model.topo_order:
            if model.is_root(name):
                w = root_marg[name]
                states0[name] = rng.choice(len(w), size=n, p=w)
            else:
                rule = model.rules[name]
                pm = np.column_stack([states0[p] for p in model.parents[name]])
                offs = encode_offsets(pm, rule.parent_states)
                if isinstance(rule, DeterministicRule):
                    states0[name] = rule.lut[offs] - 1
                else:
                    rows = rule._rows_for_offsets(offs)
                    u = rng.random(n)
                    states0[name] = (rows.cumsum(axis=1) < u[:, None]).sum(axis=1)
        counts += np.bincount(states0[target], minlength=k)

    p = counts / samples
    se = np.sqrt(p * (1.0 - p) / samples)
    return MonteCarloResult(
        node=target, estimate=p, std_error=se, samples=samples, seed=seed
    )

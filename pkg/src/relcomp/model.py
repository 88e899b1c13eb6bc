"""System models: nodes, lifetime laws, time grids, JSON round-trip.

A model is a DAG of multistate nodes.  Root nodes carry a marginal
distribution, either a static probability vector or a lifetime law that
is discretized on a time grid (state 1 failed, state 2 working).
Every non-root node carries a rule giving its conditional distribution
over the declared parent order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DomainError, ModelError
from .rules import Rule, TabularRule, DeterministicRule, build_rule

__all__ = [
    "ExponentialLife",
    "WeibullLife",
    "LifetimeLaw",
    "failure_probability",
    "TimeGrid",
    "discretize",
    "Node",
    "CommonCause",
    "SystemModel",
    "load_model",
]

MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class ExponentialLife:
    """Constant hazard: F(t) = 1 - exp(-rate * t)."""

    rate: float

    def __post_init__(self) -> None:
        if not (self.rate > 0) or not np.isfinite(self.rate):
            raise ModelError(f"exponential rate must be positive, got {self.rate}")

    def cdf(self, t):
        return 1.0 - np.exp(-self.rate * np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class WeibullLife:
    """F(t) = 1 - exp(-(t / scale) ** shape)."""

    shape: float
    scale: float

    def __post_init__(self) -> None:
        if not (self.shape > 0) or not (self.scale > 0):
            raise ModelError("weibull shape and scale must be positive")

    def cdf(self, t):
        return 1.0 - np.exp(-((np.asarray(t, dtype=np.float64) / self.scale) ** self.shape))


LifetimeLaw = Union[ExponentialLife, WeibullLife]


def failure_probability(law: LifetimeLaw, t):
    """F(t) for a lifetime law; scalar or array t, t < 0 rejected."""
    arr = np.asarray(t, dtype=np.float64)
    if (arr < 0).any():
        raise DomainError("time must be nonnegative")
    out = law.cdf(arr)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


@dataclass(frozen=True)
class TimeGrid:
    """Evenly spaced mission times: start + i * step for i in 0..count-1."""

    start: float
    step: float
    count: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise DomainError("grid start must be nonnegative")
        if not (self.step > 0):
            raise DomainError("grid step must be positive")
        if self.count < 1:
            raise DomainError("grid needs at least one point")

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count, dtype=np.float64)


def discretize(
    laws: Mapping[str, LifetimeLaw], grid: TimeGrid
) -> dict[str, np.ndarray]:
    """Per-component [count, 2] arrays of [P(failed), P(working)] over the grid."""
    ts = grid.times()
    out: dict[str, np.ndarray] = {}
    for key, law in laws.items():
        f = failure_probability(law, ts)
        out[key] = np.column_stack([f, 1.0 - f])
    return out


@dataclass(frozen=True)
class Node:
    id: str
    states: int
    label: str = ""

    def __post_init__(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise ModelError("node id must be a nonempty string")
        if self.states < 2:
            raise ModelError(f"node {self.id!r} needs at least 2 states")


@dataclass(frozen=True)
class CommonCause:
    """A shared root factor feeding several otherwise separate units."""

    factor: str
    children: tuple[str, ...]


def _as_marginal(node: Node, vec) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    if arr.shape != (node.states,):
        raise ModelError(
            f"marginal for {node.id!r} has {arr.size} entries, node has {node.states} states"
        )
    if (arr < 0).any():
        raise ModelError(f"marginal for {node.id!r} has negative entries")
    if abs(arr.sum() - 1.0) > MARGINAL_TOL:
        raise ModelError(f"marginal for {node.id!r} sums to {arr.sum()!r}, not 1")
    return arr


class SystemModel:
    """A validated multistate reliability model."""

    def __init__(
        self,
        nodes: Sequence[Node],
        rules: Mapping[str, tuple[Sequence[str], Rule]],
        marginals: Mapping[str, object],
        *,
        common_cause: Iterable[CommonCause] = (),
        time_grid: TimeGrid | None = None,
        reliability_states: Sequence[int] | None = None,
        name: str = "",
        description: str = "",
    ) -> None:
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.name = name
        self.description = description
        self.time_grid = time_grid
        self.common_cause: tuple[CommonCause, ...] = tuple(common_cause)

        self._by_id: dict[str, Node] = {}
        for node in self.nodes:
            if node.id in self._by_id:
                raise ModelError(f"duplicate node id {node.id!r}")
            self._by_id[node.id] = node

        self.parents: dict[str, tuple[str, ...]] = {}
        self.rules: dict[str, Rule] = {}
        for child, (parent_ids, rule) in rules.items():
            node = self._node(child)
            parent_ids = tuple(parent_ids)
            if not parent_ids:
                raise ModelError(f"rule for {child!r} lists no parents")
            if len(set(parent_ids)) != len(parent_ids):
                raise ModelError(f"rule for {child!r} repeats a parent")
            if child in parent_ids:
                raise ModelError(f"node {child!r} cannot be its own parent")
            shape = tuple(self._node(p).states for p in parent_ids)
            if rule.parent_states != shape:
                raise ModelError(
                    f"rule for {child!r} expects parent states {rule.parent_states}, "
                    f"declared parents have {shape}"
                )
            if rule.child_states != node.states:
                raise ModelError(
                    f"rule for {child!r} yields {rule.child_states} states, "
                    f"node has {node.states}"
                )
            self.parents[child] = parent_ids
            self.rules[child] = rule

        self.static_marginals: dict[str, np.ndarray] = {}
        self.laws: dict[str, LifetimeLaw] = {}
        for node_id, spec_value in marginals.items():
            node = self._node(node_id)
            if node_id in self.rules:
                raise ModelError(f"node {node_id!r} has both a rule and a marginal")
            if isinstance(spec_value, (ExponentialLife, WeibullLife)):
                if node.states != 2:
                    raise ModelError(
                        f"lifetime law on {node_id!r} needs a 2-state node"
                    )
                self.laws[node_id] = spec_value
            else:
                self.static_marginals[node_id] = _as_marginal(node, spec_value)

        for node in self.nodes:
            is_root = node.id not in self.rules
            has_prior = node.id in self.static_marginals or node.id in self.laws
            if is_root and not has_prior:
                raise ModelError(f"root node {node.id!r} has no marginal")
            if not is_root and has_prior:  # caught above, kept for direct ctor misuse
                raise ModelError(f"node {node.id!r} has both a rule and a marginal")

        self.children: dict[str, tuple[str, ...]] = {n.id: () for n in self.nodes}
        kids: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for child, parent_ids in self.parents.items():
            for p in parent_ids:
                kids[p].append(child)
        for node_id, lst in kids.items():
            self.children[node_id] = tuple(lst)

        self.topo_order: tuple[str, ...] = self._toposort()

        if self.laws and self.time_grid is None:
            # permitted: callers must then supply explicit times
            pass

        if reliability_states is None:
            self.reliability_states: tuple[int, ...] | None = None
        else:
            rs = tuple(sorted({int(s) for s in reliability_states}))
            if not rs:
                raise ModelError("reliability_states must name at least one state")
            cands = self.leaf_candidates()
            if len(cands) == 1:
                k = self._node(cands[0]).states
                if any(s < 1 or s > k for s in rs):
                    raise ModelError(f"reliability states {rs} out of leaf range")
            self.reliability_states = rs

    # graph helpers ------------------------------------------------------
    def _node(self, node_id: str) -> Node:
        node = self._by_id.get(node_id)
        if node is None:
            raise ModelError(f"unknown node id {node_id!r}")
        return node

    def node(self, node_id: str) -> Node:
        return self._node(node_id)

    def states(self, node_id: str) -> int:
        return self._node(node_id).states

    def is_root(self, node_id: str) -> bool:
        self._node(node_id)
        return node_id not in self.rules

    @property
    def root_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.id not in self.rules)

    def leaf_candidates(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if not self.children[n.id])

    @property
    def leaf(self) -> str:
        cands = self.leaf_candidates()
        if len(cands) != 1:
            raise ModelError(f"expected exactly one leaf node, found {len(cands)}")
        return cands[0]

    def _toposort(self) -> tuple[str, ...]:
        indeg = {n.id: len(self.parents.get(n.id, ())) for n in self.nodes}
        ready = [n.id for n in self.nodes if indeg[n.id] == 0]
        order: list[str] = []
        while ready:
            node_id = ready.pop()
            order.append(node_id)
            for child in self.children[node_id]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    ready.append(child)
        if len(order) != len(self.nodes):
            raise ModelError("model graph contains a cycle")
        return tuple(order)

    # marginals ----------------------------------------------------------
    def root_marginal(self, node_id: str, t: float | None = None) -> np.ndarray:
        """Marginal vector of a root, discretizing its law at time t if needed."""
        if not self.is_root(node_id):
            raise ModelError(f"{node_id!r} is not a root node")
        if node_id in self.static_marginals:
            return self.static_marginals[node_id].copy()
        law = self.laws[node_id]
        if t is None:
            raise DomainError(
                f"root {node_id!r} has a lifetime law; a mission time is required"
            )
        f = failure_probability(law, float(t))
        return np.array([f, 1.0 - f])

    def root_marginals(self, t: float | None = None) -> dict[str, np.ndarray]:
        return {r: self.root_marginal(r, t) for r in self.root_ids}

    @property
    def needs_time(self) -> bool:
        return bool(self.laws)

    # serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        rules_out = {}
        for child, rule in self.rules.items():
            entry: dict = {"parents": list(self.parents[child])}
            spec = getattr(rule, "build_spec", None)
            if spec is not None:
                entry.update(spec)
            elif isinstance(rule, TabularRule):
                entry["kind"] = "table"
                entry["rows"] = rule.table.tolist()
            elif isinstance(rule, DeterministicRule):
                entry["kind"] = "lut"
                entry["states"] = rule.lut.tolist()
            rules_out[child] = entry
        marg_out: dict[str, object] = {
            k: v.tolist() for k, v in self.static_marginals.items()
        }
        for k, law in self.laws.items():
            if isinstance(law, ExponentialLife):
                marg_out[k] = {"law": "exponential", "rate": law.rate}
            else:
                marg_out[k] = {"law": "weibull", "shape": law.shape, "scale": law.scale}
        out: dict = {
            "name": self.name,
            "description": self.description,
            "nodes": [
                {"id": n.id, "states": n.states, **({"label": n.label} if n.label else {})}
                for n in self.nodes
            ],
            "edges": [[p, c] for c in self.parents for p in self.parents[c]],
            "marginals": marg_out,
            "rules": rules_out,
        }
        if self.common_cause:
            out["common_cause"] = [
                {"factor": cc.factor, "children": list(cc.children)}
                for cc in self.common_cause
            ]
        if self.time_grid is not None:
            out["time_grid"] = {
                "start": self.time_grid.start,
                "step": self.time_grid.step,
                "count": self.time_grid.count,
            }
        if self.reliability_states is not None:
            out["reliability_states"] = list(self.reliability_states)
        return out

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SystemModel":
        try:
            node_entries = data["nodes"]
        except KeyError as exc:
            raise ModelError("model file lacks a 'nodes' section") from exc
        nodes = [
            Node(
                id=str(e["id"]),
                states=int(e["states"]),
                label=str(e.get("label", "")),
            )
            for e in node_entries
        ]
        by_id = {n.id: n for n in nodes}

        rules_in = data.get("rules", {})
        rules: dict[str, tuple[tuple[str, ...], Rule]] = {}
        for child, entry in rules_in.items():
            if child not in by_id:
                raise ModelError(f"rule for unknown node {child!r}")
            parent_ids = tuple(str(p) for p in entry.get("parents", ()))
            for p in parent_ids:
                if p not in by_id:
                    raise ModelError(f"rule for {child!r} names unknown parent {p!r}")
            shape = tuple(by_id[p].states for p in parent_ids)
            kind = entry.get("kind")
            if kind is None:
                raise ModelError(f"rule for {child!r} lacks a 'kind'")
            params = {
                k: v for k, v in entry.items() if k not in ("parents", "kind")
            }
            if kind == "lut":
                states = params.pop("states", None)
                if states is None or params:
                    raise ModelError(f"lut rule for {child!r} takes exactly 'states'")
                rule: Rule = DeterministicRule(
                    child_states=by_id[child].states,
                    parent_states=shape,
                    lut=np.asarray(states, dtype=np.int64),
                )
            else:
                rule = build_rule(kind, shape, by_id[child].states, params)
            object.__setattr__(
                rule,
                "build_spec",
                {"kind": kind, **params} if kind not in ("table", "lut") else None,
            )
            rules[child] = (parent_ids, rule)

        edges = data.get("edges")
        if edges is not None:
            declared = {(str(p), str(c)) for p, c in edges}
            derived = {
                (p, c) for c, (parent_ids, _) in rules.items() for p in parent_ids
            }
            if declared != derived:
                missing = derived - declared
                extra = declared - derived
                raise ModelError(
                    f"edges do not match rule parents (missing {sorted(missing)}, "
                    f"extra {sorted(extra)})"
                )

        marginals: dict[str, object] = {}
        for node_id, value in data.get("marginals", {}).items():
            if isinstance(value, Mapping):
                law_name = value.get("law")
                if law_name == "exponential":
                    marginals[node_id] = ExponentialLife(rate=float(value["rate"]))
                elif law_name == "weibull":
                    marginals[node_id] = WeibullLife(
                        shape=float(value["shape"]), scale=float(value["scale"])
                    )
                else:
                    raise ModelError(f"unknown lifetime law {law_name!r}")
            else:
                marginals[node_id] = value

        ccs = [
            CommonCause(factor=str(e["factor"]), children=tuple(str(c) for c in e["children"]))
            for e in data.get("common_cause", ())
        ]

        grid_in = data.get("time_grid")
        grid = (
            TimeGrid(
                start=float(grid_in["start"]),
                step=float(grid_in["step"]),
                count=int(grid_in["count"]),
            )
            if grid_in
            else None
        )

        model = cls(
            nodes,
            rules,
            marginals,
            common_cause=ccs,
            time_grid=grid,
            reliability_states=data.get("reliability_states"),
            name=str(data.get("name", "")),
            description=str(data.get("description", "")),
        )
        for cc in model.common_cause:
            if not model.is_root(cc.factor):
                raise ModelError(f"common-cause factor {cc.factor!r} is not a root")
            for child in cc.children:
                if cc.factor not in model.parents.get(child, ()):
                    raise ModelError(
                        f"common-cause factor {cc.factor!r} is not a parent of {child!r}"
                    )
        return model

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemModel":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ModelError(f"model file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ModelError(f"model file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def load_model(path: str | Path) -> SystemModel:
    return SystemModel.from_json(path)

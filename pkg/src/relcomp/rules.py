"""Node probability rules: conditional tables and deterministic builders.

A rule maps each combination of parent states to a distribution over the
child's states.  Parent combinations are enumerated in mixed-radix order
over the rule's declared parent order (rightmost parent fastest), matching
the linearization used by the compressed tables.

Deterministic rules hold a lookup table of child states; tabular rules
hold explicit rows.  Builders construct the deterministic rules used by
the bundled reliability models; each builder documents its gating logic
in plain structural terms (quorums, standby pairs, graded series).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ModelError, SizeGuardError
from .radix import decode_offsets, encode_offsets, total_states

__all__ = [
    "Rule",
    "TabularRule",
    "DeterministicRule",
    "evaluate_rule",
    "build_rule",
    "BUILDERS",
]

# dense conditional tables above this entry count refuse to materialize
DENSE_GUARD = 10_000_000

ROW_TOL = 1e-12


@dataclass(frozen=True)
class Rule:
    """Base: distribution over child states per parent combination."""

    child_states: int
    parent_states: tuple[int, ...]

    @property
    def n_combos(self) -> int:
        return total_states(self.parent_states)

    def row(self, parent_states: Sequence[int]) -> np.ndarray:
        """Child distribution for one 1-based parent state tuple."""
        states0 = np.asarray(parent_states, dtype=np.int64)[None, :] - 1
        if states0.shape[1] != len(self.parent_states):
            raise DomainError(
                f"expected {len(self.parent_states)} parent states"
            )
        if (states0 < 0).any() or (states0 >= np.array(self.parent_states)).any():
            raise DomainError(f"parent states out of range: {tuple(parent_states)}")
        return self._rows_for_offsets(encode_offsets(states0, self.parent_states))[0]

    def conditional(self) -> np.ndarray:
        """Dense [n_combos, child_states] table (size-guarded)."""
        n = self.n_combos
        if n * self.child_states > DENSE_GUARD:
            raise SizeGuardError(
                f"dense conditional would hold {n * self.child_states} entries"
            )
        return self._rows_for_offsets(np.arange(n, dtype=np.int64))

    def prob_for_states(self, states0: np.ndarray, child_state0: np.ndarray | int) -> np.ndarray:
        """Pr(child = s | parents), vectorized over 0-based state rows."""
        offs = encode_offsets(states0, self.parent_states)
        return self._probs_at(offs, child_state0)

    # subclass hooks -----------------------------------------------------
    def _rows_for_offsets(self, offs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _probs_at(self, offs: np.ndarray, child_state0) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class TabularRule(Rule):
    """Explicit conditional rows, one per parent combination."""

    table: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        tbl = np.asarray(self.table, dtype=np.float64)
        if tbl.ndim != 2 or tbl.shape != (self.n_combos, self.child_states):
            raise ModelError(
                f"conditional table shape {tbl.shape} does not match "
                f"{self.n_combos} combinations x {self.child_states} states"
            )
        if (tbl < 0).any():
            raise ModelError("conditional probabilities must be nonnegative")
        if np.abs(tbl.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise ModelError("conditional rows must each sum to 1")
        object.__setattr__(self, "table", tbl)

    def _rows_for_offsets(self, offs: np.ndarray) -> np.ndarray:
        return self.table[offs]

    def _probs_at(self, offs: np.ndarray, child_state0) -> np.ndarray:
        return self.table[offs, child_state0]


@dataclass(frozen=True)
class DeterministicRule(Rule):
    """Child state is a function of parent states (one-hot rows)."""

    lut: np.ndarray = None  # type: ignore[assignment]  # 1-based child states

    def __post_init__(self) -> None:
        lut = np.asarray(self.lut, dtype=np.int64)
        if lut.shape != (self.n_combos,):
            raise ModelError(
                f"lookup table holds {lut.shape} entries, expected {self.n_combos}"
            )
        if lut.size and (lut.min() < 1 or lut.max() > self.child_states):
            raise ModelError("lookup table states out of range")
        object.__setattr__(self, "lut", lut)

    def child_states_for(self, states0: np.ndarray) -> np.ndarray:
        """Vectorized 1-based child states for 0-based parent rows."""
        return self.lut[encode_offsets(states0, self.parent_states)]

    def _rows_for_offsets(self, offs: np.ndarray) -> np.ndarray:
        out = np.zeros((offs.size, self.child_states), dtype=np.float64)
        out[np.arange(offs.size), self.lut[offs] - 1] = 1.0
        return out

    def _probs_at(self, offs: np.ndarray, child_state0) -> np.ndarray:
        return (self.lut[offs] - 1 == child_state0).astype(np.float64)


def evaluate_rule(rule: Rule, parent_states: Sequence[int]) -> np.ndarray:
    """Child distribution for one parent state combination (1-based)."""
    return rule.row(parent_states)


# --------------------------------------------------------------------------
# deterministic builders
#
# Each builder receives the declared parent state counts and keyword
# parameters from the model file and returns a DeterministicRule.  State 1
# always means failed; the highest state is full function.


def _enumerate(parent_states: Sequence[int]) -> np.ndarray:
    total = total_states(parent_states)
    if total > DENSE_GUARD:
        raise SizeGuardError(f"rule over {total} parent combinations")
    return decode_offsets(np.arange(total, dtype=np.int64), parent_states) + 1


def _from_fn(
    child_states: int,
    parent_states: Sequence[int],
    fn: Callable[[np.ndarray], np.ndarray],
) -> DeterministicRule:
    states1 = _enumerate(parent_states)
    lut = np.asarray(fn(states1), dtype=np.int64)
    return DeterministicRule(
        child_states=int(child_states),
        parent_states=tuple(int(n) for n in parent_states),
        lut=lut,
    )


def _require_binary(parent_states, which) -> None:
    if any(n != 2 for n in which):
        raise ModelError("builder expects 2-state parents")


def build_quorum(parent_states, *, quorum: int) -> DeterministicRule:
    """2-state unit that works when at least `quorum` 2-state parents work."""
    _require_binary(parent_states, parent_states)
    k = int(quorum)

    def fn(s):
        working = (s == 2).sum(axis=1)
        return np.where(working >= k, 2, 1)

    return _from_fn(2, parent_states, fn)


def build_quorum_with_factor(
    parent_states, *, quorum: int, quorum_under_factor: int
) -> DeterministicRule:
    """Quorum unit whose last parent is a stress factor raising the quorum.

    Parents: n 2-state components then one 2-state factor (state 2 =
    factor present).  The unit works when the number of working
    components meets the quorum for the factor's state.
    """
    _require_binary(parent_states, parent_states)
    if len(parent_states) < 2:
        raise ModelError("needs at least one component and the factor")
    k0, k1 = int(quorum), int(quorum_under_factor)

    def fn(s):
        working = (s[:, :-1] == 2).sum(axis=1)
        need = np.where(s[:, -1] == 2, k1, k0)
        return np.where(working >= need, 2, 1)

    return _from_fn(2, parent_states, fn)


def build_working_count_ladder(parent_states) -> DeterministicRule:
    """State = number of working 2-state parents + 1 (graded parallel)."""
    _require_binary(parent_states, parent_states)

    def fn(s):
        return (s == 2).sum(axis=1) + 1

    return _from_fn(len(parent_states) + 1, parent_states, fn)


def build_ladder_with_factors(parent_states, *, n_factors: int = 2) -> DeterministicRule:
    """Graded pair whose trailing stress factors knock the state down.

    Parents: 2-state components then `n_factors` 2-state factors.  With no
    factor present and every component working the unit is at full state;
    exactly one factor present degrades it one level; anything else
    (a failed component or both factors) fails it.
    """
    _require_binary(parent_states, parent_states)
    nf = int(n_factors)
    nc = len(parent_states) - nf
    if nc < 1:
        raise ModelError("needs at least one component parent")

    def fn(s):
        all_work = (s[:, :nc] == 2).all(axis=1)
        factors = (s[:, nc:] == 2).sum(axis=1)
        out = np.ones(s.shape[0], dtype=np.int64)
        out[all_work & (factors == 1)] = 2
        out[all_work & (factors == 0)] = 3
        return out

    return _from_fn(3, parent_states, fn)


def build_hot_standby_pair_status(parent_states) -> DeterministicRule:
    """Two always-on basic/optional pairs in parallel, graded to 4 states.

    Parents: basic1, optional1, basic2, optional2 (2-state each).
    Full when nothing failed; one level down when the only failure is a
    basic; failed when everything failed; two levels down otherwise.
    """
    if len(parent_states) != 4:
        raise ModelError("expects basic1, optional1, basic2, optional2")
    _require_binary(parent_states, parent_states)

    def fn(s):
        failed = (s == 1).sum(axis=1)
        basic_failed = (s[:, 0] == 1) | (s[:, 2] == 1)
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[failed == 0] = 4
        out[(failed == 1) & basic_failed] = 3
        out[failed == 4] = 1
        return out

    return _from_fn(4, parent_states, fn)


def build_cold_standby_pair_status(parent_states) -> DeterministicRule:
    """Two basic/optional pairs in series where optionals are standbys.

    Parents: basic1, optional1, basic2, optional2 (2-state each).
    Full when both basics work; one level down when exactly one basic is
    out but its optional covers and the other basic works; failed when any
    pair is entirely dead; two levels down otherwise.
    """
    if len(parent_states) != 4:
        raise ModelError("expects basic1, optional1, basic2, optional2")
    _require_binary(parent_states, parent_states)

    def fn(s):
        b1, o1, b2, o2 = (s[:, i] == 2 for i in range(4))
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[b1 & b2] = 4
        covered = (~b1 & o1 & b2) | (~b2 & o2 & b1)
        out[covered] = 3
        out[(~b1 & ~o1) | (~b2 & ~o2)] = 1
        return out

    return _from_fn(4, parent_states, fn)


def build_pair_plus_standby_status(parent_states) -> DeterministicRule:
    """A parallel pair in series with a basic/optional pair, 4 states.

    Parents: pair1, pair2, basic, optional (2-state each).  Full when all
    four work; one level down when exactly one side has a single failure;
    failed when either side is entirely dead; two levels down otherwise.
    """
    if len(parent_states) != 4:
        raise ModelError("expects pair1, pair2, basic, optional")
    _require_binary(parent_states, parent_states)

    def fn(s):
        c1, c2, b, o = (s[:, i] == 2 for i in range(4))
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[c1 & c2 & b & o] = 4
        one_standby = c1 & c2 & (b != o)
        one_pair = (c1 != c2) & b & o
        out[one_standby | one_pair] = 3
        out[(~c1 & ~c2) | (~b & ~o)] = 1
        return out

    return _from_fn(4, parent_states, fn)


def build_any_working_gate(parent_states) -> DeterministicRule:
    """2-state group that fails only when every parent is failed."""

    def fn(s):
        return np.where((s == 1).all(axis=1), 1, 2)

    return _from_fn(2, parent_states, fn)


def build_graded_quorum4(parent_states, *, full_quorum: int) -> DeterministicRule:
    """4-state group graded by how many parents sit at their top state.

    At least `full_quorum` parents at top state: full.  At least one at
    top: one level down.  Every parent failed: failed.  Otherwise two
    levels down.
    """
    tops = np.array(parent_states, dtype=np.int64)
    k = int(full_quorum)

    def fn(s):
        at_top = (s == tops).sum(axis=1)
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[at_top >= 1] = 3
        out[at_top >= k] = 4
        out[(s == 1).all(axis=1)] = 1
        return out

    return _from_fn(4, parent_states, fn)


def build_graded_quorum3(parent_states, *, quorum: int) -> DeterministicRule:
    """3-state group: quorum of parents at top state, else graded down."""
    tops = np.array(parent_states, dtype=np.int64)
    k = int(quorum)

    def fn(s):
        at_top = (s == tops).sum(axis=1)
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[at_top >= k] = 3
        out[(s == 1).all(axis=1)] = 1
        return out

    return _from_fn(3, parent_states, fn)


def build_series_grade3(parent_states) -> DeterministicRule:
    """3-state series: full iff all parents at top, failed iff any failed."""
    tops = np.array(parent_states, dtype=np.int64)

    def fn(s):
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[(s == tops).all(axis=1)] = 3
        out[(s == 1).any(axis=1)] = 1
        return out

    return _from_fn(3, parent_states, fn)


def build_series_grade4(parent_states) -> DeterministicRule:
    """4-state series of two graded units.

    Full iff both parents at top; one level down iff one is at top and the
    other one below top; failed iff either failed; else two levels down.
    """
    if len(parent_states) != 2:
        raise ModelError("expects exactly two parents")
    tops = np.array(parent_states, dtype=np.int64)

    def fn(s):
        a_top = s[:, 0] == tops[0]
        b_top = s[:, 1] == tops[1]
        a_near = s[:, 0] == tops[0] - 1
        b_near = s[:, 1] == tops[1] - 1
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[(a_top & b_near) | (a_near & b_top)] = 3
        out[a_top & b_top] = 4
        out[(s == 1).any(axis=1)] = 1
        return out

    return _from_fn(4, parent_states, fn)


def build_frame_trestle_status(parent_states) -> DeterministicRule:
    """Load structure: graded frame group plus two trestle groups.

    Parents: frame (4-state), trestle1 (3-state), trestle2 (3-state).
    Full when the frame is at top and either trestle group is at top; one
    level down when the frame is one below top and both trestle groups
    are at top; failed when any two parents failed; else two levels down.
    """
    if tuple(parent_states) != (4, 3, 3):
        raise ModelError("expects a 4-state frame and two 3-state trestles")

    def fn(s):
        bf, t1, t2 = s[:, 0], s[:, 1], s[:, 2]
        out = np.full(s.shape[0], 2, dtype=np.int64)
        out[(bf == 3) & (t1 == 3) & (t2 == 3)] = 3
        out[(bf == 4) & ((t1 == 3) | (t2 == 3))] = 4
        out[((bf == 1).astype(int) + (t1 == 1) + (t2 == 1)) >= 2] = 1
        return out

    return _from_fn(4, parent_states, fn)


def build_gated_copy(parent_states) -> DeterministicRule:
    """Copies the first parent's state while every gate parent works.

    Parents: one graded unit then 2-state gates; any gate at state 1
    forces the child to state 1.
    """
    if len(parent_states) < 2:
        raise ModelError("expects a source parent and at least one gate")
    _require_binary(parent_states, parent_states[1:])

    def fn(s):
        ok = (s[:, 1:] == 2).all(axis=1)
        return np.where(ok, s[:, 0], 1)

    return _from_fn(parent_states[0], parent_states, fn)


BUILDERS: dict[str, Callable[..., DeterministicRule]] = {
    "quorum": build_quorum,
    "quorum_with_factor": build_quorum_with_factor,
    "working_count_ladder": build_working_count_ladder,
    "ladder_with_factors": build_ladder_with_factors,
    "hot_standby_pair_status": build_hot_standby_pair_status,
    "cold_standby_pair_status": build_cold_standby_pair_status,
    "pair_plus_standby_status": build_pair_plus_standby_status,
    "any_working_gate": build_any_working_gate,
    "graded_quorum4": build_graded_quorum4,
    "graded_quorum3": build_graded_quorum3,
    "series_grade3": build_series_grade3,
    "series_grade4": build_series_grade4,
    "frame_trestle_status": build_frame_trestle_status,
    "gated_copy": build_gated_copy,
}


def build_rule(
    kind: str,
    parent_states: Sequence[int],
    child_states: int,
    params: dict | None = None,
) -> Rule:
    """Construct a rule from its model-file description."""
    params = dict(params or {})
    if kind == "table":
        rows = params.pop("rows", None)
        if rows is None:
            raise ModelError("tabular rule needs 'rows'")
        if params:
            raise ModelError(f"unknown rule parameters: {sorted(params)}")
        return TabularRule(
            child_states=int(child_states),
            parent_states=tuple(int(n) for n in parent_states),
            table=np.asarray(rows, dtype=np.float64),
        )
    builder = BUILDERS.get(kind)
    if builder is None:
        raise ModelError(f"unknown rule kind: {kind!r}")
    try:
        rule = builder(tuple(int(n) for n in parent_states), **params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for rule {kind!r}: {exc}") from exc
    if rule.child_states != int(child_states):
        raise ModelError(
            f"rule {kind!r} produces {rule.child_states} states, "
            f"node declares {child_states}"
        )
    return rule

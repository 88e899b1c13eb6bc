"""Mixed-radix numbering between linear row indices and state tuples.

Rows and states are 1-based on the public surface.  The rightmost node
varies fastest: with radices (N_1, ..., N_m), row k enumerates state
tuples in lexicographic order where position m is the least significant
digit.  Internal helpers work on 0-based offsets for vectorized batches.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DomainError, ModelError

__all__ = [
    "total_states",
    "strides",
    "row_to_states",
    "states_to_row",
    "decode_offsets",
    "encode_offsets",
]

# Totals must stay addressable by int64 arithmetic everywhere downstream.
MAX_TOTAL = 2**63 - 1


def _check_radices(radices: Sequence[int]) -> tuple[int, ...]:
    rv = tuple(int(n) for n in radices)
    for n in rv:
        if n < 1:
            raise ModelError(f"state counts must be >= 1, got {n}")
    return rv


def total_states(radices: Sequence[int]) -> int:
    """Product of state counts, guarded against int64 overflow."""
    rv = _check_radices(radices)
    total = math.prod(rv)  # exact; Python ints do not overflow
    if total > MAX_TOTAL:
        raise ModelError(
            f"joint state space {total} exceeds the int64 addressable limit"
        )
    return total


def strides(radices: Sequence[int]) -> np.ndarray:
    """Per-position step sizes; strides[-1] == 1 (rightmost fastest)."""
    rv = _check_radices(radices)
    total_states(rv)
    out = np.ones(len(rv), dtype=np.int64)
    for i in range(len(rv) - 2, -1, -1):
        out[i] = out[i + 1] * rv[i + 1]
    return out


def row_to_states(k: int, radices: Sequence[int]) -> tuple[int, ...]:
    """Map 1-based row k to its 1-based state tuple."""
    rv = _check_radices(radices)
    total = total_states(rv)
    k = int(k)
    if not 1 <= k <= total:
        raise DomainError(f"row {k} outside 1..{total}")
    rem = k - 1
    out = [0] * len(rv)
    for i in range(len(rv) - 1, -1, -1):
        out[i] = rem % rv[i] + 1
        rem //= rv[i]
    return tuple(out)


def states_to_row(states: Sequence[int], radices: Sequence[int]) -> int:
    """Map a 1-based state tuple to its 1-based row index."""
    rv = _check_radices(radices)
    total_states(rv)
    if len(states) != len(rv):
        raise DomainError(
            f"expected {len(rv)} states, got {len(states)}"
        )
    k = 0
    for s, n in zip(states, rv):
        s = int(s)
        if not 1 <= s <= n:
            raise DomainError(f"state {s} outside 1..{n}")
        k = k * n + (s - 1)
    return k + 1


def decode_offsets(offsets: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    """Vectorized decode of 0-based row offsets to a 0-based state matrix."""
    rv = _check_radices(radices)
    offsets = np.asarray(offsets, dtype=np.int64)
    out = np.empty((offsets.shape[0], len(rv)), dtype=np.int64)
    rem = offsets
    for i in range(len(rv) - 1, -1, -1):
        out[:, i] = rem % rv[i]
        rem = rem // rv[i]
    return out


def encode_offsets(states: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    """Vectorized encode of a 0-based state matrix to 0-based row offsets."""
    rv = _check_radices(radices)
    states = np.asarray(states, dtype=np.int64)
    if states.ndim != 2 or states.shape[1] != len(rv):
        raise DomainError("state matrix shape does not match radices")
    out = np.zeros(states.shape[0], dtype=np.int64)
    for i, n in enumerate(rv):
        out = out * n + states[:, i]
    return out

"""Summing out the fastest-varying node directly on compressed tables.

With the eliminated node last in the ordering (rightmost, fastest), its
states occupy consecutive positions, so elimination is a fold of every
group of N consecutive values into one output value, optionally weighted.
The fold streams over rows; the only state between rows is the partially
consumed group (how many values were absorbed and the running sum).
Output values are re-segmented greedily into a fresh compressed table, so
the result follows the same construction rules as a direct compression.
"""
from __future__ import annotations

from collections import deque
from typing import Protocol, Sequence

import numpy as np

from .ctable import (
    PHRASE,
    RUN,
    CompressedTable,
    StreamScanner,
    TableAssembler,
    compress,
)
from .errors import DomainError, ModelError
from .radix import decode_offsets, encode_offsets, total_states

__all__ = [
    "eliminate_last",
    "eliminate_last_oracle",
    "reorder_generate",
    "TableSource",
    "CompressedSource",
    "DenseSource",
]


class _SegmentEmitter:
    """Greedy run/phrase segmentation over (value, repeat) emissions.

    Scalar counterpart of the vectorized stream scanner; holds at most a
    few undecided runs, so elimination output is never materialized.
    """

    def __init__(self, assembler: TableAssembler) -> None:
        self._asm = assembler
        self._q: deque[list] = deque()

    def emit(self, value: float, repeat: int) -> None:
        if repeat <= 0:
            return
        q = self._q
        if q and q[-1][0] == value:
            q[-1][1] += repeat
        else:
            q.append([value, repeat])
        self._drain(False)

    def _drain(self, final: bool) -> None:
        q = self._q
        while q:
            v0, m0 = q[0]
            if m0 >= 2:
                # a non-last run cannot grow further
                if len(q) >= 2 or final:
                    self._asm.add_segment(RUN, v0, 0.0, m0)
                    q.popleft()
                    continue
                break
            # m0 == 1: needs the successor's final length
            if len(q) >= 3 or (final and len(q) >= 2):
                if q[1][1] >= 2:
                    v1, m1 = q[1]
                    self._asm.add_segment(PHRASE, v0, v1, 1 + m1)
                    q.popleft()
                    q.popleft()
                else:
                    self._asm.add_segment(RUN, v0, 0.0, 1)
                    q.popleft()
                continue
            if final and len(q) == 1:
                self._asm.add_segment(RUN, v0, 0.0, 1)
                q.popleft()
                continue
            break

    def finish(self) -> None:
        self._drain(True)


class _GroupFolder:
    """Folds a value stream into consecutive weighted group sums."""

    def __init__(self, n: int, weights, emit) -> None:
        self.n = n
        if weights is None:
            cumw = [float(i) for i in range(n + 1)]
        else:
            cumw = [0.0]
            for w in weights:
                cumw.append(cumw[-1] + float(w))
        self.cumw = cumw
        self.group_weight = cumw[n]
        self.emit = emit
        self.h = 0  # values of the current group consumed so far
        self.r = 0.0  # running weighted sum of the current group

    def run(self, value: float, m: int) -> None:
        n, cumw = self.n, self.cumw
        if self.h:
            c = min(n - self.h, m)
            self.r += value * (cumw[self.h + c] - cumw[self.h])
            self.h += c
            m -= c
            if self.h == n:
                self.emit(self.r, 1)
                self.h = 0
                self.r = 0.0
            if m == 0:
                return
        full, tail = divmod(m, n)
        if full:
            self.emit(value * self.group_weight, full)
        if tail:
            self.r = value * cumw[tail]
            self.h = tail


def eliminate_last(
    ct: CompressedTable, n_states: int, weights: Sequence[float] | None = None
) -> CompressedTable:
    """Sum out the last-listed node of width n_states, keeping rows compressed."""
    n = int(n_states)
    if n < 1:
        raise DomainError(f"state count must be >= 1, got {n}")
    if ct.total_len % n != 0:
        raise ModelError(
            f"table length {ct.total_len} not divisible by state count {n}"
        )
    if weights is not None and len(weights) != n:
        raise DomainError(
            f"expected {n} weights, got {len(weights)}"
        )

    asm = TableAssembler()
    emitter = _SegmentEmitter(asm)
    folder = _GroupFolder(n, weights, emitter.emit)

    kinds, ids, counts = ct.kinds, ct.ids, ct.counts
    run_v, run_l = ct.run_values, ct.run_lengths
    ph_a, ph_b, ph_l = ct.phrase_first, ct.phrase_rest, ct.phrase_lengths
    for j in range(ct.n_rows):
        i = ids[j]
        if kinds[j] == RUN:
            folder.run(float(run_v[i]), int(run_l[i]) * int(counts[j]))
        else:
            a, b, length = float(ph_a[i]), float(ph_b[i]), int(ph_l[i])
            for _ in range(int(counts[j])):
                folder.run(a, 1)
                folder.run(b, length - 1)

    if folder.h != 0:  # unreachable given the divisibility check
        raise ModelError("stream ended inside a group")
    emitter.finish()
    return asm.finish(ct.total_len // n)


def eliminate_last_oracle(
    ct: CompressedTable, n_states: int, weights: Sequence[float] | None = None
) -> CompressedTable:
    """Dense reference: decompress, group-sum, recompress."""
    n = int(n_states)
    if n < 1:
        raise DomainError(f"state count must be >= 1, got {n}")
    if ct.total_len % n != 0:
        raise ModelError(
            f"table length {ct.total_len} not divisible by state count {n}"
        )
    dense = ct.decompress().reshape(-1, n)
    if weights is None:
        grouped = dense.sum(axis=1)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.size != n:
            raise DomainError(f"expected {n} weights, got {w.size}")
        grouped = dense @ w
    return compress(grouped, grouped.size)


class TableSource(Protocol):
    """A table described by node state counts plus a value rule."""

    radices: tuple[int, ...]

    def values_for_states(self, states0: np.ndarray) -> np.ndarray:
        """Values at the given 0-based state matrix rows."""
        ...


class CompressedSource:
    """Adapter presenting a compressed table as a TableSource."""

    def __init__(self, ct: CompressedTable, radices: Sequence[int]) -> None:
        self.radices = tuple(int(r) for r in radices)
        if total_states(self.radices) != ct.total_len:
            raise ModelError(
                f"radices cover {total_states(self.radices)} states, "
                f"table holds {ct.total_len}"
            )
        self._ct = ct

    def values_for_states(self, states0: np.ndarray) -> np.ndarray:
        offs = encode_offsets(states0, self.radices)
        return self._ct.values_at(offs + 1)


class DenseSource:
    """Adapter presenting a dense value array as a TableSource."""

    def __init__(self, values: np.ndarray, radices: Sequence[int]) -> None:
        self.radices = tuple(int(r) for r in radices)
        values = np.asarray(values, dtype=np.float64).ravel()
        if total_states(self.radices) != values.size:
            raise ModelError(
                f"radices cover {total_states(self.radices)} states, "
                f"array holds {values.size}"
            )
        self._values = values

    def values_for_states(self, states0: np.ndarray) -> np.ndarray:
        return self._values[encode_offsets(states0, self.radices)]


def reorder_generate(
    source: TableSource, perm: Sequence[int], chunk_size: int = 1 << 16
) -> CompressedTable:
    """Stream-compress the table with nodes permuted, never densifying.

    Position i of the new ordering holds the source node perm[i]; values
    are regenerated chunk by chunk in the new enumeration order.
    """
    radices = source.radices
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(len(radices))):
        raise DomainError(f"not a permutation of 0..{len(radices) - 1}: {perm}")
    new_radices = tuple(radices[p] for p in perm)
    total = total_states(new_radices)

    scanner = StreamScanner(TableAssembler())
    for start in range(0, total, chunk_size):
        offs = np.arange(start, min(start + chunk_size, total), dtype=np.int64)
        new_states = decode_offsets(offs, new_radices)
        old_states = np.empty_like(new_states)
        old_states[:, list(perm)] = new_states
        scanner.feed(source.values_for_states(old_states))
    scanner.flush()
    return scanner._asm.finish(total)

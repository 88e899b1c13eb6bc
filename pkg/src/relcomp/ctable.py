"""Run/phrase compressed probability tables.

A table is a linearized sequence of float values stored as rows, where each
row references a dictionary entry together with a repeat count:

* run entry (value, length L>=1): L copies of value;
* phrase entry (first, rest, length L>=2): first, then L-1 copies of rest.

A row (entry, n) spans n consecutive expansions of its entry.  Dictionary
entries are deduplicated by exact value equality.  Row start offsets are
1-based positions into the expanded sequence; they are strictly increasing
and the first row starts at 1.

The scanner is greedy over the run-length encoding of the incoming stream:
a maximal run of >= 2 equal values becomes a run; a lone value followed by
a run of >= 2 of a second value becomes a phrase (total length >= 3);
anything else becomes a length-1 run.  Adjacent identical segments fold
into one row with a higher count.  Compression therefore never produces
more rows than input values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import DomainError, IntegrityError

__all__ = [
    "RUN",
    "PHRASE",
    "CompressedTable",
    "TableAssembler",
    "CountingAssembler",
    "TableStats",
    "compress",
    "compress_stats",
    "decompress",
    "value_at",
    "dump_table",
    "load_table",
]

RUN = 0
PHRASE = 1

# struct-of-arrays dtypes for dictionary dedup keyed on exact bit patterns
_RUN_KEY = np.dtype([("v", "i8"), ("l", "i8")])
_PHRASE_KEY = np.dtype([("v1", "i8"), ("v2", "i8"), ("l", "i8")])

_MAGIC = b"RELCMPT\x01"


def _rle(chunk: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Maximal equal-value runs of a 1-D array: (values, lengths)."""
    if chunk.size == 0:
        return chunk[:0], np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(chunk[1:] != chunk[:-1])
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change + 1, [chunk.size]))
    return chunk[starts], (ends - starts).astype(np.int64)


def _classify(
    vals: np.ndarray, lens: np.ndarray, final: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    """Greedy segmentation of RLE entries.

    Returns (kinds, first, rest, lengths, pending_start).  Entries from
    pending_start on could still change if more input arrives and are left
    undecided unless `final`.  A decided lone value directly followed by a
    decided longer run is absorbed into a phrase.
    """
    n = vals.size
    decide = n if final else max(n - 2, 0)
    if decide == 0:
        return (
            np.zeros(0, np.uint8),
            vals[:0],
            vals[:0],
            np.zeros(0, np.int64),
            0,
        )
    nxt_vals = np.empty_like(vals)
    nxt_lens = np.zeros(n, dtype=np.int64)
    if n > 1:
        nxt_vals[:-1] = vals[1:]
        nxt_lens[:-1] = lens[1:]
    nxt_vals[-1] = 0.0

    head = (lens == 1) & (nxt_lens >= 2)
    head[decide:] = False
    consumed = np.zeros(n, dtype=bool)
    consumed[1:] = head[:-1]
    emit = ~consumed
    emit[decide:] = False
    pending_start = decide
    if decide < n and consumed[decide]:
        pending_start += 1

    idx = np.flatnonzero(emit)
    h = head[idx]
    kinds = np.where(h, PHRASE, RUN).astype(np.uint8)
    first = vals[idx]
    rest = np.where(h, nxt_vals[idx], 0.0)
    lengths = np.where(h, 1 + nxt_lens[idx], lens[idx])
    return kinds, first, rest, lengths, pending_start


def _fold(kinds, first, rest, lengths, counts):
    """Merge adjacent identical segments, summing their counts."""
    m = kinds.size
    if m <= 1:
        return kinds, first, rest, lengths, counts
    same = (
        (kinds[1:] == kinds[:-1])
        & (first[1:] == first[:-1])
        & (rest[1:] == rest[:-1])
        & (lengths[1:] == lengths[:-1])
    )
    if same.all():
        return (
            kinds[:1],
            first[:1],
            rest[:1],
            lengths[:1],
            np.array([counts.sum()], dtype=np.int64),
        )
    starts = np.concatenate(([0], np.flatnonzero(~same) + 1))
    return (
        kinds[starts],
        first[starts],
        rest[starts],
        lengths[starts],
        np.add.reduceat(counts, starts),
    )


class TableAssembler:
    """Collects scanner segments and assembles a CompressedTable."""

    def __init__(self) -> None:
        self._blocks: list[tuple] = []

    def add_block(self, kinds, first, rest, lengths, counts=None) -> None:
        if kinds.size == 0:
            return
        if counts is None:
            counts = np.ones(kinds.size, dtype=np.int64)
        self._blocks.append((kinds, first, rest, lengths, counts))

    def add_segment(self, kind: int, first: float, rest: float, length: int, count: int = 1) -> None:
        self.add_block(
            np.array([kind], dtype=np.uint8),
            np.array([first], dtype=np.float64),
            np.array([rest], dtype=np.float64),
            np.array([length], dtype=np.int64),
            np.array([count], dtype=np.int64),
        )

    def finish(self, total_len: int) -> "CompressedTable":
        if self._blocks:
            kinds = np.concatenate([b[0] for b in self._blocks])
            first = np.concatenate([b[1] for b in self._blocks]).astype(np.float64)
            rest = np.concatenate([b[2] for b in self._blocks]).astype(np.float64)
            lengths = np.concatenate([b[3] for b in self._blocks]).astype(np.int64)
            counts = np.concatenate([b[4] for b in self._blocks]).astype(np.int64)
            kinds, first, rest, lengths, counts = _fold(kinds, first, rest, lengths, counts)
        else:
            kinds = np.zeros(0, np.uint8)
            first = rest = np.zeros(0, np.float64)
            lengths = counts = np.zeros(0, np.int64)
        self._blocks = []

        is_run = kinds == RUN
        run_keys = np.empty(int(is_run.sum()), dtype=_RUN_KEY)
        run_keys["v"] = first[is_run].view(np.int64)
        run_keys["l"] = lengths[is_run]
        uruns, run_inv = np.unique(run_keys, return_inverse=True)

        is_ph = ~is_run
        ph_keys = np.empty(int(is_ph.sum()), dtype=_PHRASE_KEY)
        ph_keys["v1"] = first[is_ph].view(np.int64)
        ph_keys["v2"] = rest[is_ph].view(np.int64)
        ph_keys["l"] = lengths[is_ph]
        uphr, ph_inv = np.unique(ph_keys, return_inverse=True)

        ids = np.empty(kinds.size, dtype=np.int64)
        ids[is_run] = run_inv
        ids[is_ph] = ph_inv

        spans = counts * lengths
        start_offsets = np.empty(kinds.size, dtype=np.int64)
        if kinds.size:
            start_offsets[0] = 1
            np.cumsum(spans[:-1], out=start_offsets[1:])
            start_offsets[1:] += 1

        ct = CompressedTable(
            kinds=kinds,
            ids=ids,
            counts=counts,
            run_values=uruns["v"].view(np.float64).copy(),
            run_lengths=uruns["l"].copy(),
            phrase_first=uphr["v1"].view(np.float64).copy(),
            phrase_rest=uphr["v2"].view(np.float64).copy(),
            phrase_lengths=uphr["l"].copy(),
            start_offsets=start_offsets,
            total_len=int(total_len),
        )
        ct.validate()
        return ct


@dataclass
class TableStats:
    """Size accounting for a compressed table that may never be stored."""

    total_len: int
    n_rows: int
    n_run_entries: int
    n_phrase_entries: int

    @property
    def compressed_bytes(self) -> int:
        # per row: kind u8 + id i64 + count i64 + start offset i64
        return (
            len(_MAGIC)
            + 32
            + self.n_rows * (1 + 8 + 8 + 8)
            + self.n_run_entries * 16
            + self.n_phrase_entries * 24
        )

    @property
    def dense_equivalent_bytes(self) -> int:
        return self.total_len * 8


class CountingAssembler:
    """Accounts rows and dictionary entries without retaining rows.

    Accepts the same segment blocks as TableAssembler; keeps only a carry
    segment for adjacent folding plus the sets of distinct entries.
    """

    def __init__(self) -> None:
        self.n_rows = 0
        self._run_seen = np.zeros(0, dtype=_RUN_KEY)
        self._ph_seen = np.zeros(0, dtype=_PHRASE_KEY)
        self._carry: tuple | None = None  # (kind, first, rest, length)

    def add_block(self, kinds, first, rest, lengths, counts=None) -> None:
        if kinds.size == 0:
            return
        kinds, first, rest, lengths, _ = _fold(
            kinds, first, rest, lengths, np.ones(kinds.size, dtype=np.int64)
        )
        if self._carry is not None:
            ck, cf, cr, cl = self._carry
            if (ck, cf, cr, cl) == (int(kinds[0]), float(first[0]), float(rest[0]), int(lengths[0])):
                kinds, first, rest, lengths = kinds[1:], first[1:], rest[1:], lengths[1:]
                if kinds.size == 0:
                    return
            else:
                self.n_rows += 1
        self._carry = (int(kinds[-1]), float(first[-1]), float(rest[-1]), int(lengths[-1]))
        self.n_rows += kinds.size - 1

        is_run = kinds == RUN
        rk = np.empty(int(is_run.sum()), dtype=_RUN_KEY)
        rk["v"] = first[is_run].view(np.int64)
        rk["l"] = lengths[is_run]
        self._run_seen = np.unique(np.concatenate((self._run_seen, rk)))
        is_ph = ~is_run
        pk = np.empty(int(is_ph.sum()), dtype=_PHRASE_KEY)
        pk["v1"] = first[is_ph].view(np.int64)
        pk["v2"] = rest[is_ph].view(np.int64)
        pk["l"] = lengths[is_ph]
        self._ph_seen = np.unique(np.concatenate((self._ph_seen, pk)))

    def finish(self, total_len: int) -> TableStats:
        if self._carry is not None:
            self.n_rows += 1
            self._carry = None
        return TableStats(
            total_len=int(total_len),
            n_rows=self.n_rows,
            n_run_entries=int(self._run_seen.size),
            n_phrase_entries=int(self._ph_seen.size),
        )


class StreamScanner:
    """Feeds raw value chunks through RLE + greedy segmentation."""

    def __init__(self, assembler) -> None:
        self._asm = assembler
        self._pend_vals = np.zeros(0, dtype=np.float64)
        self._pend_lens = np.zeros(0, dtype=np.int64)
        self.consumed = 0

    def feed(self, chunk: np.ndarray) -> None:
        chunk = np.ascontiguousarray(chunk, dtype=np.float64).ravel()
        if chunk.size == 0:
            return
        self.consumed += chunk.size
        vals, lens = _rle(chunk)
        if self._pend_vals.size and vals.size and self._pend_vals[-1] == vals[0]:
            self._pend_lens[-1] += lens[0]
            vals, lens = vals[1:], lens[1:]
        vals = np.concatenate((self._pend_vals, vals))
        lens = np.concatenate((self._pend_lens, lens))
        kinds, first, rest, lengths, pstart = _classify(vals, lens, final=False)
        self._asm.add_block(kinds, first, rest, lengths)
        self._pend_vals = vals[pstart:]
        self._pend_lens = lens[pstart:]

    def flush(self) -> None:
        kinds, first, rest, lengths, _ = _classify(self._pend_vals, self._pend_lens, final=True)
        self._asm.add_block(kinds, first, rest, lengths)
        self._pend_vals = np.zeros(0, dtype=np.float64)
        self._pend_lens = np.zeros(0, dtype=np.int64)


@dataclass
class CompressedTable:
    """A fully assembled compressed table (immutable by convention)."""

    kinds: np.ndarray
    ids: np.ndarray
    counts: np.ndarray
    run_values: np.ndarray
    run_lengths: np.ndarray
    phrase_first: np.ndarray
    phrase_rest: np.ndarray
    phrase_lengths: np.ndarray
    start_offsets: np.ndarray
    total_len: int
    _ref_groups: dict | None = field(default=None, repr=False, compare=False)

    @property
    def n_rows(self) -> int:
        return int(self.kinds.size)

    @property
    def entry_lengths(self) -> np.ndarray:
        """Expanded length of each row's dictionary entry."""
        out = np.empty(self.n_rows, dtype=np.int64)
        is_run = self.kinds == RUN
        out[is_run] = self.run_lengths[self.ids[is_run]]
        out[~is_run] = self.phrase_lengths[self.ids[~is_run]]
        return out

    @property
    def row_spans(self) -> np.ndarray:
        return self.counts * self.entry_lengths

    @property
    def ref_groups(self) -> dict[tuple[int, int], np.ndarray]:
        """Start offsets of the rows referencing each dictionary entry."""
        if self._ref_groups is None:
            groups: dict[tuple[int, int], np.ndarray] = {}
            if self.n_rows:
                order = np.lexsort((self.ids, self.kinds))  # stable: row order kept
                sk = self.kinds[order].astype(np.int64)
                si = self.ids[order]
                key = sk * (self.ids.max() + 1) + si
                cuts = np.concatenate(([0], np.flatnonzero(key[1:] != key[:-1]) + 1))
                offs = self.start_offsets[order]
                for c0, c1 in zip(cuts, np.concatenate((cuts[1:], [key.size]))):
                    groups[(int(sk[c0]), int(si[c0]))] = offs[c0:c1]
            self._ref_groups = groups
        return self._ref_groups

    @property
    def nbytes_compressed(self) -> int:
        return TableStats(
            self.total_len,
            self.n_rows,
            int(self.run_values.size),
            int(self.phrase_first.size),
        ).compressed_bytes

    @property
    def dense_equivalent_bytes(self) -> int:
        return self.total_len * 8

    def validate(self) -> None:
        m = self.n_rows
        if m == 0:
            if self.total_len != 0:
                raise IntegrityError("empty table with nonzero total length")
            return
        if (self.counts < 1).any():
            raise IntegrityError("row counts must be >= 1")
        if (self.run_lengths < 1).any():
            raise IntegrityError("run lengths must be >= 1")
        if (self.phrase_lengths < 2).any():
            raise IntegrityError("phrase lengths must be >= 2")
        is_run = self.kinds == RUN
        if self.ids[is_run].size and (
            self.ids[is_run].min() < 0 or self.ids[is_run].max() >= self.run_values.size
        ):
            raise IntegrityError("run row references a missing dictionary entry")
        if self.ids[~is_run].size and (
            self.ids[~is_run].min() < 0 or self.ids[~is_run].max() >= self.phrase_first.size
        ):
            raise IntegrityError("phrase row references a missing dictionary entry")
        if self.start_offsets[0] != 1:
            raise IntegrityError("first start offset must be 1")
        spans = self.row_spans
        expected = np.empty(m, dtype=np.int64)
        expected[0] = 1
        np.cumsum(spans[:-1], out=expected[1:])
        expected[1:] += 1
        if not np.array_equal(self.start_offsets, expected):
            raise IntegrityError("start offsets disagree with row spans")
        if int(spans.sum()) != self.total_len:
            raise IntegrityError(
                f"row spans cover {int(spans.sum())} values, expected {self.total_len}"
            )

    def decompress(self) -> np.ndarray:
        m = self.n_rows
        if m == 0:
            return np.zeros(0, dtype=np.float64)
        is_run = self.kinds == RUN
        slots = np.where(is_run, 1, 2 * self.counts)
        slot_start = np.zeros(m, dtype=np.int64)
        np.cumsum(slots[:-1], out=slot_start[1:])
        n_slots = int(slot_start[-1] + slots[-1])
        vals = np.empty(n_slots, dtype=np.float64)
        reps = np.empty(n_slots, dtype=np.int64)

        ri = slot_start[is_run]
        rid = self.ids[is_run]
        vals[ri] = self.run_values[rid]
        reps[ri] = self.run_lengths[rid] * self.counts[is_run]

        pj = np.flatnonzero(~is_run)
        if pj.size:
            pn = self.counts[pj]
            base = np.repeat(slot_start[pj], pn)
            csum = np.cumsum(pn)
            within = np.arange(int(csum[-1]), dtype=np.int64) - np.repeat(csum - pn, pn)
            sbase = base + 2 * within
            pid = np.repeat(self.ids[pj], pn)
            vals[sbase] = self.phrase_first[pid]
            reps[sbase] = 1
            vals[sbase + 1] = self.phrase_rest[pid]
            reps[sbase + 1] = self.phrase_lengths[pid] - 1
        return np.repeat(vals, reps)

    def values_at(self, ks: np.ndarray) -> np.ndarray:
        """Random access: values at 1-based positions ks (vectorized)."""
        ks = np.asarray(ks, dtype=np.int64)
        if ks.size and (ks.min() < 1 or ks.max() > self.total_len):
            raise DomainError(f"position outside 1..{self.total_len}")
        j = np.searchsorted(self.start_offsets, ks, side="right") - 1
        within = ks - self.start_offsets[j]
        is_run = self.kinds[j] == RUN
        out = np.empty(ks.size, dtype=np.float64)
        out[is_run] = self.run_values[self.ids[j[is_run]]]
        pm = ~is_run
        if pm.any():
            pid = self.ids[j[pm]]
            pos = within[pm] % self.phrase_lengths[pid]
            out[pm] = np.where(pos == 0, self.phrase_first[pid], self.phrase_rest[pid])
        return out

    def value_at(self, k: int) -> float:
        return float(self.values_at(np.array([int(k)]))[0])


def _iter_chunks(stream) -> Iterator[np.ndarray]:
    if isinstance(stream, np.ndarray):
        yield stream
        return
    if isinstance(stream, (list, tuple)) and stream and not isinstance(stream[0], np.ndarray):
        yield np.asarray(stream, dtype=np.float64)
        return
    for part in stream:
        yield np.asarray(part, dtype=np.float64)


def compress(stream, total_len: int) -> CompressedTable:
    """Scan a value stream into a compressed table of known length."""
    scanner = StreamScanner(TableAssembler())
    for chunk in _iter_chunks(stream):
        scanner.feed(chunk)
    scanner.flush()
    if scanner.consumed != int(total_len):
        raise IntegrityError(
            f"stream produced {scanner.consumed} values, expected {total_len}"
        )
    return scanner._asm.finish(int(total_len))


def compress_stats(stream, total_len: int) -> TableStats:
    """Like compress, but only counts rows and dictionary entries."""
    scanner = StreamScanner(CountingAssembler())
    for chunk in _iter_chunks(stream):
        scanner.feed(chunk)
    scanner.flush()
    if scanner.consumed != int(total_len):
        raise IntegrityError(
            f"stream produced {scanner.consumed} values, expected {total_len}"
        )
    return scanner._asm.finish(int(total_len))


def decompress(ct: CompressedTable) -> np.ndarray:
    return ct.decompress()


def value_at(ct: CompressedTable, k: int) -> float:
    return ct.value_at(k)


def dump_table(ct: CompressedTable, fp: BinaryIO | str) -> None:
    """Write the table in a little-endian binary layout."""
    own = isinstance(fp, str)
    f = open(fp, "wb") if own else fp
    try:
        f.write(_MAGIC)
        header = np.array(
            [ct.total_len, ct.n_rows, ct.run_values.size, ct.phrase_first.size],
            dtype="<u8",
        )
        f.write(header.tobytes())
        for arr, dt in (
            (ct.run_values, "<f8"),
            (ct.run_lengths, "<i8"),
            (ct.phrase_first, "<f8"),
            (ct.phrase_rest, "<f8"),
            (ct.phrase_lengths, "<i8"),
            (ct.kinds, "u1"),
            (ct.ids, "<i8"),
            (ct.counts, "<i8"),
            (ct.start_offsets, "<i8"),
        ):
            f.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    finally:
        if own:
            f.close()


def load_table(fp: BinaryIO | str) -> CompressedTable:
    own = isinstance(fp, str)
    f = open(fp, "rb") if own else fp
    try:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise IntegrityError("not a compressed table file")
        total_len, m, n_runs, n_phrases = np.frombuffer(f.read(32), dtype="<u8")
        def arr(count, dt):
            dt = np.dtype(dt)
            buf = f.read(int(count) * dt.itemsize)
            if len(buf) != int(count) * dt.itemsize:
                raise IntegrityError("truncated table file")
            return np.frombuffer(buf, dtype=dt).copy()
        ct = CompressedTable(
            run_values=arr(n_runs, "<f8"),
            run_lengths=arr(n_runs, "<i8").astype(np.int64),
            phrase_first=arr(n_phrases, "<f8"),
            phrase_rest=arr(n_phrases, "<f8"),
            phrase_lengths=arr(n_phrases, "<i8").astype(np.int64),
            kinds=arr(m, "u1"),
            ids=arr(m, "<i8").astype(np.int64),
            counts=arr(m, "<i8").astype(np.int64),
            start_offsets=arr(m, "<i8").astype(np.int64),
            total_len=int(total_len),
        )
        ct.validate()
        return ct
    finally:
        if own:
            f.close()

"""Compressed-table construction, round trips, and binary persistence."""
from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relcomp.ctable import (
    PHRASE,
    RUN,
    CompressedTable,
    CountingAssembler,
    StreamScanner,
    TableAssembler,
    compress,
    compress_stats,
    decompress,
    dump_table,
    load_table,
    value_at,
)
from relcomp.errors import DomainError, IntegrityError


def rows_of(ct: CompressedTable):
    """Readable row tuples for asserting exact scanner output."""
    out = []
    for j in range(ct.n_rows):
        i = ct.ids[j]
        if ct.kinds[j] == RUN:
            out.append(("run", float(ct.run_values[i]), int(ct.run_lengths[i]),
                        int(ct.counts[j])))
        else:
            out.append(("phrase", float(ct.phrase_first[i]),
                        float(ct.phrase_rest[i]), int(ct.phrase_lengths[i]),
                        int(ct.counts[j])))
    return out


def roundtrip(vals) -> CompressedTable:
    arr = np.asarray(vals, dtype=np.float64)
    ct = compress(arr, arr.size)
    ct.validate()
    assert np.array_equal(decompress(ct), arr)  # bit-exact, no arithmetic
    return ct


def test_constant_run():
    ct = roundtrip([0.3, 0.3, 0.3, 0.3])
    assert rows_of(ct) == [("run", 0.3, 4, 1)]
    assert ct.start_offsets.tolist() == [1]


def test_alternation_phrase():
    ct = roundtrip([1, 0, 0, 1, 0, 0])
    assert rows_of(ct) == [("phrase", 1.0, 0.0, 3, 2)]


def test_scanner_segmentation_cases():
    assert rows_of(roundtrip([5.0])) == [("run", 5.0, 1, 1)]
    assert rows_of(roundtrip([1.0, 2.0])) == [
        ("run", 1.0, 1, 1), ("run", 2.0, 1, 1)]
    assert rows_of(roundtrip([1.0, 2.0, 2.0])) == [("phrase", 1.0, 2.0, 3, 1)]
    assert rows_of(roundtrip([1.0, 1.0, 2.0, 2.0])) == [
        ("run", 1.0, 2, 1), ("run", 2.0, 2, 1)]
    assert rows_of(roundtrip([1, 0, 0, 1, 0, 0, 7, 7, 7])) == [
        ("phrase", 1.0, 0.0, 3, 2), ("run", 7.0, 3, 1)]
    assert rows_of(roundtrip([3.0, 1.0, 2.0, 2.0, 2.0, 9.0])) == [
        ("run", 3.0, 1, 1), ("phrase", 1.0, 2.0, 4, 1), ("run", 9.0, 1, 1)]


def test_dictionary_deduplication():
    ct = roundtrip([1, 0, 0, 5, 5, 1, 0, 0])
    assert ct.phrase_first.size == 1  # both (1,0,3) phrases share one entry
    assert ct.run_values.size == 1
    assert ct.ids[0] == ct.ids[2]


def test_start_offsets():
    ct = roundtrip([3.0, 1.0, 2.0, 2.0, 2.0, 9.0])
    assert ct.start_offsets.tolist() == [1, 2, 6]
    assert ct.total_len == 6


def test_ref_groups():
    ct = roundtrip([1, 0, 0, 5, 5, 1, 0, 0])
    groups = ct.ref_groups
    # the shared phrase entry is referenced from offsets 1 and 6
    assert groups[(PHRASE, 0)].tolist() == [1, 6]
    assert groups[(RUN, 0)].tolist() == [4]


def test_empty_table():
    ct = compress(np.zeros(0), 0)
    ct.validate()
    assert ct.n_rows == 0
    assert decompress(ct).size == 0


def test_chunked_feed_equals_single_feed():
    rng = np.random.default_rng(42)
    pool = np.array([0.0, 0.0, 0.0, 1.0, 0.25, 0.75])
    vals = pool[rng.integers(0, pool.size, size=3000)]
    whole = compress(vals, vals.size)
    for chunk in (1, 2, 3, 7, 64, 999):
        parts = [vals[i:i + chunk] for i in range(0, vals.size, chunk)]
        ct = compress(parts, vals.size)
        assert rows_of(ct) == rows_of(whole)
        assert np.array_equal(ct.start_offsets, whole.start_offsets)


def test_stream_length_mismatch():
    with pytest.raises(IntegrityError):
        compress([1.0, 2.0, 3.0], 4)
    with pytest.raises(IntegrityError):
        compress_stats([1.0, 2.0, 3.0], 2)


def test_value_at():
    ct = roundtrip([1, 0, 0, 1, 0, 0])
    assert value_at(ct, 4) == 1.0
    const = roundtrip([2.5] * 10)
    for k in (1, 5, 10):
        assert const.value_at(k) == 2.5
    rng = np.random.default_rng(3)
    vals = rng.random(500)
    ct = roundtrip(vals)
    ks = rng.integers(1, 501, size=100)
    assert np.array_equal(ct.values_at(ks), vals[ks - 1])
    with pytest.raises(DomainError):
        ct.value_at(0)
    with pytest.raises(DomainError):
        ct.value_at(501)


def test_counting_assembler_matches_real_assembler():
    rng = np.random.default_rng(7)
    pool = np.array([0.0, 1.0, 0.5, 0.5, 0.5, 0.125])
    for _ in range(20):
        vals = pool[rng.integers(0, pool.size, size=int(rng.integers(1, 2000)))]
        ct = compress(vals, vals.size)
        st = compress_stats(vals, vals.size)
        assert st.n_rows == ct.n_rows
        assert st.n_run_entries == ct.run_values.size
        assert st.n_phrase_entries == ct.phrase_first.size
        assert st.total_len == ct.total_len
        assert st.compressed_bytes == ct.nbytes_compressed
        assert st.dense_equivalent_bytes == vals.size * 8


def test_compression_never_inflates_row_count():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(1, 500))
        vals = rng.random(n)  # worst case: all distinct
        ct = compress(vals, n)
        assert ct.n_rows <= n


def test_quorum_indicator_is_run_dominated():
    # indicator stream of a 2-of-20 voting rule over all 2^20 parent rows
    n = 20
    offs = np.arange(1 << n, dtype=np.int64)
    pop = np.zeros(offs.size, dtype=np.int64)
    for b in range(n):
        pop += (offs >> b) & 1
    ind = (pop >= 2).astype(np.float64)
    st = compress_stats(ind, ind.size)
    assert st.compressed_bytes < 0.01 * st.dense_equivalent_bytes


@settings(max_examples=120, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0, 0.5, 0.25]), min_size=1, max_size=200))
def test_round_trip_structured(vals):
    roundtrip(vals)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=1, allow_nan=False),
                min_size=1, max_size=120))
def test_round_trip_random_reals(vals):
    roundtrip(vals)


# ---------------------------------------------------------------------------
# persistence


def test_dump_load_file(tmp_path):
    vals = np.array([1, 0, 0, 1, 0, 0, 7, 7, 7, 2], dtype=np.float64)
    ct = compress(vals, vals.size)
    path = str(tmp_path / "t.rct")
    dump_table(ct, path)
    back = load_table(path)
    assert np.array_equal(decompress(back), vals)
    assert rows_of(back) == rows_of(ct)


def test_dump_load_stream():
    vals = np.linspace(0, 1, 17)
    ct = compress(vals, vals.size)
    buf = io.BytesIO()
    dump_table(ct, buf)
    buf.seek(0)
    back = load_table(buf)
    assert np.array_equal(decompress(back), vals)


def test_load_rejects_bad_magic():
    with pytest.raises(IntegrityError):
        load_table(io.BytesIO(b"not a table"))


def test_load_rejects_truncation():
    vals = np.array([1.0, 2.0, 2.0, 9.0])
    ct = compress(vals, vals.size)
    buf = io.BytesIO()
    dump_table(ct, buf)
    data = buf.getvalue()
    with pytest.raises(IntegrityError):
        load_table(io.BytesIO(data[:-8]))


# ---------------------------------------------------------------------------
# validate() rejections


def one_run_table() -> CompressedTable:
    return CompressedTable(
        kinds=np.array([RUN], dtype=np.uint8),
        ids=np.array([0], dtype=np.int64),
        counts=np.array([1], dtype=np.int64),
        run_values=np.array([2.0]),
        run_lengths=np.array([3], dtype=np.int64),
        phrase_first=np.zeros(0),
        phrase_rest=np.zeros(0),
        phrase_lengths=np.zeros(0, dtype=np.int64),
        start_offsets=np.array([1], dtype=np.int64),
        total_len=3,
    )


def test_validate_accepts_good_table():
    one_run_table().validate()


def test_validate_rejects_zero_count():
    ct = one_run_table()
    ct.counts[0] = 0
    with pytest.raises(IntegrityError):
        ct.validate()


def test_validate_rejects_dangling_run_id():
    ct = one_run_table()
    ct.ids[0] = 5
    with pytest.raises(IntegrityError):
        ct.validate()


def test_validate_rejects_bad_first_offset():
    ct = one_run_table()
    ct.start_offsets[0] = 2
    with pytest.raises(IntegrityError):
        ct.validate()


def test_validate_rejects_span_mismatch():
    ct = one_run_table()
    ct = CompressedTable(**{**ct.__dict__, "total_len": 4,
                            "_ref_groups": None})
    with pytest.raises(IntegrityError):
        ct.validate()


def test_validate_rejects_short_phrase():
    ct = CompressedTable(
        kinds=np.array([PHRASE], dtype=np.uint8),
        ids=np.array([0], dtype=np.int64),
        counts=np.array([1], dtype=np.int64),
        run_values=np.zeros(0),
        run_lengths=np.zeros(0, dtype=np.int64),
        phrase_first=np.array([1.0]),
        phrase_rest=np.array([0.0]),
        phrase_lengths=np.array([1], dtype=np.int64),
        start_offsets=np.array([1], dtype=np.int64),
        total_len=1,
    )
    with pytest.raises(IntegrityError):
        ct.validate()


def test_validate_rejects_nonempty_length_on_empty_table():
    ct = compress(np.zeros(0), 0)
    broken = CompressedTable(**{**ct.__dict__, "total_len": 2,
                                "_ref_groups": None})
    with pytest.raises(IntegrityError):
        broken.validate()


def test_assembler_direct_use():
    asm = TableAssembler()
    asm.add_segment(RUN, 0.5, 0.0, 4)
    asm.add_segment(PHRASE, 1.0, 0.0, 3)
    asm.add_segment(PHRASE, 1.0, 0.0, 3)  # folds into count 2
    ct = asm.finish(10)
    ct.validate()
    assert np.array_equal(
        decompress(ct), np.array([0.5] * 4 + [1, 0, 0, 1, 0, 0]))
    assert ct.n_rows == 2


def test_scanner_flush_required_for_tail():
    sc = StreamScanner(CountingAssembler())
    sc.feed(np.array([1.0, 1.0, 2.0]))
    assert sc.consumed == 3
    sc.flush()
    st = sc._asm.finish(3)
    assert st.n_rows >= 1

"""Streaming elimination of the fastest-varying node, against the dense oracle."""
from __future__ import annotations

import numpy as np
import pytest

from relcomp.ctable import compress, decompress
from relcomp.eliminate import (
    CompressedSource,
    DenseSource,
    eliminate_last,
    eliminate_last_oracle,
    reorder_generate,
)
from relcomp.errors import DomainError, ModelError


def check_against_oracle(vals, n, weights=None):
    arr = np.asarray(vals, dtype=np.float64)
    ct = compress(arr, arr.size)
    got = eliminate_last(ct, n, weights)
    want = eliminate_last_oracle(ct, n, weights)
    got.validate()
    assert got.total_len == arr.size // n
    a, b = decompress(got), decompress(want)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    return got


def test_single_group_sums_to_one():
    got = check_against_oracle([0.3, 0.7], 2)
    assert decompress(got).tolist() == [1.0]


def test_plain_group_sum():
    got = check_against_oracle([1.0, 2.0, 3.0, 4.0], 2)
    assert decompress(got).tolist() == [3.0, 7.0]


def test_aligned_run_no_carry():
    # a run of length 6 under width 3 folds to a run of length 2, value 3r
    r = 0.125
    got = check_against_oracle([r] * 6, 3)
    assert decompress(got).tolist() == [3 * r, 3 * r]
    assert got.n_rows == 1


def test_run_with_leading_partial_group():
    # first group already holds one value when the run arrives
    check_against_oracle([5.0, 1.0, 1.0, 1.0], 2)


def test_run_with_deep_partial_group():
    # three group slots consumed before the run starts (width 4)
    check_against_oracle([9.0, 8.0, 7.0, 1.0, 1.0, 1.0, 1.0, 1.0], 4)


def test_phrase_crossing_group_boundary():
    got = check_against_oracle([1, 0, 0, 1, 0, 0], 2)
    assert decompress(got).tolist() == [1.0, 1.0, 0.0]


def test_two_output_rows_from_one_input_row():
    # the length-5 run splits: two full groups plus a carry into the next
    got = check_against_oracle([1, 1, 1, 1, 1, 9], 2)
    assert decompress(got).tolist() == [2.0, 2.0, 10.0]


def test_weighted_elimination():
    got = check_against_oracle([1.0, 2.0, 3.0, 4.0], 2, weights=[0.25, 0.5])
    assert np.allclose(decompress(got), [1.25, 2.75], atol=1e-12)


def test_weighted_runs_scale_by_weight_sum():
    w = [0.2, 0.3, 0.5]
    got = check_against_oracle([4.0] * 6, 3, weights=w)
    assert np.allclose(decompress(got), [4.0, 4.0], atol=1e-12)


def test_mass_conservation_unweighted():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(2, 6))
        groups = int(rng.integers(1, 400))
        vals = rng.random(n * groups)
        ct = compress(vals, vals.size)
        out = eliminate_last(ct, n)
        assert abs(decompress(out).sum() - vals.sum()) <= 1e-12 * vals.size


def test_composition_two_eliminations():
    rng = np.random.default_rng(9)
    n1, n2, groups = 3, 2, 50
    vals = rng.random(groups * n1 * n2)
    ct = compress(vals, vals.size)
    step = eliminate_last(eliminate_last(ct, n2), n1)
    once = eliminate_last_oracle(ct, n1 * n2)
    assert np.allclose(decompress(step), decompress(once), atol=1e-12)


def test_randomized_oracle_equivalence():
    rng = np.random.default_rng(17)
    pool = np.array([0.0, 1.0, 0.5, 0.5, 0.25])
    for _ in range(40):
        n = int(rng.integers(2, 6))
        groups = int(rng.integers(1, 300))
        if rng.random() < 0.5:
            vals = pool[rng.integers(0, pool.size, size=n * groups)]
        else:
            vals = rng.random(n * groups)
        weights = rng.random(n) if rng.random() < 0.5 else None
        check_against_oracle(vals, n, weights)


def test_elimination_errors():
    ct = compress(np.array([1.0, 2.0, 3.0]), 3)
    with pytest.raises(ModelError):
        eliminate_last(ct, 2)  # 3 not divisible by 2
    with pytest.raises(DomainError):
        eliminate_last(ct, 0)
    with pytest.raises(DomainError):
        eliminate_last(ct, 3, weights=[1.0, 1.0])
    with pytest.raises(ModelError):
        eliminate_last_oracle(ct, 2)
    with pytest.raises(DomainError):
        eliminate_last_oracle(ct, 3, weights=[1.0])


# ---------------------------------------------------------------------------
# reorder_generate


def test_reorder_identity():
    rng = np.random.default_rng(2)
    vals = rng.random(24)
    src = DenseSource(vals, (2, 3, 4))
    out = reorder_generate(src, (0, 1, 2))
    assert np.allclose(decompress(out), vals, atol=0)


def test_reorder_swap_matches_dense_transpose():
    rng = np.random.default_rng(4)
    vals = rng.random(6)
    src = DenseSource(vals, (2, 3))
    out = reorder_generate(src, (1, 0))
    want = vals.reshape(2, 3).T.ravel()
    assert np.array_equal(decompress(out), want)


def test_reorder_three_axes():
    rng = np.random.default_rng(6)
    radices = (2, 3, 4)
    vals = rng.random(24)
    perm = (2, 0, 1)
    out = reorder_generate(DenseSource(vals, radices), perm)
    want = vals.reshape(radices).transpose(perm).ravel()
    assert np.array_equal(decompress(out), want)
    # compressed adapter agrees with the dense adapter
    ct = compress(vals, vals.size)
    out2 = reorder_generate(CompressedSource(ct, radices), perm)
    assert np.array_equal(decompress(out2), want)


def test_reorder_chunked_generation():
    rng = np.random.default_rng(8)
    vals = rng.random(210)
    out = reorder_generate(DenseSource(vals, (5, 6, 7)), (2, 1, 0),
                           chunk_size=17)
    want = vals.reshape(5, 6, 7).transpose(2, 1, 0).ravel()
    assert np.array_equal(decompress(out), want)


def test_reorder_rejects_bad_permutation():
    src = DenseSource(np.zeros(6), (2, 3))
    with pytest.raises(DomainError):
        reorder_generate(src, (0, 0))
    with pytest.raises(DomainError):
        reorder_generate(src, (0,))


def test_source_radix_mismatch():
    with pytest.raises(ModelError):
        DenseSource(np.zeros(5), (2, 3))
    ct = compress(np.zeros(6), 6)
    with pytest.raises(ModelError):
        CompressedSource(ct, (2, 2))

"""Mixed-radix row indexing: frozen examples plus bijection properties."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relcomp.errors import DomainError, ModelError
from relcomp.radix import (
    decode_offsets,
    encode_offsets,
    row_to_states,
    states_to_row,
    strides,
    total_states,
)


def test_total_states():
    assert total_states(()) == 1
    assert total_states((2, 3)) == 6
    assert total_states((2, 2, 2)) == 8


def test_row_to_states_examples():
    # first row is all ones
    assert row_to_states(1, (2, 3)) == (1, 1)
    # rightmost component varies fastest
    assert row_to_states(4, (2, 3)) == (2, 1)
    # two binary children: row 4 is (2, 2)
    assert row_to_states(4, (2, 2)) == (2, 2)


def test_states_to_row_examples():
    assert states_to_row((1, 1), (2, 3)) == 1
    assert states_to_row((1, 1, 1), (5, 4, 3)) == 1
    assert states_to_row((2, 3), (2, 3)) == 6
    assert states_to_row((2, 1, 2), (2, 2, 2)) == 6


def test_row_range_guard():
    with pytest.raises(DomainError):
        row_to_states(0, (2, 3))
    with pytest.raises(DomainError):
        row_to_states(7, (2, 3))
    with pytest.raises(DomainError):
        states_to_row((3, 1), (2, 3))
    with pytest.raises(DomainError):
        states_to_row((1,), (2, 3))


def test_radix_validation():
    with pytest.raises(ModelError):
        total_states((2, 0))
    with pytest.raises(ModelError):
        total_states((2, -3))
    # int64 overflow guard
    with pytest.raises(ModelError):
        total_states((2**32, 2**32))


def test_strides_rightmost_fastest():
    assert tuple(strides((2, 3, 4))) == (12, 4, 1)
    assert tuple(strides((5,))) == (1,)


def test_fastest_varying_component():
    # advancing the row index by one changes the last component, with carry
    radices = (2, 3, 2)
    prev = row_to_states(1, radices)
    for k in range(2, total_states(radices) + 1):
        cur = row_to_states(k, radices)
        if prev[-1] < radices[-1]:
            assert cur == prev[:-1] + (prev[-1] + 1,)
        else:
            assert cur[-1] == 1
        prev = cur


def test_exhaustive_round_trip_small():
    for radices in [(2,), (3, 2), (2, 3, 4), (5, 1, 2)]:
        seen = set()
        for k in range(1, total_states(radices) + 1):
            s = row_to_states(k, radices)
            assert states_to_row(s, radices) == k
            seen.add(s)
        assert len(seen) == total_states(radices)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=10),
    st.data(),
)
def test_round_trip_random(radices, data):
    radices = tuple(radices)
    total = total_states(radices)
    k = data.draw(st.integers(min_value=1, max_value=total))
    assert states_to_row(row_to_states(k, radices), radices) == k


def test_decode_encode_vectorized():
    radices = (3, 2, 4)
    offs = np.arange(total_states(radices), dtype=np.int64)
    states0 = decode_offsets(offs, radices)
    assert states0.shape == (24, 3)
    # offsets are the 0-based counterpart of the 1-based row functions
    for k in (1, 7, 24):
        assert tuple(states0[k - 1] + 1) == row_to_states(k, radices)
    back = encode_offsets(states0, radices)
    assert np.array_equal(back, offs)


def test_encode_offsets_shape_guard():
    with pytest.raises(DomainError):
        encode_offsets(np.zeros((3, 3), dtype=np.int64), (2, 2))

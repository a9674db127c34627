import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordinal_depth.errors import ArgumentError, ShapeError
from ordinal_depth.tensorcore import (
    Rng, elementwise, flat_index, load_ordt, mix64, ordt_dumps, ordt_loads, reduce,
    rng_uniform, save_ordt, tensor,
)


def test_elementwise_examples():
    np.testing.assert_array_equal(elementwise("add", [1, 2], [3, 4]), [4, 6])
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(elementwise("mul", x, np.ones_like(x)), x)
    np.testing.assert_array_equal(elementwise("sub", x, x), np.zeros_like(x))


def test_elementwise_errors():
    with pytest.raises(ShapeError):
        elementwise("add", np.ones(3), np.ones(4))
    with pytest.raises(ArgumentError):
        elementwise("div", np.ones(3), np.ones(3))


def test_reduce_examples():
    assert reduce("sum", [1.0, 2.0, 3.0], 0) == 6.0
    assert np.all(reduce("mean", np.full((3, 4), 2.5), 1) == 2.5)
    assert reduce("max", [-1.0, 5.0, 2.0], 0) == 5.0
    assert reduce("sum", np.ones((2, 3, 4)), 1).shape == (2, 4)
    with pytest.raises(ShapeError):
        reduce("sum", np.ones((2, 3)), 2)


def test_tensor_rejects_wrong_extent():
    assert tensor(range(6), (2, 3)).shape == (2, 3)
    with pytest.raises(ShapeError):
        tensor(range(5), (2, 3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_flat_index_matches_nested_loops(dims):
    expected = 0
    for idx in itertools.product(*(range(d) for d in dims)):
        assert flat_index(idx, dims) == expected
        expected += 1
    arr = np.arange(expected).reshape(dims)
    for idx in itertools.product(*(range(d) for d in dims)):
        assert arr[idx] == flat_index(idx, dims)


def test_rng_is_deterministic():
    a = rng_uniform(Rng(42), (7, 5), 0.0, 1.0)
    b = rng_uniform(Rng(42), (7, 5), 0.0, 1.0)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, rng_uniform(Rng(43), (7, 5), 0.0, 1.0))


def test_rng_stream_is_position_based():
    r = Rng(9)
    first = r.random((10,))
    second = r.random((5,))
    whole = Rng(9).random((15,))
    np.testing.assert_array_equal(np.concatenate([first, second]), whole)


def test_rng_known_words():
    # reference values from the scalar SplitMix64 definition
    key = mix64(123)
    golden = 0x9E3779B97F4A7C15
    expected = [mix64((key + k * golden) & ((1 << 64) - 1)) for k in (1, 2, 3)]
    assert [int(w) for w in Rng(123).words(3)] == expected


def test_rng_uniform_mean_and_range():
    x = rng_uniform(Rng(1), (100_000,), 0.0, 1.0)
    assert abs(x.mean() - 0.5) < 0.01
    assert x.min() >= 0.0 and x.max() < 1.0
    y = rng_uniform(Rng(2), (1000,), -3.0, -2.0)
    assert y.min() >= -3.0 and y.max() < -2.0


def test_rng_uniform_edge_cases():
    assert rng_uniform(Rng(0), (0,), 0.0, 1.0).shape == (0,)
    with pytest.raises(ArgumentError):
        rng_uniform(Rng(0), (3,), 1.0, 1.0)


def test_split_streams_are_independent_of_parent_use():
    parent = Rng(5)
    child_before = parent.split(3).random((4,))
    parent.random((100,))
    child_after = parent.split(3).random((4,))
    np.testing.assert_array_equal(child_before, child_after)
    assert not np.array_equal(parent.split(3).random((4,)), parent.split(4).random((4,)))


def test_ordt_header_layout():
    data = ordt_dumps(np.arange(6.0).reshape(2, 3))
    assert data[:4] == b"ORDT"
    assert data[4:7] == bytes([1, 0, 2])
    assert data[7:15] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert len(data) == 15 + 6 * 4
    assert data[15 + 4:15 + 8] == np.float32(1.0).tobytes()


def test_ordt_roundtrip(tmp_path):
    t = rng_uniform(Rng(3), (2, 3, 4), -5, 5)
    save_ordt(tmp_path / "t.ordt", t)
    back = load_ordt(tmp_path / "t.ordt")
    np.testing.assert_array_equal(back, t.astype(np.float32).astype(np.float64))
    assert ordt_dumps(back) == ordt_dumps(t)


def test_ordt_rejects_garbage():
    with pytest.raises(ArgumentError):
        ordt_loads(b"NOPE\x01\x00\x00")
    with pytest.raises(ShapeError):
        ordt_loads(ordt_dumps(np.ones(3))[:-1])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordinal_depth.codec import decode, decode_to_depth, encode, threshold
from ordinal_depth.discretizer import DiscretizationSpec, classes_of_depths, depths_of_classes
from ordinal_depth.errors import ArgumentError, ShapeError
from ordinal_depth.tensorcore import Rng


def vec(v):
    """(m,) vector -> (m, 1, 1) volume."""
    return np.asarray(v, dtype=np.float64).reshape(-1, 1, 1)


def test_encode_examples():
    np.testing.assert_array_equal(encode(np.array([[3]]), 5)[:, 0, 0], [1, 1, 1, 0, 0])
    np.testing.assert_array_equal(encode(np.array([[1]]), 5)[:, 0, 0], [1, 0, 0, 0, 0])
    np.testing.assert_array_equal(encode(np.array([[5]]), 5)[:, 0, 0], [1, 1, 1, 1, 1])


def test_encode_prefix_and_count():
    cls = Rng(3).integers(7, (4, 6)) + 1
    bits = encode(cls, 7)
    assert bits.shape == (7, 4, 6)
    np.testing.assert_array_equal(bits.sum(axis=0), cls)
    assert np.all(np.diff(bits, axis=0) <= 0)


def test_encode_batch_axis():
    cls = Rng(3).integers(5, (2, 3, 4)) + 1
    bits = encode(cls, 5)
    assert bits.shape == (2, 5, 3, 4)
    np.testing.assert_array_equal(decode(bits), cls)


def test_encode_range_error():
    with pytest.raises(ArgumentError):
        encode(np.array([[0]]), 5)
    with pytest.raises(ArgumentError):
        encode(np.array([[6]]), 5)


def test_threshold_inclusive_at_half():
    np.testing.assert_array_equal(threshold(vec([0.9, 0.5, 0.49]))[:, 0, 0], [1, 1, 0])
    assert not threshold(np.zeros((4, 2, 2))).any()
    assert threshold(np.ones((4, 2, 2))).all()


def test_decode_examples():
    assert decode(vec([1, 1, 1, 0, 0]))[0, 0] == 3
    assert decode(vec([1, 0, 1, 1, 1]))[0, 0] == 1
    assert decode(vec([0, 1, 1, 1, 1]))[0, 0] == 0


@pytest.mark.parametrize("m_d", [2, 96, 128, 160])
def test_decode_encode_exhaustive(m_d):
    cls = np.arange(1, m_d + 1).reshape(1, m_d)
    np.testing.assert_array_equal(decode(threshold(encode(cls, m_d))), cls)


def _naive_decode(z):
    m, h, w = z.shape
    out = np.zeros((h, w), dtype=np.int64)
    for i in range(h):
        for j in range(w):
            for k in range(m):
                if z[k, i, j] < 0.5:
                    break
                out[i, j] += 1
    return out


def test_decode_to_depth_matches_loop_reference():
    spec = DiscretizationSpec(2.0, 80.0, 16)
    # bias towards ones so that long runs occur
    probs = Rng(6).random((16, 9, 7)) ** 0.2
    depth, valid = decode_to_depth(probs, spec)
    cls = _naive_decode(threshold(probs))
    for i in range(9):
        for j in range(7):
            if cls[i, j] == 0:
                assert not valid[i, j] and depth[i, j] == 0.0
            else:
                assert valid[i, j]
                assert depth[i, j] == 1.0 / (spec.rho_min * 0 + _boundary(spec, cls[i, j]))


def _boundary(spec, c):
    return 1.0 / depths_of_classes(spec, np.array([c]))[0]


def test_decode_to_depth_roundtrip_of_quantised_depth():
    spec = DiscretizationSpec(2.0, 80.0, 128)
    d = Rng(2).uniform((5, 6), 2.0, 80.0)
    cls = classes_of_depths(spec, d)
    depth, valid = decode_to_depth(encode(cls, 128), spec)
    assert valid.all()
    np.testing.assert_array_equal(depth, depths_of_classes(spec, cls))


def test_decode_to_depth_all_zero_is_invalid():
    spec = DiscretizationSpec(2.0, 80.0, 8)
    depth, valid = decode_to_depth(np.zeros((8, 3, 3)), spec)
    assert not valid.any()
    assert np.all(depth == 0.0)


def test_decode_to_depth_shape_mismatch():
    with pytest.raises(ShapeError):
        decode_to_depth(np.zeros((7, 3, 3)), DiscretizationSpec(2.0, 80.0, 8))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40))
def test_decode_monotone_on_prefixes(a, b):
    m = 40
    za, zb = encode(np.array([[a]]), m), encode(np.array([[b]]), m)
    if np.all(za >= zb):
        assert decode(za)[0, 0] >= decode(zb)[0, 0]
    assert decode(za)[0, 0] <= m


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_threshold_decode_invariant_to_monotone_remap(seed):
    p = Rng(seed).random((12, 3, 3))
    # strictly increasing on [0, 1] with g(0.5) = 0.5
    remapped = np.where(p < 0.5, 0.5 * (2 * p) ** 3, 0.5 + 0.5 * np.sqrt(np.clip(2 * p - 1, 0, None)))
    np.testing.assert_array_equal(decode(threshold(p)), decode(threshold(remapped)))

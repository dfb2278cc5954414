import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mpikit.tensor import NO_ARGMAX, PoolMode, ShapeError, add, mask_mul, maxpool_same, sub

GRID = np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3)


def brute_pool(t, valid=None):
    c, h, w = t.shape
    out = np.zeros_like(t)
    arg = np.full(t.shape, NO_ARGMAX)
    for ch in range(c):
        for y in range(h):
            for x in range(w):
                best = None
                for yy in range(y - 1, y + 2):
                    for xx in range(x - 1, x + 2):
                        if 0 <= yy < h and 0 <= xx < w and (valid is None or valid[yy, xx]):
                            if best is None or t[ch, yy, xx] > best:
                                best, arg[ch, y, x] = t[ch, yy, xx], yy * w + xx
                if best is not None:
                    out[ch, y, x] = best
    return out, arg


def test_pool_grid_center_and_corner():
    out, arg = maxpool_same(GRID)
    assert out[0, 1, 1] == 9
    assert out[0, 0, 0] == 5
    assert divmod(int(arg[0, 0, 0]), 3) == (1, 1)


def test_pool_constant_is_identity():
    t = np.full((2, 4, 5), 3.25, dtype=np.float32)
    out, _ = maxpool_same(t)
    np.testing.assert_array_equal(out, t)


def test_masked_sentinel_excludes_invalid():
    t = np.array([[[-1, -2], [-3, -4]]], dtype=np.float32)
    valid = np.array([[0, 1], [1, 1]], dtype=np.uint8)
    out, arg = maxpool_same(t, valid, PoolMode.MASKED_SENTINEL)
    assert out[0, 0, 1] == -2
    assert arg[0, 0, 1] == 1


def test_masked_sentinel_no_valid_neighbor_gives_zero_and_none():
    t = np.array([[[5, 1, 1, 7]]], dtype=np.float32)
    valid = np.array([[0, 0, 0, 1]], dtype=np.uint8)
    out, arg = maxpool_same(t, valid, PoolMode.MASKED_SENTINEL)
    assert out[0, 0, 0] == 0 and arg[0, 0, 0] == NO_ARGMAX
    assert out[0, 0, 2] == 7


def test_zero_fill_ignores_mask():
    t = np.array([[[-1, -2], [-3, -4]]], dtype=np.float32)
    out, _ = maxpool_same(t, np.zeros((2, 2)), PoolMode.ZERO_FILL)
    np.testing.assert_array_equal(out, np.full((1, 2, 2), -1, dtype=np.float32))


def test_ties_row_major_first():
    t = np.ones((1, 3, 3), dtype=np.float32)
    _, arg = maxpool_same(t)
    assert arg[0, 1, 1] == 0
    assert arg[0, 2, 2] == 4


def test_batched_matches_per_item(rng):
    t = rng.integers(0, 4, size=(3, 2, 5, 6)).astype(np.float32)
    valid = rng.integers(0, 2, size=(3, 5, 6))
    out, arg = maxpool_same(t, valid, PoolMode.MASKED_SENTINEL)
    for i in range(3):
        o, a = maxpool_same(t[i], valid[i], PoolMode.MASKED_SENTINEL)
        np.testing.assert_array_equal(out[i], o)
        np.testing.assert_array_equal(arg[i], a)


@settings(max_examples=150, deadline=None)
@given(arrays(np.int8, st.tuples(st.integers(1, 3), st.integers(1, 7), st.integers(1, 7)),
              elements=st.integers(-3, 3)), st.data())
def test_pool_matches_brute_force(t, data):
    t = t.astype(np.float32)
    valid = data.draw(arrays(np.bool_, t.shape[1:]))
    for mode, v in ((PoolMode.ZERO_FILL, None), (PoolMode.MASKED_SENTINEL, valid)):
        out, arg = maxpool_same(t, valid, mode)
        ref_out, ref_arg = brute_pool(t, v)
        np.testing.assert_array_equal(out, ref_out)
        np.testing.assert_array_equal(arg, ref_arg)
        # argmax stays inside the window and on valid positions
        h, w = t.shape[1:]
        ys, xs = np.divmod(np.where(arg >= 0, arg, 0), w)
        yy, xx = np.indices((h, w))
        sel = arg >= 0
        assert np.all(np.abs(ys - yy)[sel] <= 1) and np.all(np.abs(xs - xx)[sel] <= 1)
        if v is not None:
            assert np.all(valid.ravel()[arg[sel]])


def test_pool_dominates_input_for_nonnegative(rng):
    t = rng.random((2, 6, 6)).astype(np.float32)
    out, _ = maxpool_same(t)
    assert np.all(out >= t)


def test_pool_shape_mismatch():
    with pytest.raises(ShapeError):
        maxpool_same(GRID, np.ones((2, 2)), PoolMode.MASKED_SENTINEL)


def test_rank_checked():
    with pytest.raises(ShapeError):
        maxpool_same(np.ones((3, 3)))


def test_mask_mul_examples():
    t = np.array([[[1, 2], [3, 4]]], dtype=np.float32)
    np.testing.assert_array_equal(mask_mul(t, np.array([[1, 0], [0, 1]])), [[[1, 0], [0, 4]]])
    np.testing.assert_array_equal(mask_mul(t, np.ones((2, 2))), t)
    z = mask_mul(-t, np.zeros((2, 2)))
    assert np.all(z == 0) and not np.any(np.signbit(z))


def test_mask_mul_idempotent(rng):
    t = rng.normal(size=(3, 4, 5)).astype(np.float32)
    m = rng.integers(0, 2, size=(4, 5))
    once = mask_mul(t, m)
    np.testing.assert_array_equal(mask_mul(once, m), once)


def test_mask_mul_shape_mismatch():
    with pytest.raises(ShapeError):
        mask_mul(GRID, np.ones((2, 3)))


def test_elementwise():
    a = np.array([[[1, 2]]], dtype=np.float32)
    b = np.array([[[3, 4]]], dtype=np.float32)
    np.testing.assert_array_equal(add(a, b), [[[4, 6]]])
    np.testing.assert_array_equal(add(a, np.zeros_like(a)), a)
    np.testing.assert_array_equal(sub(a, a), np.zeros_like(a))
    with pytest.raises(ShapeError):
        add(a, GRID)

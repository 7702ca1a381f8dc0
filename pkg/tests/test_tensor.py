import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tfcnet.tensor import (NonFiniteError, Shape, ShapeError, concat, flat_index, map_elementwise,
                           matmul, pad_zeros, permute_axes, precision_dtype, reduce, reshape,
                           strides_of, verify_mode, zip_elementwise)

shapes = hnp.array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5)


@given(shapes)
def test_strides_are_trailing_products(shape):
    strides = strides_of(shape)
    assert strides[-1] == 1
    for i in range(len(shape) - 1):
        assert strides[i] == strides[i + 1] * shape[i + 1]
    assert strides_of((2, 3, 4)) == (12, 4, 1)


@given(shapes, st.data())
def test_flat_index_matches_numpy(shape, data):
    idx = tuple(data.draw(st.integers(0, n - 1)) for n in shape)
    assert flat_index(idx, shape) == np.ravel_multi_index(idx, shape)


def test_matmul_naive_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    ref = np.array([[sum(a[i, k] * b[k, j] for k in range(4)) for j in range(2)] for i in range(3)])
    np.testing.assert_allclose(matmul(a, b), ref, rtol=1e-12)
    with pytest.raises(ShapeError):
        matmul(a, a)
    with pytest.raises(ShapeError):
        matmul(a[0], b)


def test_concat_checks_other_axes():
    a, b = np.ones((2, 3)), np.zeros((2, 1))
    assert concat(a, b).shape == (2, 4)
    with pytest.raises(ShapeError):
        concat(a, b, axis=0)
    with pytest.raises(ShapeError):
        concat(a, b, axis=2)


@given(hnp.arrays(np.float64, shapes, elements=st.floats(-10, 10)))
def test_map_vectorized_equals_ufunc(x):
    np.testing.assert_array_equal(map_elementwise(x, lambda v: max(v, 0.0)), np.maximum(x, 0))
    np.testing.assert_array_equal(map_elementwise(x, np.abs), np.abs(x))
    np.testing.assert_array_equal(zip_elementwise(x, x, lambda p, q: p - q), np.zeros_like(x))


@pytest.mark.parametrize("kind,ref", [("sum", np.sum), ("mean", np.mean)])
def test_reduce(kind, ref):
    x = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_allclose(reduce(x, kind, axis=1), ref(x, axis=1))
    assert reduce(x, kind) == pytest.approx(ref(x))
    assert reduce(x, "argmax") == 23
    np.testing.assert_array_equal(reduce(x, "argmax", axis=-1), np.full((2, 3), 3))
    with pytest.raises(ValueError):
        reduce(x, "median")


def test_pad_permute_reshape():
    x = np.arange(6.0).reshape(2, 3)
    p = pad_zeros(x, [(1, 0), (0, 2)])
    assert p.shape == (3, 5) and p[0].sum() == 0 and p[1:, :3].tolist() == x.tolist()
    with pytest.raises(ShapeError):
        pad_zeros(x, [(1, 1)])
    with pytest.raises(ValueError):
        pad_zeros(x, [(-1, 0), (0, 0)])
    assert permute_axes(x, (1, 0)).flags.c_contiguous
    with pytest.raises(ShapeError):
        permute_axes(x, (0, 0))
    with pytest.raises(ShapeError):
        reshape(x, (4, 2))


def test_shape_roles():
    s = Shape.sequence(2, 10, (64, 64), 1)
    assert s.spatial == (64, 64) and s.axis("time") == 1 and s.axis("feature") == 4
    assert s.matches(np.zeros((2, 10, 64, 64, 1)))
    with pytest.raises(ShapeError):
        Shape((2, 3), ("feature", "batch"))
    with pytest.raises(ShapeError):
        Shape((2, 3, 4), ("batch", "spatial-1", "time"))
    with pytest.raises(ShapeError):
        Shape((2, 2), ("batch", "batch"))
    with pytest.raises(ShapeError):
        Shape((0,), ("batch",))


def test_verify_mode_catches_nan():
    bad = np.array([[np.nan]])
    matmul(bad, bad)  # silent by default
    with verify_mode():
        with pytest.raises(NonFiniteError):
            matmul(bad, bad)
        with pytest.raises(NonFiniteError), np.errstate(invalid="ignore"):
            map_elementwise(np.array([-1.0]), np.log)


def test_precision():
    assert precision_dtype(32) == np.float32 and precision_dtype(64) == np.float64
    with pytest.raises(ValueError):
        precision_dtype(16)

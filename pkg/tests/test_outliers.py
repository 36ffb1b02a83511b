import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ezquant import (
    DenseMatrix,
    OutlierSet,
    QuantConfig,
    detect_outliers,
    initial_scale,
    normal_mask_apply,
    scatter_outliers,
)


def cfg(n):
    return QuantConfig(sigma_n=n)


def test_detect_hand_example():
    o = detect_outliers(DenseMatrix([[0, 0, 0, 0, 100]]), cfg(2))
    assert o.entries == [(0, 4, 100.0)]
    assert (o.mean, o.std, o.sigma_n) == (20.0, 40.0, 2.0)


@pytest.mark.parametrize("n", [0.0, 1.0, 3.0])
def test_constant_matrix_has_no_outliers(n):
    assert len(detect_outliers(DenseMatrix(np.full((4, 5), 2.5)), cfg(n))) == 0


def test_boundary_ties_count():
    # mean 50.5, std 49.5: both entries sit exactly at 1 sigma
    o = detect_outliers(DenseMatrix([[1.0, 100.0]]), cfg(1))
    assert len(o) == 2


def test_gaussian_fraction_n3():
    W = DenseMatrix(np.random.default_rng(11).standard_normal((1000, 1000)))
    frac = detect_outliers(W, cfg(3)).fraction
    assert 0.0017 <= frac <= 0.0037


def test_fraction_under_one_percent_at_three_sigma():
    W = DenseMatrix(np.random.default_rng(5).standard_normal((512, 512)))
    assert detect_outliers(W, cfg(3.0)).fraction < 0.01


def test_fraction_at_two_and_a_half_sigma_tracks_gaussian_tail():
    # 2*Phi(-2.5) = 1.242%: a pure Gaussian sits just above 1% at this threshold
    W = DenseMatrix(np.random.default_rng(5).standard_normal((1000, 1000)))
    frac = detect_outliers(W, cfg(2.5)).fraction
    assert frac == pytest.approx(0.012419, rel=0.05)


def test_sorted_output():
    W = DenseMatrix(np.random.default_rng(2).standard_normal((64, 64)))
    o = detect_outliers(W, cfg(1.5))
    flat = o.row * 64 + o.col
    assert (np.diff(flat) > 0).all()


def test_normal_mask_apply():
    v, pos = normal_mask_apply([1, 9, 2], {1})
    assert v.tolist() == [1, 2] and pos.tolist() == [0, 2]
    v, pos = normal_mask_apply([1, 9, 2], set())
    assert v.tolist() == [1, 9, 2]
    v, pos = normal_mask_apply([1, 9, 2], {0, 1, 2})
    assert v.size == 0
    assert initial_scale(v if v.size else np.zeros(1), QuantConfig()) == 1.0


def test_scatter_examples():
    Z = DenseMatrix([[0.0, 0.0]])
    assert scatter_outliers(Z, OutlierSet.empty((1, 2))) == Z
    out = scatter_outliers(Z, OutlierSet((1, 2), [0], [1], [7.5]))
    assert out.data.tolist() == [[0.0, 7.5]]
    with pytest.raises(IndexError):
        scatter_outliers(Z, OutlierSet((2, 2), [1], [1], [1.0]))


matrices = st.tuples(st.integers(1, 24), st.integers(1, 24), st.integers(0, 2**31))


def _rand(shape_seed, heavy=True):
    r, c, seed = shape_seed
    rng = np.random.default_rng(seed)
    x = rng.standard_t(3, size=(r, c)) if heavy else rng.standard_normal((r, c))
    return DenseMatrix(x)


@given(matrices)
def test_scatter_roundtrip_exact(shape_seed):
    W = _rand(shape_seed)
    o = detect_outliers(W, cfg(2))
    out = scatter_outliers(DenseMatrix(np.zeros(W.shape)), o)
    assert out.data[o.row, o.col].tobytes() == W.data[o.row, o.col].tobytes()


@given(matrices, st.floats(0, 5), st.floats(0, 5))
def test_monotone_in_n(shape_seed, a, b):
    W = _rand(shape_seed)
    lo, hi = sorted((a, b))
    big = set(map(tuple, np.c_[detect_outliers(W, cfg(lo)).row, detect_outliers(W, cfg(lo)).col].tolist()))
    o = detect_outliers(W, cfg(hi))
    small = set(zip(o.row.tolist(), o.col.tolist()))
    assert small <= big


@given(matrices)
def test_n_zero_marks_everything(shape_seed):
    W = _rand(shape_seed)
    o = detect_outliers(W, cfg(0))
    if o.std > 0:
        assert len(o) == W.rows * W.cols


@given(matrices, st.sampled_from([-4.0, -0.5, 0.5, 2.0, 8.0]), st.sampled_from([0.0, 1.0, -3.0, 16.0]))
def test_affine_invariance(shape_seed, a, b):
    # power-of-two a and small integer b keep the float32 transform exact here
    W = _rand(shape_seed, heavy=False)
    V = DenseMatrix(W.data.astype(np.float64) * a + b)
    if not np.array_equal((V.data.astype(np.float64) - b) / a, W.data):
        return
    o1, o2 = detect_outliers(W, cfg(1.7)), detect_outliers(V, cfg(1.7))
    near = np.abs(np.abs(W.data - o1.mean) - 1.7 * o1.std) < 1e-9 * max(o1.std, 1)
    if near.any():
        return
    assert np.array_equal(o1.row, o2.row) and np.array_equal(o1.col, o2.col)

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ttnsel.tensor import (UnsupportedNorm, contract_mode, crude_upper_bound, matricize,
                           norm_upper_bound, operator_p_norm, sparsity_mask, truncated_svd,
                           unmatricize)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_contract_mode_examples():
    np.testing.assert_array_equal(contract_mode(np.eye(2), 1, np.array([1.0, 0.0])), [1, 0])
    np.testing.assert_array_equal(contract_mode(np.ones((2, 3)), 1, np.ones(3)), [3, 3])
    with pytest.raises(ValueError):
        contract_mode(np.ones((2, 3)), 1, np.ones(2))


def test_contract_mode_loop_oracle(rng):
    a = rng.standard_normal((2, 3, 2))
    v = rng.standard_normal(3)
    out = contract_mode(a, 1, v)
    expect = np.zeros((2, 2))
    for i, j, k in itertools.product(range(2), range(3), range(2)):
        expect[i, k] += a[i, j, k] * v[j]
    np.testing.assert_allclose(out, expect, rtol=1e-13, atol=1e-14)


@given(arrays(float, (3, 4, 2), elements=finite), arrays(float, 4, elements=finite),
       arrays(float, 4, elements=finite), finite)
def test_contract_mode_linear(a, u, v, c):
    lhs = contract_mode(a, 1, u + c * v)
    rhs = contract_mode(a, 1, u) + c * contract_mode(a, 1, v)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_matricize_examples(rng):
    m = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(matricize(m, [0]), m)
    np.testing.assert_array_equal(matricize(np.ones((2, 2, 2)), [0, 1]), np.ones((4, 2)))


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.data())
def test_matricize_roundtrip(shape, data):
    a = np.arange(np.prod(shape), dtype=float).reshape(shape)
    rows = data.draw(st.lists(st.sampled_from(range(len(shape))), unique=True))
    m = matricize(a, rows)
    assert m.shape[0] == int(np.prod([shape[k] for k in rows]))
    np.testing.assert_array_equal(unmatricize(m, a.shape, rows), a)


def test_truncated_svd_examples(rng):
    u, v = rng.standard_normal(4), rng.standard_normal(3)
    res = truncated_svd(np.outer(u, v), rel_tol=1e-12)
    assert res.rank == 1
    assert res.s[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-12)
    res = truncated_svd(np.eye(3), rank=2)
    assert np.linalg.norm(np.eye(3) - res.approx) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        truncated_svd(np.array([[np.nan]]))


def test_truncated_svd_eckart_young(rng):
    m = rng.standard_normal((5, 4))
    s_full = np.linalg.svd(m, compute_uv=False)
    errors = []
    for r in range(5):
        err2 = np.linalg.norm(m - truncated_svd(m, rank=r).approx) ** 2
        assert err2 == pytest.approx(np.sum(s_full[r:] ** 2), abs=1e-10)
        errors.append(err2)
    assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))


def test_operator_norm_examples():
    assert operator_p_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    a = np.zeros((2, 3, 2))
    a[1, 2, 0] = -3.0
    assert operator_p_norm(a) == pytest.approx(3.0, rel=1e-12)
    assert operator_p_norm(np.array([[1.0, -2.0], [0.5, 0.5]]), p=np.inf) == 3.0
    with pytest.raises(UnsupportedNorm):
        operator_p_norm(np.ones((2, 2, 2)), p=np.inf)
    with pytest.raises(UnsupportedNorm):
        operator_p_norm(np.ones(3))


def test_operator_norm_grid_oracle(rng):
    """max over unit z1, z2 of ||a(., z1, z2)||; 2x2x2 so a 0.5 degree angle grid suffices."""
    a = rng.standard_normal((2, 2, 2))
    th = np.deg2rad(np.arange(0, 180, 0.5))
    Z = np.stack([np.cos(th), np.sin(th)], axis=1)
    vals = np.einsum("ijk,aj,bk->abi", a, Z, Z)
    grid = np.sqrt((vals ** 2).sum(-1)).max()
    est = operator_p_norm(a)
    assert est >= grid - 1e-9  # power iteration converges to at least the grid max here
    assert est == pytest.approx(grid, abs=1e-3)
    assert est <= norm_upper_bound(a) + 1e-12 <= crude_upper_bound(a) + 1e-12


@given(st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
def test_operator_norm_homogeneous(c, seed):
    a = np.random.default_rng(seed).standard_normal((3, 2, 2))
    assert operator_p_norm(c * a) == pytest.approx(abs(c) * operator_p_norm(a), rel=1e-10)


def test_norm_upper_bound_is_upper(rng):
    for _ in range(20):
        a = rng.standard_normal((3, 2, 4))
        assert operator_p_norm(a) <= norm_upper_bound(a) * (1 + 1e-12)
        m = rng.standard_normal((3, 5))
        assert norm_upper_bound(m, p=np.inf) == pytest.approx(operator_p_norm(m, p=np.inf))


def test_sparsity_mask():
    m = sparsity_mask((2, 3), [(0, 1), (1, 2)])
    assert m.sum() == 2 and m[0, 1] and m[1, 2]
    with pytest.raises(IndexError):
        sparsity_mask((2, 3), [(2, 0)])

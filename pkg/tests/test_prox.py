import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unrollkit import prox
from unrollkit.dense import svd
from unrollkit.errors import ContractError

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)
positive = st.floats(min_value=1e-3, max_value=20)


def test_soft_threshold_examples():
    assert prox.soft_threshold(3.0, 1.0)[0, 0] == 2.0
    assert prox.soft_threshold(-0.5, 1.0)[0, 0] == 0.0
    x = np.random.default_rng(0).standard_normal((4, 4))
    assert np.array_equal(prox.soft_threshold(x, 0.0), x)
    with pytest.raises(ContractError):
        prox.soft_threshold(x, -0.1)


def test_soft_threshold_matches_oracle():
    z = np.random.default_rng(1).standard_normal((4, 4))
    ref = prox.prox_bruteforce_oracle("l1", z, 0.3, grid_step=1e-4)
    assert np.max(np.abs(prox.soft_threshold(z, 0.3) - ref)) <= 1e-4


@given(finite, finite, st.floats(min_value=0, max_value=10))
def test_soft_threshold_nonexpansive(a, b, lam):
    sa = prox.soft_threshold(a, lam)[0, 0]
    sb = prox.soft_threshold(b, lam)[0, 0]
    assert abs(sa - sb) <= abs(a - b) + 1e-12


@given(finite, st.floats(min_value=0, max_value=10), positive)
def test_soft_threshold_homogeneous(x, lam, c):
    lhs = prox.soft_threshold(c * x, c * lam)[0, 0]
    rhs = c * prox.soft_threshold(x, lam)[0, 0]
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_hard_threshold_examples():
    x = np.array([3.0, -1.0, 0.5, -4.0])
    assert np.array_equal(prox.hard_threshold_topk(x, 2).ravel(), [3.0, 0, 0, -4.0])
    assert not np.any(prox.hard_threshold_topk(x, 0))
    assert np.array_equal(prox.hard_threshold_topk(x, 4).ravel(), x)
    assert np.array_equal(prox.hard_threshold_topk([2.0, -2.0], 1).ravel(), [2.0, 0.0])
    with pytest.raises(ContractError):
        prox.hard_threshold_topk(x, 5)
    with pytest.raises(ContractError):
        prox.hard_threshold_topk(x, -1)


@given(st.lists(finite, min_size=1, max_size=30), st.data())
def test_hard_threshold_sparsity(values, data):
    k = data.draw(st.integers(min_value=0, max_value=len(values)))
    out = prox.hard_threshold_topk(values, k)
    assert np.count_nonzero(out) <= k
    kept = np.abs(out[out != 0])
    dropped = np.abs(np.asarray(values)[out.ravel() == 0])
    if kept.size and dropped.size:
        assert kept.min() >= dropped.max()


def test_sigmoid_plus_examples():
    assert prox.sigmoid_plus_threshold(-1.0, 0.3, 5.0)[0, 0] == 0.0
    assert prox.sigmoid_plus_threshold(2.0, 1.0, 10.0)[0, 0] == pytest.approx(
        2.0 / (1.0 + np.exp(-10.0)), rel=1e-15)
    assert prox.sigmoid_plus_threshold(2.0, 1.0, 10.0)[0, 0] == pytest.approx(1.999909, abs=1e-6)
    with pytest.raises(ContractError):
        prox.sigmoid_plus_threshold(1.0, 0.5, 0.0)


def test_sigmoid_plus_indicator_limit():
    alpha = 0.8
    x = np.linspace(0.0, 3.0, 3001)
    x = x[np.abs(x - alpha) >= 0.1]
    gap = prox.sigmoid_plus_threshold(x, alpha, 100.0).ravel() - x * (x > alpha)
    assert np.max(np.abs(gap)) <= 1e-3


@pytest.mark.parametrize("alpha,beta", [(0.0, 1.0), (0.5, 3.0), (1.0, 50.0), (2.0, 0.2)])
def test_sigmoid_plus_nonnegative_and_monotone(alpha, beta):
    x = np.linspace(-3.0, 5.0, 8001)
    y = prox.sigmoid_plus_threshold(x, alpha, beta).ravel()
    assert np.all(y >= 0)
    assert np.all(np.diff(y[x >= 0]) >= 0)


def test_row_group_examples():
    assert np.allclose(prox.row_group_soft_threshold([[3.0, 4.0]], 1.0), [[2.4, 3.2]],
                       rtol=0, atol=1e-15)
    small = np.array([[0.3, 0.4], [0.0, 0.0]])
    assert not np.any(prox.row_group_soft_threshold(small, 0.5))
    with pytest.raises(ContractError):
        prox.row_group_soft_threshold(small, -1.0)


def test_row_group_matches_oracle():
    z = np.random.default_rng(2).standard_normal((3, 4))
    ref = prox.prox_bruteforce_oracle("l12", z, 0.5, grid_step=1e-4)
    assert np.max(np.abs(prox.row_group_soft_threshold(z, 0.5) - ref)) <= 1e-4


@given(st.lists(finite, min_size=2, max_size=2), st.floats(min_value=0, max_value=10), positive)
def test_row_group_homogeneous(row, lam, c):
    x = np.array([row])
    lhs = prox.row_group_soft_threshold(c * x, c * lam)
    rhs = c * prox.row_group_soft_threshold(x, lam)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_svt_examples():
    assert np.allclose(prox.singular_value_threshold(np.diag([3.0, 1.0]), 2.0),
                       np.diag([1.0, 0.0]), atol=1e-14)
    x = np.random.default_rng(3).standard_normal((4, 6))
    assert np.max(np.abs(prox.singular_value_threshold(x, 0.0) - x)) <= 1e-8


@pytest.mark.parametrize("seed", range(4))
def test_svt_spectrum_is_shrunk_spectrum(seed):
    x = np.random.default_rng(seed).standard_normal((5, 7))
    lam = 0.8
    out, shrunk = prox.svt_with_values(x, lam)
    expect = np.maximum(svd(x).s - lam, 0.0)
    assert np.max(np.abs(svd(out).s - expect)) <= 1e-8
    assert np.array_equal(shrunk, expect)
    assert np.linalg.matrix_rank(out, tol=1e-8) <= np.linalg.matrix_rank(x)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(min_value=-3, max_value=3), min_size=6, max_size=6),
       st.floats(min_value=0, max_value=2), positive)
def test_svt_homogeneous(values, lam, c):
    x = np.array(values).reshape(2, 3)
    lhs = prox.singular_value_threshold(c * x, c * lam)
    rhs = c * prox.singular_value_threshold(x, lam)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_oracle_examples():
    assert prox.prox_bruteforce_oracle("l1", [[3.0]], 1.0)[0, 0] == pytest.approx(2.0, abs=1e-4)
    z = np.random.default_rng(4).standard_normal((3, 3))
    assert np.array_equal(prox.prox_bruteforce_oracle("zero", z, 0.7), z)
    with pytest.raises(ContractError):
        prox.prox_bruteforce_oracle("tv", z, 0.7)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(min_value=-4, max_value=4), min_size=5, max_size=5),
       st.floats(min_value=0, max_value=2))
def test_oracle_agrees_with_soft_threshold(values, lam):
    z = np.array([values])
    ref = prox.prox_bruteforce_oracle("l1", z, lam, grid_step=1e-3)
    assert np.max(np.abs(ref - prox.soft_threshold(z, lam))) <= 1e-3


SVT_CASES = {
    "rank_one_result": np.random.default_rng(1).standard_normal((2, 2)),
    "full_rank_result": np.array([[2.0, 0.5], [-0.3, 1.5]]),
}


@pytest.mark.parametrize("name", sorted(SVT_CASES))
def test_svt_matches_grid_oracle(name):
    from oracles import svt_grid_oracle

    z = SVT_CASES[name]
    ref = svt_grid_oracle(z, 0.7)
    assert np.max(np.abs(prox.singular_value_threshold(z, 0.7) - ref)) <= 1e-4

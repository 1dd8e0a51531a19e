import numpy as np
import pytest
from hypothesis import given, strategies as st

from test_network import admissible_ranks
from ttnsel.features import polynomial_map
from ttnsel.learn import ALSOptions, Dataset, Workspace, empirical_risk, fit_als
from ttnsel.network import ModelSpec, TreeTensorNetwork, evaluate_batch, random_network
from ttnsel.tree import DimensionTree, linear_tree, random_binary_tree


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(FloatingPointError):
        Dataset(np.array([[np.nan]]), np.zeros(1))
    assert Dataset(np.zeros(4), np.zeros(4)).X.shape == (4, 1)


def test_empirical_risk_examples():
    tree = linear_tree(2)
    fm = polynomial_map(2, 1)
    net = TreeTensorNetwork(tree, {n: 1 for n in tree.nodes}, {l: 1 for l in tree.leaves},
                            {n: (np.zeros((1, 1)) if tree.is_leaf(n) else np.ones((1, 1, 1)))
                             for n in tree.nodes})
    X = np.random.default_rng(0).uniform(size=(4, 2))
    assert empirical_risk(net, fm, Dataset(X, np.full(4, 2.0))) == 4.0
    ones = net.with_params({n: np.ones(v.shape) for n, v in net.params.items()})
    assert empirical_risk(ones, fm, Dataset(X, np.ones(4))) == pytest.approx(0.0, abs=1e-28)
    with pytest.raises(ValueError):
        empirical_risk(net, fm, Dataset(np.zeros((0, 2)), np.zeros(0)))


def test_random_risk_matches_loop(rng):
    tree = random_binary_tree(3, 1)
    fm = polynomial_map(3, 3)
    net = random_network(tree, admissible_ranks(tree, [3] * 3, rng), {l: 3 for l in tree.leaves},
                         rng)
    X, y = rng.uniform(size=(30, 3)), rng.standard_normal(30)
    pred = evaluate_batch(net, fm, X)
    loop = sum((y[i] - pred[i]) ** 2 for i in range(30)) / 30
    assert empirical_risk(net, fm, Dataset(X, y)) == pytest.approx(loop, rel=1e-13)


def test_single_leaf_is_linear_least_squares(rng):
    fm = polynomial_map(1, 5)
    tree = DimensionTree(1, {})
    X = rng.uniform(size=(200, 1))
    y = np.exp(X[:, 0]) + 0.01 * rng.standard_normal(200)
    rec = fit_als(ModelSpec(tree, {(1,): 1}, fm), Dataset(X, y), ALSOptions(ridge=0.0))
    Phi = fm.features(X)[0]
    coef = np.linalg.solve(Phi.T @ Phi, Phi.T @ y)
    np.testing.assert_allclose(rec.fitted.params[(1,)][0], coef, rtol=1e-10)


def test_zero_sweeps_returns_initial_risk(rng):
    tree = linear_tree(3)
    fm = polynomial_map(3, 2)
    X, y = rng.uniform(size=(40, 3)), rng.standard_normal(40)
    spec = ModelSpec(tree, {n: (1 if n == tree.root else 2) for n in tree.nodes}, fm)
    rec = fit_als(spec, Dataset(X, y), ALSOptions(max_sweeps=0, restarts=1))
    assert rec.meta["sweeps"] == 0
    assert rec.empirical_risk == pytest.approx(empirical_risk(rec.fitted, fm, Dataset(X, y)))


def test_fit_is_deterministic(rng):
    tree = random_binary_tree(4, 2)
    fm = polynomial_map(4, 3)
    X, y = rng.uniform(size=(80, 4)), rng.standard_normal(80)
    spec = ModelSpec(tree, {n: (1 if n == tree.root else 2) for n in tree.nodes}, fm)
    a = fit_als(spec, Dataset(X, y), ALSOptions(seed=4))
    b = fit_als(spec, Dataset(X, y), ALSOptions(seed=4))
    assert a.empirical_risk == b.empirical_risk
    for n in tree.nodes:
        np.testing.assert_array_equal(a.fitted.params[n], b.fitted.params[n])


@given(st.integers(0, 10**6), st.booleans())
def test_sweeps_are_monotone(seed, orth):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    tree = random_binary_tree(d, seed)
    dims = [int(rng.integers(2, 5)) for _ in range(d)]
    fm = polynomial_map(d, dims)
    spec = ModelSpec(tree, admissible_ranks(tree, dims, rng), fm)
    X = rng.uniform(size=(int(rng.integers(10, 60)), d))
    y = rng.standard_normal(len(X))
    rec = fit_als(spec, Dataset(X, y), ALSOptions(max_sweeps=15, rel_tol=0.0, restarts=1,
                                                  seed=seed, orthogonalize=orth))
    h = rec.meta["history"]
    assert all(b <= a + 1e-12 * (1 + a) for a, b in zip(h, h[1:]))


def test_sparse_fit_respects_pattern(rng):
    tree = linear_tree(3)
    fm = polynomial_map(3, 3)
    ranks = {n: (1 if n == tree.root else 2) for n in tree.nodes}
    spec0 = ModelSpec(tree, ranks, fm)
    masks = {n: rng.random(sh) < 0.7 for n, sh in
             ((n, random_network(tree, ranks, spec0.leaf_dims, rng).params[n].shape)
              for n in tree.nodes)}
    spec = ModelSpec(tree, ranks, fm, sparsity=masks)
    X, y = rng.uniform(size=(60, 3)), rng.standard_normal(60)
    rec = fit_als(spec, Dataset(X, y), ALSOptions(max_sweeps=5))
    for n in tree.nodes:
        assert np.all(rec.fitted.params[n][~masks[n]] == 0)
    h = rec.meta["history"]
    assert all(b <= a + 1e-12 * (1 + a) for a, b in zip(h, h[1:]))


def test_min_norm_flag_without_ridge(rng):
    fm = polynomial_map(1, 6)
    X = rng.uniform(size=(3, 1))
    rec = fit_als(ModelSpec(DimensionTree(1, {}), {(1,): 1}, fm), Dataset(X, X[:, 0]),
                  ALSOptions(ridge=0.0, restarts=1))
    assert "min-norm" in rec.meta["flags"]
    assert rec.empirical_risk < 1e-20


def test_workspace_design_reproduces_prediction(rng):
    tree = random_binary_tree(4, 3)
    fm = polynomial_map(4, 3)
    net = random_network(tree, admissible_ranks(tree, [3] * 4, rng), {l: 3 for l in tree.leaves},
                         rng)
    X = rng.uniform(size=(25, 4))
    ws = Workspace(net, fm.features(X), np.zeros(25))
    for node in tree.nodes:
        Z = ws.design(node)
        np.testing.assert_allclose(Z @ net.params[node].ravel(), evaluate_batch(net, fm, X),
                                   rtol=1e-10, atol=1e-12)

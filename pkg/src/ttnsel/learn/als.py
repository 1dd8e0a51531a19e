"""Empirical risk minimization over a fixed model by alternating least squares."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..network import (ModelSpec, TreeTensorNetwork, complexity, contract_children,
                       evaluate_features, leaf_features, normalize, orthogonalize_at,
                       qr_down, qr_up, random_network, _absorb)
from ..tree import Node


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float).ravel()
        if len(self.X) != len(self.y):
            raise ValueError(f"{len(self.X)} inputs but {len(self.y)} outputs")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise FloatingPointError("non-finite values in dataset")

    @property
    def n(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


@dataclass
class ALSOptions:
    max_sweeps: int = 30
    rel_tol: float = 1e-6
    ridge: float = 1e-10
    seed: int = 0
    restarts: int = 3
    orthogonalize: bool = True
    init: str = "mixed"  # uniform | constant | mixed (first restart constant, others uniform)


@dataclass
class ModelRecord:
    spec: ModelSpec
    fitted: TreeTensorNetwork
    empirical_risk: float
    complexity: int
    meta: dict = field(default_factory=dict)

    @property
    def id(self):
        return self.meta.get("id")


def empirical_risk(net: TreeTensorNetwork, fm, data: Dataset) -> float:
    """Mean squared residual (1/n) sum (y_i - f(x_i))^2."""
    if data.n < 1:
        raise ValueError("empty dataset")
    pred = evaluate_features(net, fm.features(data.X))
    return float(np.mean((data.y - pred) ** 2))


class Workspace:
    """Mutable fitting state: node tensors plus cached inner values g and outer values h.

    ``g[a]`` (n, r_a) is the subtree value at a; ``h[a]`` (n, r_a) is the contraction
    of everything outside the subtree, so that f = sum_k h[a][:, k] g[a][:, k].
    """

    def __init__(self, net: TreeTensorNetwork, feats: list[np.ndarray], y: np.ndarray):
        self.tree = net.tree
        self.ranks = dict(net.ranks)
        self.leaf_dims = dict(net.leaf_dims)
        self.sparsity = net.sparsity
        self.params = {n: np.array(v, dtype=float) for n, v in net.params.items()}
        self.phi = leaf_features(net, feats)
        self.y = y
        self.n = len(y)
        self._anc = {a: set(self.tree.ancestors(a)) for a in self.tree.nodes}
        self._g: dict[Node, np.ndarray] = {}
        self._h: dict[Node, np.ndarray] = {self.tree.root: np.ones((self.n, 1))}
        self.center: Node | None = None
        self.flags: set[str] = set()

    def snapshot(self) -> tuple:
        return {n: v.copy() for n, v in self.params.items()}, self.center

    def restore(self, state: tuple) -> None:
        params, self.center = state
        self.params = {n: v.copy() for n, v in params.items()}
        self._g.clear()
        self._h = {self.tree.root: np.ones((self.n, 1))}

    def network(self) -> TreeTensorNetwork:
        return TreeTensorNetwork(self.tree, dict(self.ranks), dict(self.leaf_dims),
                                 {n: v.copy() for n, v in self.params.items()}, self.sparsity)

    # -- cached values -----------------------------------------------------------
    def value(self, node: Node) -> np.ndarray:
        g = self._g.get(node)
        if g is None:
            v = self.params[node]
            if self.tree.is_leaf(node):
                g = self.phi[node] @ v.T
            else:
                g = contract_children(v, [self.value(c) for c in self.tree.kids(node)])
            self._g[node] = g
        return g

    def _changed(self, node: Node):
        """Tensor at ``node`` changed in a function-altering way."""
        self._g.pop(node, None)
        for a in self._anc[node]:
            self._g.pop(a, None)
        self._keep_outer(node)

    def _keep_outer(self, node: Node):
        keep = self._anc[node] | {node}
        self._h = {k: v for k, v in self._h.items() if k in keep}

    def outer(self, node: Node) -> np.ndarray:
        h = self._h.get(node)
        if h is not None:
            return h
        par = self.tree.parent[node]
        hp = self.outer(par)
        kids = self.tree.kids(par)
        i = kids.index(node)
        t = np.einsum("nk,k...->n...", hp, self.params[par])
        for j in reversed(range(len(kids))):
            if j != i:
                t = np.einsum("n...j,nj->n...", np.moveaxis(t, j + 1, -1), self.value(kids[j]))
        self._h[node] = t
        return t

    def prediction(self) -> np.ndarray:
        return self.value(self.tree.root)[:, 0]

    def risk(self) -> float:
        return float(np.mean((self.y - self.prediction()) ** 2))

    def design(self, node: Node) -> np.ndarray:
        """Rows z_i with f(x_i) = z_i . vec(v^node) (row-major over the node tensor)."""
        Z = self.outer(node)
        n = self.n
        factors = [self.phi[node]] if self.tree.is_leaf(node) else \
            [self.value(c) for c in self.tree.kids(node)]
        for F in factors:
            Z = (Z[:, :, None] * F[:, None, :]).reshape(n, -1)
        return Z

    # -- gauge -------------------------------------------------------------------
    def orthogonalize(self, node: Node):
        net = orthogonalize_at(self.network(), node)
        self.params = {n: v.copy() for n, v in net.params.items()}
        self._g.clear()
        self._h = {self.tree.root: self._h[self.tree.root]}
        self.center = node

    def move_center(self, target: Node):
        if self.center is None:
            self.orthogonalize(target)
            return
        tree = self.tree
        a = self.center
        up_target = target
        anc_t = self._anc[target] | {target}
        while a not in anc_t:  # move up to the common ancestor
            p = tree.parent[a]
            self.params[a], R = qr_up(self.params[a])
            mode = 1 + tree.kids(p).index(a)
            self.params[p] = _absorb(R, self.params[p], mode)
            self._g.pop(a, None)
            self._keep_outer(p)
            a = p
        chain = []
        b = up_target
        while b != a:
            chain.append(b)
            b = tree.parent[b]
        for c in reversed(chain):  # move down to the target
            mode = 1 + tree.kids(a).index(c)
            self.params[a], R = qr_down(self.params[a], mode)
            self.params[c] = _absorb(R, self.params[c], 0)
            gc = self._g.get(c)
            if gc is not None:
                self._g[c] = gc @ R.T
            self._keep_outer(a)
            a = c
        self.center = target

    # -- local solve -------------------------------------------------------------
    def update(self, node: Node, ridge: float) -> float:
        """Solve the ridge least-squares problem for one node; keep it if risk does not rise."""
        Z = self.design(node)
        v_old = self.params[node]
        mask = None if self.sparsity is None else self.sparsity[node].ravel()
        if mask is not None:
            Z = Z[:, mask]
            x_old = v_old.ravel()[mask]
        else:
            x_old = v_old.ravel()
        y = self.y
        if ridge > 0:
            G = Z.T @ Z
            b = Z.T @ y
            tr = np.trace(G)
            lam = ridge * tr / G.shape[0] if tr > 0 else ridge
            G[np.diag_indices_from(G)] += lam
            try:
                x = scipy.linalg.solve(G, b, assume_a="pos", check_finite=False)
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                x = np.linalg.lstsq(Z, y, rcond=None)[0]
                self.flags.add("lstsq-fallback")
        else:
            x, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
            if rank < Z.shape[1]:
                self.flags.add("min-norm")
        r_new = float(np.mean((y - Z @ x) ** 2))
        r_old = float(np.mean((y - Z @ x_old) ** 2))
        if not np.isfinite(r_new) or r_new > r_old:
            return r_old
        if mask is not None:
            full = np.zeros(v_old.size)
            full[mask] = x
            x = full
        self.params[node] = x.reshape(v_old.shape)
        self._changed(node)
        return r_new

    def sweep(self, ridge: float, orthogonalize: bool, nodes=None) -> float:
        risk = math.inf
        for node in nodes if nodes is not None else self.tree.preorder:
            if orthogonalize:
                self.move_center(node)
            risk = self.update(node, ridge)
        return risk


def run_als(ws: Workspace, max_sweeps: int, rel_tol: float, ridge: float,
            orthogonalize: bool = True) -> list[float]:
    """Sweeps until ``max_sweeps`` or a relative improvement below ``rel_tol``.

    A sweep that ends above its starting risk (possible only through round-off in the
    re-centering steps) is undone and ends the run, so the history never increases.
    """
    orth = orthogonalize and ws.sparsity is None
    history = [ws.risk()]
    for _ in range(max_sweeps):
        state = ws.snapshot()
        ws.sweep(ridge, orth)
        cur = ws.risk()
        prev = history[-1]
        if cur > prev:
            ws.restore(state)
            history.append(prev)
            break
        history.append(cur)
        if prev - cur <= rel_tol * prev or cur == 0.0:
            break
    return history


def initial_network(spec: ModelSpec, rng: np.random.Generator) -> TreeTensorNetwork:
    net = random_network(spec.tree, spec.ranks, spec.leaf_dims, rng, spec.sparsity)
    scale, unit = normalize(net)
    return unit if scale > 0 else net


def constant_network(spec: ModelSpec, feats, rng: np.random.Generator,
                     noise: float = 0.1) -> TreeTensorNetwork:
    """Start near the constant function: each leaf's first slice least-squares fits 1 on the
    sample, interior first slices are e_0; every entry gets a small uniform perturbation."""
    net = random_network(spec.tree, spec.ranks, spec.leaf_dims, rng, spec.sparsity)
    params = {}
    for node in spec.tree.nodes:
        v = noise * net.params[node]
        if spec.tree.is_leaf(node):
            phi = feats[node[0] - 1]
            c = np.linalg.lstsq(phi, np.ones(len(phi)), rcond=None)[0]
            v[0] += c / max(np.linalg.norm(c), 1e-300)
        else:
            v[(0,) * v.ndim] += 1.0
        if spec.sparsity is not None:
            v = v * spec.sparsity[node]
        params[node] = v
    return net.with_params(params)


def fit_als(spec: ModelSpec, data: Dataset, opts: ALSOptions | None = None,
            init: TreeTensorNetwork | None = None, feats=None) -> ModelRecord:
    """Best-of-``restarts`` ALS fit; with ``init`` a single warm-started run."""
    opts = opts or ALSOptions()
    if data.n < 1:
        raise ValueError("empty dataset")
    t0 = time.perf_counter()
    feats = spec.feature.features(data.X) if feats is None else feats
    rng = np.random.default_rng(opts.seed)
    if init is not None:
        starts = [init]
    else:
        k = max(1, opts.restarts)
        starts = [constant_network(spec, feats, rng)
                  if opts.init == "constant" or (opts.init == "mixed" and i == 0)
                  else initial_network(spec, rng) for i in range(k)]
    best = None
    for k, net0 in enumerate(starts):
        ws = Workspace(net0, feats, data.y)
        hist = run_als(ws, opts.max_sweeps, opts.rel_tol, opts.ridge, opts.orthogonalize)
        if best is None or hist[-1] < best[1][-1]:
            best = (ws, hist, k)
    ws, hist, k = best
    net = ws.network()
    meta = {"sweeps": len(hist) - 1, "history": hist, "restart": k, "seed": opts.seed,
            "flags": sorted(ws.flags), "fit_time": time.perf_counter() - t0}
    return ModelRecord(spec, net, hist[-1], complexity(spec), meta)

"""Tree tensor networks: parameters, evaluation, complexity, gauge operations, I/O.

Node tensors are stored per tree node. An interior node alpha with children
beta_1..beta_m holds an array of shape ``(r_alpha, r_beta_1, ..., r_beta_m)``; a leaf
``(nu,)`` holds ``(r_nu, N_nu)``. The root rank is always 1.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensor as tns
from .features import FeatureMap
from .tree import DimensionTree, Node, from_nested


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Model m = (tree, ranks, feature space, sparsity, radius)."""

    tree: DimensionTree
    ranks: dict[Node, int]
    feature: FeatureMap
    sparsity: dict[Node, np.ndarray] | None = None
    radius: float = 1.0

    def __post_init__(self):
        missing = [n for n in self.tree.nodes if n not in self.ranks]
        if missing:
            raise ShapeError(f"ranks missing for nodes {missing}")
        if self.ranks[self.tree.root] != 1:
            raise ShapeError("root rank must be 1")
        if self.radius < 1:
            raise ShapeError("radius must be >= 1")

    @property
    def leaf_dims(self) -> dict[Node, int]:
        dims = self.feature.dims
        return {leaf: dims[leaf[0] - 1] for leaf in self.tree.leaves}


def node_shape(tree: DimensionTree, ranks, leaf_dims, node: Node) -> tuple[int, ...]:
    if tree.is_leaf(node):
        return (ranks[node], leaf_dims[node])
    return (ranks[node],) + tuple(ranks[c] for c in tree.kids(node))


@dataclass(frozen=True)
class TreeTensorNetwork:
    tree: DimensionTree
    ranks: dict[Node, int]
    leaf_dims: dict[Node, int]
    params: dict[Node, np.ndarray] = field(repr=False)
    sparsity: dict[Node, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.ranks[self.tree.root] != 1:
            raise ShapeError("root rank must be 1")
        for node in self.tree.nodes:
            shape = node_shape(self.tree, self.ranks, self.leaf_dims, node)
            if self.params[node].shape != shape:
                raise ShapeError(f"node {node}: shape {self.params[node].shape} != {shape}")
            if self.sparsity is not None and self.sparsity[node].shape != shape:
                raise ShapeError(f"node {node}: sparsity shape mismatch")

    def shape(self, node: Node) -> tuple[int, ...]:
        return node_shape(self.tree, self.ranks, self.leaf_dims, node)

    def with_params(self, params: dict[Node, np.ndarray]) -> "TreeTensorNetwork":
        return replace(self, params=params)

    def scaled(self, node: Node, c: float) -> "TreeTensorNetwork":
        params = dict(self.params)
        params[node] = params[node] * c
        return self.with_params(params)


def random_network(tree: DimensionTree, ranks, leaf_dims, rng: np.random.Generator,
                   sparsity=None) -> TreeTensorNetwork:
    """Entries i.i.d. uniform on [-1, 1] (zeroed outside the sparsity pattern)."""
    params = {}
    for node in tree.nodes:
        v = rng.uniform(-1.0, 1.0, size=node_shape(tree, ranks, leaf_dims, node))
        if sparsity is not None:
            v = np.where(sparsity[node], v, 0.0)
        params[node] = v
    return TreeTensorNetwork(tree, dict(ranks), dict(leaf_dims), params, sparsity)


def contract_children(v: np.ndarray, gs: list[np.ndarray]) -> np.ndarray:
    """g[n, k] = sum_j v[k, j_1..j_m] prod_i gs[i][n, j_i] for a batch of n points."""
    t = np.einsum("nj,...j->n...", gs[-1], v)
    for g in reversed(gs[:-1]):
        t = np.einsum("n...j,nj->n...", t, g)
    return t


def leaf_features(net: TreeTensorNetwork, feats: list[np.ndarray]) -> dict[Node, np.ndarray]:
    out = {}
    for leaf in net.tree.leaves:
        phi = feats[leaf[0] - 1]
        if phi.shape[1] != net.leaf_dims[leaf]:
            raise ShapeError(f"leaf {leaf}: feature dim {phi.shape[1]} != {net.leaf_dims[leaf]}")
        out[leaf] = phi
    return out


def node_values(net: TreeTensorNetwork, feats: list[np.ndarray]) -> dict[Node, np.ndarray]:
    """Bottom-up values g^alpha (shape ``(n, r_alpha)``) at every node."""
    phis = leaf_features(net, feats)
    g: dict[Node, np.ndarray] = {}
    for node in net.tree.nodes:
        v = net.params[node]
        if net.tree.is_leaf(node):
            g[node] = phis[node] @ v.T
        else:
            g[node] = contract_children(v, [g[c] for c in net.tree.kids(node)])
    return g


def evaluate_features(net: TreeTensorNetwork, feats: list[np.ndarray]) -> np.ndarray:
    return node_values(net, feats)[net.tree.root][:, 0]


def evaluate_batch(net: TreeTensorNetwork, fm: FeatureMap, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return np.zeros(0)
    if xs.ndim == 1:
        xs = xs[:, None] if fm.d == 1 else xs[None, :]
    if len(fm.dims) != len(net.tree.leaves):
        raise ShapeError(f"feature map has {len(fm.dims)} variables, tree has {net.tree.d}")
    return evaluate_features(net, fm.features(xs))


def evaluate(net: TreeTensorNetwork, fm: FeatureMap, x) -> float:
    return float(evaluate_batch(net, fm, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def complexity(model) -> int:
    """Number of parameters (full) or of allowed nonzeros (if a sparsity pattern is set)."""
    tree, ranks = model.tree, model.ranks
    sparsity = getattr(model, "sparsity", None)
    if sparsity is not None:
        return int(sum(int(np.count_nonzero(sparsity[n])) for n in tree.nodes))
    leaf_dims = model.leaf_dims
    total = 0
    for node in tree.nodes:
        if tree.is_leaf(node):
            total += ranks[node] * leaf_dims[node]
        else:
            total += ranks[node] * math.prod(ranks[c] for c in tree.kids(node))
    return total


def node_norm_bound(v: np.ndarray, p: float = 2) -> float:
    """Certified upper bound on the operator p-norm of a node tensor (exact at order 2)."""
    if v.ndim == 2:
        return tns.operator_p_norm(v, 0, p)
    return tns.norm_upper_bound(v, 0, p)


def normalize(net: TreeTensorNetwork, p: float = 2) -> tuple[float, TreeTensorNetwork]:
    """Split ``net`` as ``scale * unit_net`` with every node norm of ``unit_net`` <= 1."""
    scale = 1.0
    params = {}
    for node in net.tree.nodes:
        v = net.params[node]
        nb = node_norm_bound(v, p)
        if nb == 0.0:
            zero = {n: np.zeros_like(net.params[n]) for n in net.tree.nodes}
            return 0.0, net.with_params(zero)
        params[node] = v / nb
        scale *= nb
    return scale, net.with_params(params)


def _absorb(R: np.ndarray, t: np.ndarray, mode: int) -> np.ndarray:
    """t'[.., j, ..] = sum_k R[j, k] t[.., k, ..] along ``mode``."""
    return np.moveaxis(np.tensordot(R, t, axes=([1], [mode])), 0, mode)


def qr_up(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormalize ``v`` toward its parent: returns (Q-tensor, R) with v = Q-tensor x_0 R^T.

    Rows of the (r, rest) matricization of the returned tensor are orthonormal unless
    r > rest, in which case zero rows pad the orthonormal ones.
    """
    r = v.shape[0]
    M = v.reshape(r, -1).T
    Q, R = np.linalg.qr(M)
    if Q.shape[1] < r:
        Q = np.hstack([Q, np.zeros((Q.shape[0], r - Q.shape[1]))])
        R = np.vstack([R, np.zeros((r - R.shape[0], r))])
    return Q.T.reshape(v.shape), R


def qr_down(v: np.ndarray, mode: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormalize ``v`` toward the child at tensor ``mode``; child absorbs R."""
    rows = [m for m in range(v.ndim) if m != mode]
    M = tns.matricize(v, rows)
    rk = v.shape[mode]
    Q, R = np.linalg.qr(M)
    if Q.shape[1] < rk:
        Q = np.hstack([Q, np.zeros((Q.shape[0], rk - Q.shape[1]))])
        R = np.vstack([R, np.zeros((rk - R.shape[0], rk))])
    return tns.unmatricize(Q, v.shape, rows), R


def orthogonalize_at(net: TreeTensorNetwork, node: Node) -> TreeTensorNetwork:
    """Equivalent network whose tensors, except at ``node``, are orthonormal toward it."""
    tree = net.tree
    params = {n: v.copy() for n, v in net.params.items()}
    path = set([node] + tree.ancestors(node))
    for n in tree.nodes:  # post-order
        if n in path:
            continue
        par = tree.parent[n]
        params[n], R = qr_up(params[n])
        mode = 1 + tree.kids(par).index(n)
        params[par] = _absorb(R, params[par], mode)
    chain = list(reversed(tree.ancestors(node))) + [node]
    for a, b in zip(chain[:-1], chain[1:]):
        mode = 1 + tree.kids(a).index(b)
        params[a], R = qr_down(params[a], mode)
        params[b] = _absorb(R, params[b], 0)
    return net.with_params(params)


def entropy_bound(C: int, eps: float, R: float = 1.0, tree_size: int = 1) -> float:
    """Metric-entropy bound C * log(3 R |T| / eps) with continuity constant 1."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return C * math.log(3.0 * R * tree_size / eps)


# -- serialization ---------------------------------------------------------------
#
# File layout: b"TTN1", uint32 LE header length, UTF-8 JSON header, then the payload.
# The header holds the nested-list tree, the per-node ranks / shapes / byte offsets
# (nodes in post-order), and leaf dims. The payload concatenates node tensors as
# little-endian float64, row-major, followed by optional sparsity masks as uint8.

_MAGIC = b"TTN1"


def save_network(net: TreeTensorNetwork, path) -> None:
    nodes = net.tree.nodes
    chunks, entries, offset = [], [], 0
    for n in nodes:
        data = np.ascontiguousarray(net.params[n], dtype="<f8").tobytes()
        entry = {"node": list(n), "rank": net.ranks[n], "shape": list(net.params[n].shape),
                 "offset": offset}
        chunks.append(data)
        offset += len(data)
        if net.sparsity is not None:
            mask = np.ascontiguousarray(net.sparsity[n], dtype=np.uint8).tobytes()
            entry["mask_offset"] = offset
            chunks.append(mask)
            offset += len(mask)
        entries.append(entry)
    header = {"format": "ttn", "version": 1, "tree": net.tree.to_nested(),
              "leaf_dims": {str(k[0]): v for k, v in net.leaf_dims.items()},
              "nodes": entries, "sparse": net.sparsity is not None}
    hb = json.dumps(header).encode()
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(hb)) + hb + b"".join(chunks))


def load_network(path) -> TreeTensorNetwork:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a tree tensor network file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen])
    body = raw[8 + hlen:]
    d = max(int(k) for k in header["leaf_dims"])
    tree = from_nested(header["tree"]) if d > 1 else DimensionTree(1, {})
    ranks, params, masks = {}, {}, {}
    for e in header["nodes"]:
        node = tuple(e["node"])
        size = math.prod(e["shape"])
        params[node] = np.frombuffer(body, "<f8", size, e["offset"]).reshape(e["shape"]).copy()
        ranks[node] = e["rank"]
        if header["sparse"]:
            masks[node] = np.frombuffer(body, np.uint8, size, e["mask_offset"]) \
                .reshape(e["shape"]).astype(bool)
    leaf_dims = {(int(k),): v for k, v in header["leaf_dims"].items()}
    return TreeTensorNetwork(tree, ranks, leaf_dims, params, masks if header["sparse"] else None)

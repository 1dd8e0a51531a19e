"""Adaptive exploration: rank increments along a fixed tree, tree moves, candidate collections."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..features import FeatureMap, TensorizedFeatureMap, feature_map_from_dict
from ..network import ModelSpec, TreeTensorNetwork, complexity, node_shape
from ..tree import (DimensionTree, Node, balanced_tree, from_nested, linear_tree,
                    random_binary_tree, validate)
from .als import ALSOptions, Dataset, ModelRecord, Workspace, fit_als, run_als

log = logging.getLogger(__name__)


# -- admissible rank increments ---------------------------------------------------

def _cap(tree, ranks, leaf_dims, node) -> int:
    if tree.is_leaf(node):
        return leaf_dims[node]
    return math.prod(ranks[c] for c in tree.kids(node))


def _violation(tree, ranks, leaf_dims):
    for a in tree.nodes:
        if a == tree.root:
            continue
        if ranks[a] > _cap(tree, ranks, leaf_dims, a):
            return "down", a
        p = tree.parent[a]
        up = ranks[p] * math.prod(ranks[s] for s in tree.kids(p) if s != a)
        if ranks[a] > up:
            return "up", a
    return None


def _can_grow(tree, ranks, leaf_dims, node) -> bool:
    if node == tree.root:
        return False
    return not tree.is_leaf(node) or ranks[node] < leaf_dims[node]


def rank_increment(tree: DimensionTree, ranks: dict, leaf_dims: dict, node: Node,
                   n_cap: int | None = None) -> dict | None:
    """Ranks after incrementing ``node``, completed with the fewest extra increments needed
    for admissibility (each rank bounded by the product of its children's ranks and by the
    product of its parent's and siblings' ranks). ``None`` if no admissible completion exists.
    """
    if not _can_grow(tree, ranks, leaf_dims, node):
        return None
    new = dict(ranks)
    new[node] += 1
    order = tree.index
    for _ in range(10 * len(tree) * max(new.values())):
        if n_cap is not None and max(new.values()) > n_cap:
            return None
        v = _violation(tree, new, leaf_dims)
        if v is None:
            return new
        kind, a = v
        if kind == "down":
            opts = [c for c in tree.kids(a) if _can_grow(tree, new, leaf_dims, c)]
        else:
            p = tree.parent[a]
            opts = [s for s in tree.kids(p) if s != a and _can_grow(tree, new, leaf_dims, s)]
            if not opts and p != tree.root:
                opts = [p]
        if not opts:
            return None
        pick = min(opts, key=lambda c: (new[c], order[c]))
        new[pick] += 1
    return None


def pad_network(net: TreeTensorNetwork, new_ranks: dict, rng: np.random.Generator,
                scale: float = 1.0) -> TreeTensorNetwork:
    """Embed ``net`` into larger ranks without changing the represented function.

    New output slices of a grown node are random; the matching input slices of its parent
    are zero.
    """
    tree = net.tree
    params = {}
    for node in tree.nodes:
        old = net.params[node]
        shape = node_shape(tree, new_ranks, net.leaf_dims, node)
        v = np.zeros(shape)
        v[tuple(slice(0, s) for s in old.shape)] = old
        extra = shape[0] - old.shape[0]
        if extra > 0:
            v[old.shape[0]:] = scale * rng.uniform(-1.0, 1.0, size=(extra,) + shape[1:])
        params[node] = v
    return TreeTensorNetwork(tree, dict(new_ranks), dict(net.leaf_dims), params, None)


# -- truncation-error estimates ---------------------------------------------------

@dataclass
class _Candidate:
    node: Node
    ranks: dict
    delta_c: int
    gain: float = 0.0
    warm: TreeTensorNetwork | None = None


def _probe(net: TreeTensorNetwork, new_ranks: dict, feats, y, ridge: float,
           rng: np.random.Generator, half_sweeps: int = 2):
    """Risk after a tentative increment followed by local updates on the touched nodes."""
    grown = [a for a in net.tree.nodes if new_ranks[a] > net.ranks[a]]
    touched = set(grown) | {net.tree.parent[a] for a in grown}
    order = [a for a in net.tree.preorder if a in touched]
    rms = math.sqrt(np.mean([np.mean(net.params[a] ** 2) for a in grown]))
    padded = pad_network(net, new_ranks, rng, scale=rms if rms > 0 else 1.0)
    ws = Workspace(padded, feats, y)
    before = ws.risk()
    for _ in range(half_sweeps):
        ws.sweep(ridge, orthogonalize=False, nodes=order)
    after = ws.risk()
    return max(before - after, 0.0), ws.network(), after


def _candidates(record_net: TreeTensorNetwork, n_cap: int | None) -> list[_Candidate]:
    tree = record_net.tree
    base_c = complexity(record_net)
    seen, out = set(), []
    for node in sorted(tree.nodes, key=lambda a: a):
        if node == tree.root:
            continue
        new = rank_increment(tree, record_net.ranks, record_net.leaf_dims, node, n_cap)
        if new is None:
            continue
        key = tuple(new[a] for a in tree.nodes)
        if key in seen:
            continue
        seen.add(key)
        dc = _complexity_of(tree, new, record_net.leaf_dims) - base_c
        out.append(_Candidate(node, new, dc))
    return out


def _complexity_of(tree, ranks, leaf_dims) -> int:
    total = 0
    for a in tree.nodes:
        total += ranks[a] * _cap(tree, ranks, leaf_dims, a)
    return total


def estimate_truncation_errors(record: ModelRecord, data: Dataset, *, ridge: float = 1e-10,
                               seed: int = 0, feats=None, n_cap: int | None = None,
                               _keep: list | None = None) -> dict[Node, float]:
    """Per node: empirical-risk decrease from incrementing that node's rank by one and
    running two local update passes. Nodes whose lone increment is inadmissible (or the
    root) get 0.

    Internally every node also yields a *closure* move -- the increment plus the fewest
    extra increments restoring admissibility -- which the rank path may pick; from the
    all-ones start no lone increment is admissible.
    """
    net = record.fitted
    feats = record.spec.feature.features(data.X) if feats is None else feats
    n_cap = data.n if n_cap is None else n_cap
    out = {a: 0.0 for a in net.tree.nodes}
    cands = _candidates(net, n_cap)
    for i, cand in enumerate(cands):
        rng = np.random.default_rng([seed, i])
        cand.gain, cand.warm, _ = _probe(net, cand.ranks, feats, data.y, ridge, rng)
        if sum(cand.ranks[a] - net.ranks[a] for a in net.tree.nodes) == 1:
            out[cand.node] = cand.gain
    if _keep is not None:
        _keep.extend(cands)
    return out


def _choose(cands: list[_Candidate], risk: float) -> _Candidate:
    """Largest gain; near-ties go to the smaller complexity increase, then smallest node."""
    tol = 1e-12 * max(risk, 1e-300)
    best_gain = max(c.gain for c in cands)
    tied = [c for c in cands if c.gain >= best_gain - tol]
    return min(tied, key=lambda c: (c.delta_c, c.node))


# -- rank-adaptive path -------------------------------------------------------------

@dataclass
class PathOptions:
    steps: int = 25
    als: ALSOptions = field(default_factory=lambda: ALSOptions(max_sweeps=20, rel_tol=1e-6))
    theta: float | None = None


def rank_adapt_path(tree: DimensionTree, fm: FeatureMap, data: Dataset,
                    steps: int = 25, opts: PathOptions | None = None,
                    meta: dict | None = None) -> list[ModelRecord]:
    """Records with increasing complexity, starting from all ranks equal to one."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    opts = opts or PathOptions(steps=steps)
    als = opts.als
    feats = fm.features(data.X)
    ranks = {a: 1 for a in tree.nodes}
    spec = ModelSpec(tree, ranks, fm)
    rec = fit_als(spec, data, als, feats=feats)
    rec.meta.update(meta or {}, step=0)
    path = [rec]
    for step in range(1, steps):
        cands: list[_Candidate] = []
        estimate_truncation_errors(rec, data, ridge=als.ridge, seed=als.seed + 7919 * step,
                                   feats=feats, _keep=cands)
        if not cands:
            log.info("no admissible rank increment left after %d steps", step)
            break
        if opts.theta is not None:
            chosen = _theta_merge(tree, rec.fitted, cands, opts.theta, data.n)
        else:
            chosen = _choose(cands, rec.empirical_risk)
        spec = ModelSpec(tree, chosen.ranks, fm)
        warm = chosen.warm
        t0 = time.perf_counter()
        ws = Workspace(warm, feats, data.y)
        hist = run_als(ws, als.max_sweeps, als.rel_tol, als.ridge, als.orthogonalize)
        rec = ModelRecord(spec, ws.network(), hist[-1], complexity(spec),
                          {**(meta or {}), "step": step, "sweeps": len(hist) - 1,
                           "history": hist, "seed": als.seed, "grown": list(chosen.node),
                           "flags": sorted(ws.flags),
                           "fit_time": time.perf_counter() - t0})
        path.append(rec)
    return path


def _theta_merge(tree, net, cands, theta, n_cap) -> _Candidate:
    """Grow every candidate whose gain is at least ``theta`` times the best one."""
    best = max(c.gain for c in cands)
    picked = [c for c in cands if c.gain >= theta * best] or cands[:1]
    ranks = dict(net.ranks)
    for c in picked:
        for a in tree.nodes:
            ranks[a] = max(ranks[a], c.ranks[a])
    while _violation(tree, ranks, net.leaf_dims) is not None:
        kind, a = _violation(tree, ranks, net.leaf_dims)
        fixed = rank_increment(tree, ranks, net.leaf_dims, a, n_cap)
        if fixed is None:
            return _choose(cands, 0.0)
        ranks = fixed
    top = max(picked, key=lambda c: c.gain)
    warm = pad_network(net, ranks, np.random.default_rng(0), scale=0.0)
    return _Candidate(top.node, ranks, _complexity_of(tree, ranks, net.leaf_dims)
                      - complexity(net), top.gain, warm)


# -- tree adaptation ----------------------------------------------------------------

def _relabel(nested, a: int, b: int):
    if isinstance(nested, int):
        return b if nested == a else a if nested == b else nested
    return [_relabel(c, a, b) for c in nested]


def _labels(nested) -> set[int]:
    if isinstance(nested, int):
        return {nested}
    return set().union(*(_labels(c) for c in nested))


def _subtrees(nested):
    yield nested
    if not isinstance(nested, int):
        for c in nested:
            yield from _subtrees(c)


def _prune(nested, target: set[int]):
    if isinstance(nested, int):
        return nested
    kids = [c for c in nested if _labels(c) != target]
    kids = [_prune(c, target) for c in kids]
    return kids[0] if len(kids) == 1 else kids


def _graft(nested, target: set[int], piece):
    if _labels(nested) == target:
        return [nested, piece]
    if isinstance(nested, int):
        return nested
    return [_graft(c, target, piece) for c in nested]


def random_move(tree: DimensionTree, rng: np.random.Generator) -> DimensionTree:
    """A leaf-pair swap or a subtree re-graft; both keep the partition property."""
    nested = tree.to_nested()
    if tree.d < 3:
        return tree
    if rng.random() < 0.5:
        a, b = rng.choice(np.arange(1, tree.d + 1), size=2, replace=False)
        return from_nested(_relabel(nested, int(a), int(b)))
    subs = [s for s in _subtrees(nested)][1:]
    piece = subs[rng.integers(len(subs))]
    plabels = _labels(piece)
    rest = _prune(nested, plabels)
    targets = [s for s in _subtrees(rest)]
    tgt = targets[rng.integers(len(targets))]
    return from_nested(_graft(rest, _labels(tgt), piece))


@dataclass
class TreeAdaptOptions:
    moves: int = 20
    seed: int = 0
    budget_steps: int = 8
    path: PathOptions = field(default_factory=lambda: PathOptions(
        als=ALSOptions(max_sweeps=10, rel_tol=1e-5, restarts=1)))


def _envelope_risk(path: list[ModelRecord], c_max: int) -> float:
    return min((r.empirical_risk for r in path if r.complexity <= c_max), default=math.inf)


def tree_adapt(data: Dataset, fm: FeatureMap, init_tree: DimensionTree,
               opts: TreeAdaptOptions | None = None) -> list[DimensionTree]:
    """Stochastic local search over trees; returns the distinct accepted trees in order.

    A candidate replaces the current tree when its budget-limited rank-adaptive path
    reaches a lower empirical risk at matched complexity, so the penalty terms agree.
    """
    opts = opts or TreeAdaptOptions()
    rng = np.random.default_rng(opts.seed)
    popts = replace(opts.path, steps=opts.budget_steps)
    current = init_tree
    cur_path = rank_adapt_path(current, fm, data, opts.budget_steps, popts)
    kept = [current]
    visited = {current}
    for _ in range(opts.moves):
        cand = random_move(current, rng)
        if cand in visited:
            continue
        visited.add(cand)
        assert validate(cand) is None
        path = rank_adapt_path(cand, fm, data, opts.budget_steps, popts)
        c_match = min(cur_path[-1].complexity, path[-1].complexity)
        if _envelope_risk(path, c_match) < _envelope_risk(cur_path, c_match) * (1 - 1e-9):
            current, cur_path = cand, path
            kept.append(cand)
    return kept


# -- candidate collections ----------------------------------------------------------

@dataclass
class CandidateConfig:
    """How to generate candidate models for one training sample.

    ``mode`` is ``tensorized`` (one linear tree per resolution), ``fixed-tree`` or
    ``tree-adaptive``. ``tree`` is ``balanced``, ``linear``, ``random``, ``corner_peak``
    or a nested list; ``features`` is a feature-map dict for the multivariate modes.
    """

    mode: str = "tensorized"
    L_range: tuple[int, ...] = tuple(range(1, 13))
    b: int = 2
    k: int = 0
    d: int = 1
    steps: int = 25
    tree: object = "balanced"
    features: dict | None = None
    als: ALSOptions = field(default_factory=lambda: ALSOptions(max_sweeps=20, rel_tol=1e-6))
    seed: int = 0
    tree_moves: int = 20
    tree_budget: int = 8
    tree_split: bool = False
    trees: tuple | None = None  # precomputed trees for tree-adaptive mode


def resolve_tree(spec, d: int, seed: int = 0) -> DimensionTree:
    from ..tree import corner_peak_tree
    if isinstance(spec, DimensionTree):
        return spec
    if spec == "balanced":
        return balanced_tree(d, 2)
    if spec == "linear":
        return linear_tree(d)
    if spec == "random":
        return random_binary_tree(d, seed)
    if spec == "corner_peak":
        return corner_peak_tree()
    return from_nested(spec)


def generate_candidates(config: CandidateConfig, data: Dataset) -> list[ModelRecord]:
    """All candidate records for one sample; a pure function of (config, data)."""
    if config is None or (config.mode == "tensorized" and not config.L_range):
        raise ValueError("empty candidate configuration")
    records: list[ModelRecord] = []

    def path_for(tree, fm, meta, salt):
        als = replace(config.als, seed=config.seed + 104729 * salt)
        return rank_adapt_path(tree, fm, data, config.steps,
                               PathOptions(steps=config.steps, als=als), meta=meta)

    if config.mode == "tensorized":
        for L in config.L_range:
            fm = TensorizedFeatureMap(config.b, L, config.d, config.k)
            tree = linear_tree(len(fm.dims))
            records += path_for(tree, fm, {"L": L}, L)
    elif config.mode == "fixed-tree":
        fm = feature_map_from_dict(config.features)
        tree = resolve_tree(config.tree, fm.n_vars, config.seed)
        records += path_for(tree, fm, {"L": None}, 0)
    elif config.mode == "tree-adaptive":
        fm = feature_map_from_dict(config.features)
        init = resolve_tree(config.tree, fm.n_vars, config.seed)
        explore = data
        if config.tree_split:
            idx = np.random.default_rng(config.seed).permutation(data.n)
            explore = data.subset(idx[: data.n // 2])
            data = data.subset(idx[data.n // 2:])
        topts = TreeAdaptOptions(moves=config.tree_moves, seed=config.seed,
                                 budget_steps=config.tree_budget)
        trees = list(config.trees) if config.trees else tree_adapt(explore, fm, init, topts)
        for j, tree in enumerate(trees):
            records += path_for(tree, fm, {"L": None, "tree_index": j}, j)
    else:
        raise ValueError(f"unknown candidate mode {config.mode!r}")
    for i, r in enumerate(records):
        r.meta["id"] = i
    return records

"""Dimension partition trees over the variables {1, ..., d}.

Nodes are sorted tuples of 1-based variable labels. Interior nodes carry an
ordered tuple of children (ordered by smallest element); leaves are singletons.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

Node = tuple[int, ...]


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class DimensionTree:
    """Rooted partition tree; ``children`` maps every interior node to its children."""

    d: int
    children: dict[Node, tuple[Node, ...]] = field(hash=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise TreeError(f"invalid dimension d={self.d}")
        canon = {}
        for node, kids in self.children.items():
            node = tuple(sorted(node))
            canon[node] = tuple(sorted((tuple(sorted(k)) for k in kids), key=lambda c: c[0]))
        object.__setattr__(self, "children", canon)

    # identity is the set of (node, children) pairs
    def __eq__(self, other):
        return isinstance(other, DimensionTree) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    @cached_property
    def key(self) -> tuple:
        return (self.d, tuple(sorted(self.children.items())))

    @property
    def root(self) -> Node:
        return tuple(range(1, self.d + 1))

    @cached_property
    def nodes(self) -> tuple[Node, ...]:
        """All nodes in post-order (children before parents, left to right)."""
        out: list[Node] = []

        def visit(node):
            for c in self.children.get(node, ()):
                visit(c)
            out.append(node)

        visit(self.root)
        return tuple(out)

    @cached_property
    def index(self) -> dict[Node, int]:
        return {node: i for i, node in enumerate(self.nodes)}

    @cached_property
    def parent(self) -> dict[Node, Node | None]:
        par: dict[Node, Node | None] = {self.root: None}
        for node, kids in self.children.items():
            for c in kids:
                par[c] = node
        return par

    def kids(self, node: Node) -> tuple[Node, ...]:
        return self.children.get(node, ())

    def is_leaf(self, node: Node) -> bool:
        return node not in self.children

    @cached_property
    def leaves(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if self.is_leaf(n))

    @cached_property
    def interior(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if not self.is_leaf(n))

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def preorder(self) -> tuple[Node, ...]:
        out: list[Node] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(self.kids(node)))
        return tuple(out)

    def ancestors(self, node: Node) -> list[Node]:
        """Ancestors of ``node`` from its parent up to the root."""
        out = []
        p = self.parent[node]
        while p is not None:
            out.append(p)
            p = self.parent[p]
        return out

    def depth(self, node: Node) -> int:
        return len(self.ancestors(node))

    @cached_property
    def arity(self) -> int:
        return max((len(k) for k in self.children.values()), default=0)

    def to_nested(self):
        """Nested-list form: a leaf is its variable label, an interior node a list."""

        def rec(node):
            if self.is_leaf(node):
                return node[0]
            return [rec(c) for c in self.kids(node)]

        return rec(self.root)

    @cached_property
    def hash(self) -> str:
        """Short stable digest of the tree structure."""
        text = json.dumps(self.to_nested(), separators=(",", ":"))
        return hashlib.sha1(text.encode()).hexdigest()[:12]

    def __repr__(self):
        return f"DimensionTree({self.to_nested()!r})"


def from_nested(spec) -> DimensionTree:
    """Build a tree from nested lists of 1-based leaf labels, e.g. ``[[1, 2], 3]``."""
    children: dict[Node, tuple[Node, ...]] = {}

    def rec(item) -> Node:
        if isinstance(item, (int, np.integer)):
            return (int(item),)
        if len(item) == 1:
            return rec(item[0])
        kids = [rec(c) for c in item]
        node = tuple(sorted(v for k in kids for v in k))
        if node in children:
            raise TreeError(f"duplicate node {node}")
        children[node] = tuple(kids)
        return node

    root = rec(spec)
    d = max(root)
    tree = DimensionTree(d, children)
    report = validate(tree)
    if report is not None:
        raise TreeError(report)
    return tree


def validate(t: DimensionTree) -> str | None:
    """Return ``None`` for a valid tree, else a message naming the violation."""
    full = set(range(1, t.d + 1))
    if set(t.root) != full:
        return f"root {t.root} != {{1..{t.d}}}"
    for node, kids in t.children.items():
        if len(kids) < 2:
            return f"children < 2 at node {node}"
        union: set[int] = set()
        for k in kids:
            if union & set(k):
                return f"not a partition at node {node}"
            union |= set(k)
        if union != set(node):
            return f"not a partition at node {node}"
    seen: set[Node] = set()
    stack = [t.root]
    while stack:
        node = stack.pop()
        if node in seen:
            return f"node {node} reached twice"
        seen.add(node)
        if node not in t.children and len(node) != 1:
            return f"leaf {node} is not a singleton"
        stack.extend(t.children.get(node, ()))
    extra = set(t.children) - seen
    if extra:
        return f"unreachable node {sorted(extra)[0]}"
    if {n[0] for n in seen if n not in t.children} != full:
        return "leaves do not cover {1..d}"
    if len(seen) > 2 * t.d - 1:
        return f"too many nodes ({len(seen)} > 2d-1)"
    return None


def linear_tree(d: int) -> DimensionTree:
    """Tensor-train tree: interior nodes {1..k} with children {1..k-1} and {k}."""
    if d < 1:
        raise TreeError(f"invalid dimension d={d}")
    children = {}
    for k in range(2, d + 1):
        left = tuple(range(1, k)) if k > 2 else (1,)
        children[tuple(range(1, k + 1))] = (left, (k,))
    return DimensionTree(d, children)


def balanced_tree(d: int, arity: int = 2) -> DimensionTree:
    """Minimal-depth tree from contiguous, as-even-as-possible splits (left gets extras)."""
    if d < 1:
        raise TreeError(f"invalid dimension d={d}")
    if arity < 2:
        raise TreeError(f"invalid arity {arity}")
    children = {}

    def split(node: Node):
        if len(node) == 1:
            return
        parts = min(arity, len(node))
        q, r = divmod(len(node), parts)
        kids, start = [], 0
        for j in range(parts):
            size = q + (1 if j < r else 0)
            kids.append(node[start:start + size])
            start += size
        children[node] = tuple(kids)
        for k in kids:
            split(k)

    split(tuple(range(1, d + 1)))
    return DimensionTree(d, children)


def random_binary_tree(d: int, seed: int) -> DimensionTree:
    """Random recursive bipartition of {1..d}; a pure function of (d, seed).

    Each split draws a uniformly random nonempty proper subset.
    """
    if d < 1:
        raise TreeError(f"invalid dimension d={d}")
    rng = np.random.default_rng(seed)
    children = {}

    def split(node: Node):
        if len(node) == 1:
            return
        while True:
            mask = rng.integers(0, 2, size=len(node)).astype(bool)
            if 0 < mask.sum() < len(node):
                break
        a = tuple(v for v, m in zip(node, mask) if m)
        b = tuple(v for v, m in zip(node, mask) if not m)
        children[node] = (a, b)
        split(a)
        split(b)

    split(tuple(range(1, d + 1)))
    return DimensionTree(d, children)


def corner_peak_tree() -> DimensionTree:
    """The fixed 10-variable balanced binary tree used for the corner peak benchmark."""
    return from_nested([[[[7, 8], [9, 10]], [1, 2]], [[3, 4], [5, 6]]])

"""Independent reference computations used by several test modules."""

import itertools
import math

import numpy as np


def full_coefficient_tensor(net):
    """Coefficient tensor a[i_1, ..., i_d] of the network, by explicit leaf-to-root contraction."""
    tree = net.tree

    def rec(node):
        v = net.params[node]
        if tree.is_leaf(node):
            return v, list(node)
        t, variables = v, []
        for c in tree.kids(node):
            sub, sub_vars = rec(c)
            # contract the first child-rank mode left in t with the child's rank mode
            k = 1 + len(variables)
            t = np.tensordot(t, sub, axes=([k], [0]))
            t = np.moveaxis(t, list(range(t.ndim - len(sub_vars), t.ndim)),
                            list(range(k, k + len(sub_vars))))
            variables += sub_vars
        order = np.argsort(variables)
        return np.transpose(t, [0] + [1 + i for i in order]), sorted(variables)

    a, _ = rec(tree.root)
    return a[0]


def expand(a, feats_at_x):
    """sum_i a_i prod_nu phi_{i_nu}(x_nu), by an explicit multi-index loop."""
    total = 0.0
    for idx in itertools.product(*(range(s) for s in a.shape)):
        total += a[idx] * math.prod(f[i] for f, i in zip(feats_at_x, idx))
    return total


def count_parameters(net):
    """Entries (or unmasked entries) over all node tensors."""
    if net.sparsity is not None:
        return sum(int(m.sum()) for m in net.sparsity.values())
    return sum(v.size for v in net.params.values())

#!/usr/bin/env python3
"""Tree adaptation on a planted target g(x1, x3) h(x2, x4): does the search pair 1-3 / 2-4?"""

import argparse

import numpy as np

from ttnsel.features import polynomial_map
from ttnsel.learn import Dataset
from ttnsel.learn.adapt import TreeAdaptOptions, tree_adapt
from ttnsel.tree import balanced_tree


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--moves", type=int, default=10)
    args = p.parse_args(argv)
    hits = 0
    for seed in range(args.seeds):
        rng = np.random.default_rng(100 + seed)
        X = rng.uniform(size=(args.n, 4))
        y = np.sin(3 * X[:, 0] + 2 * X[:, 2]) * np.cos(2 * X[:, 1] - 3 * X[:, 3])
        trees = tree_adapt(Dataset(X, y), polynomial_map(4, 4), balanced_tree(4),
                           TreeAdaptOptions(moves=args.moves, seed=seed, budget_steps=6))
        final = trees[-1]
        hit = (1, 3) in final.nodes or (2, 4) in final.nodes
        hits += hit
        print(f"seed {seed}: {final.to_nested()}  kept {len(trees) - 1} moves  "
              f"{'separable pair found' if hit else ''}")
    print(f"{hits}/{args.seeds} final trees contain node (1,3) or (2,4)")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Tabulate the theoretical penalty shapes against the C/n shape used by slope heuristics."""

import argparse
import math

from ttnsel.select import logNc_bound, theoretical_penalty_fast, theoretical_penalty_slow


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--arity", type=int, default=2)
    p.add_argument("--tree-size", type=int, default=13)
    args = p.parse_args(argv)
    print(f"{'C':>6} {'C/n':>10} {'sqrt(C/n)':>10} {'slow':>10} {'fast':>10}")
    for C in (10, 30, 100, 300, 1000):
        lnc = logNc_bound(C, args.arity, args.d)
        slow = theoretical_penalty_slow(C, args.n, 1.0, 1.0, 1.0, 1.0, lnc, args.tree_size)
        fast = theoretical_penalty_fast(C, args.n, 1.0, 1.0, 1.0, lnc, args.tree_size)
        print(f"{C:>6} {C / args.n:>10.3e} {math.sqrt(C / args.n):>10.3e} "
              f"{slow:>10.3e} {fast:>10.3e}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Index scaling experiment: bulk inserts, audits, and the doubling check.

Inserts random keys in stages, audits the tree at each stage, and reports
median range-query latency so the O(log) trend is visible as sizes double.
Queries hit an empty odd-key band, keeping the result size fixed at zero.
"""

import argparse
import random
import sys
import time

from monet.bptree import BplusIndex


def median_query_seconds(tree: BplusIndex, queries) -> float:
    times = []
    for lo, hi in queries:
        t0 = time.perf_counter()
        tree.range(lo, hi)
        times.append(time.perf_counter() - t0)
    times.sort()
    return times[len(times) // 2]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--stages", type=int, default=5, help="number of doublings")
    parser.add_argument("--base", type=int, default=1250, help="entries in the first stage")
    parser.add_argument("--order", type=int, default=32)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    tree = BplusIndex(order=args.order)
    probe = [(k, k) for k in rng.sample(range(1, 2_000_000, 2), 400)]

    n = 0
    previous = None
    print(f"{'entries':>10} {'audit':>6} {'median query':>14} {'ratio':>6}")
    for stage in range(args.stages):
        target = args.base * (2 ** stage)
        while n < target:
            tree = tree.insert(rng.randrange(0, 1_000_000) * 2, n)
            n += 1
        tree.audit()
        t = min(median_query_seconds(tree, probe) for _ in range(3))
        ratio = "" if previous is None else f"{t / previous:.2f}"
        print(f"{n:>10} {'ok':>6} {t * 1e6:>11.2f} us {ratio:>6}")
        previous = t
    return 0


if __name__ == "__main__":
    sys.exit(main())

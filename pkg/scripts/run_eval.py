#!/usr/bin/env python3
"""Full synthetic evaluation run: 10 families x 12 operators, 500 benign apps.

Prints the per-mode metric table and the per-transform detection breakdown;
optionally writes the JSON report.  Equivalent to ``monet eval`` with the
acceptance-scale defaults baked in.
"""

import argparse
import json
import sys
import time

from monet.corpus import run_eval


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--families", type=int, default=10)
    parser.add_argument("--variants", type=int, default=12)
    parser.add_argument("--benign", type=int, default=500)
    parser.add_argument("--threshold", type=float, default=0.8)
    parser.add_argument("--alpha", type=int, default=5)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("-o", "--output", help="write the JSON report here")
    args = parser.parse_args()

    start = time.perf_counter()
    report = run_eval(
        families=args.families,
        variants_per_family=args.variants,
        benign_count=args.benign,
        threshold=args.threshold,
        alpha=args.alpha,
        master_seed=args.seed,
        verify_pruning=True,
    )
    elapsed = time.perf_counter() - start

    print(report.format_table())
    print()
    print(f"benign rejections: {report.benign_rejections}, "
          f"max benign score: {max(report.benign_scores):.3f}, "
          f"pruning disagreements: {report.pruning_disagreements}/{report.pruning_checked}")
    print(f"elapsed: {elapsed:.1f}s")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_obj(), fh, indent=2, sort_keys=True)
        print(f"report written to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

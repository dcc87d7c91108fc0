#!/usr/bin/env python3
"""Detection-latency experiment: one uploaded signature vs an N-signature store.

Builds a store of generated family signatures whose app-component counts all
fall inside the suspect's alpha window (the worst case for the index), then
times the full decide() path.
"""

import argparse
import sys
import time

from monet.behavior_graph import decouple
from monet.corpus import SizeParams, family_signature, generate_family
from monet.matcher import decide
from monet.pipeline import signature_of
from monet.sigstore import empty_store, insert_signature


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--signatures", type=int, default=1000)
    parser.add_argument("--alpha", type=int, default=5)
    parser.add_argument("--threshold", type=float, default=0.8)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    size = SizeParams(benign_components=(0, 0))
    build_start = time.perf_counter()
    store = empty_store()
    for i in range(args.signatures):
        template = generate_family(500_000 + i, size)
        store = insert_signature(store, family_signature(template, f"fam{i:05d}"))
    print(f"store: {store.graph_count()} signatures "
          f"built in {time.perf_counter() - build_start:.1f}s")

    suspect = generate_family(999_999, size)
    sig = signature_of(suspect.base_pkg, suspect.base_trace)
    n = decouple(sig.rbg)[0].app_count
    print(f"suspect: {len(sig.rbg.nodes)} nodes, "
          f"{len(store.range_candidates(n, args.alpha))} candidates in the window")

    for mode in ("rbg_only", "combined"):
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            verdict = decide(sig, store, args.threshold, mode, args.alpha)
            times.append(time.perf_counter() - t0)
        times.sort()
        print(f"{mode:>9}: median {times[len(times) // 2] * 1000:.1f} ms "
              f"(min {times[0] * 1000:.1f} ms), verdict {verdict.decision}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

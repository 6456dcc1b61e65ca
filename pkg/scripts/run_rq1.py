#!/usr/bin/env python3
"""One-step refresh comparison on the synthetic drift benchmark.

Runs all six update policies over N seeds, prints a per-policy summary
table, and reports the paired Wilcoxon significance of the headline
comparison (aligned refresh vs finetuning with stale SIDs).
"""

import argparse
import json
import statistics
import sys
import time

from sidalign.harness import POLICIES, PolicyConfig, prepare_benchmark, run_policies
from sidalign.metrics import wilcoxon_paired
from sidalign.simulate import BENCHMARK_DEFAULT, make_benchmark


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="rq1_results.json")
    args = ap.parse_args()

    t0 = time.time()
    per_policy: dict[str, dict[int, list[float]]] = {}
    rows = []
    for seed in range(args.seeds):
        print(f"seed {seed} ...", file=sys.stderr)
        data = prepare_benchmark(make_benchmark(seed, BENCHMARK_DEFAULT))
        for r in run_policies(PolicyConfig(seed=seed), data):
            rows.append(r.to_json())
            for k, v in r.recall.items():
                per_policy.setdefault(r.policy, {}).setdefault(k, []).append(v)

    ks = sorted(next(iter(per_policy.values())))
    header = "policy".ljust(20) + "".join(f"recall@{k}".rjust(12) for k in ks)
    print(header)
    for policy in POLICIES:
        line = policy.ljust(20)
        for k in ks:
            vals = per_policy[policy][k]
            line += f"{statistics.mean(vals):12.4f}"
        print(line)

    k_top = max(ks)
    p = wilcoxon_paired(
        per_policy["ft-ours-greedy"][k_top], per_policy["ft-old"][k_top]
    )
    print(f"\nft-ours-greedy vs ft-old @ recall@{k_top}: Wilcoxon p = {p:.4g}")
    print(f"total time {time.time() - t0:.0f}s")

    with open(args.out, "w") as f:
        json.dump({"rows": rows}, f, indent=2)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Ranking metrics and the paired signed-rank test used for significance."""

from __future__ import annotations

import math
from typing import Sequence

EXACT_WILCOXON_MAX_N = 25


def recall_at_k(ranked: Sequence[str], targets: set[str], k: int) -> float:
    """|top-k hits| / |targets|. The denominator is the full target count,
    not min(|targets|, k)."""
    if not targets:
        raise ValueError("targets must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for item in ranked[:k] if item in targets)
    return hits / len(targets)


def ndcg_at_k(ranked: Sequence[str], targets: set[str], k: int) -> float:
    """Binary-gain nDCG with a multi-positive ideal ranking."""
    if not targets:
        raise ValueError("targets must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg = sum(
        1.0 / math.log2(p + 2)
        for p, item in enumerate(ranked[:k])
        if item in targets
    )
    idcg = sum(1.0 / math.log2(p + 2) for p in range(min(len(targets), k)))
    return dcg / idcg


def _signed_ranks(diffs: list[float]) -> tuple[list[int], list[int]]:
    """Midranks of |d| doubled to stay integral, split by sign of d."""
    order = sorted(range(len(diffs)), key=lambda i: abs(diffs[i]))
    double_ranks = [0] * len(diffs)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and abs(diffs[order[j]]) == abs(diffs[order[i]]):
            j += 1
        # ranks i+1..j share the midrank; doubling keeps it an integer
        mid2 = (i + 1) + j
        for idx in order[i:j]:
            double_ranks[idx] = mid2
        i = j
    pos = [double_ranks[i] for i in range(len(diffs)) if diffs[i] > 0]
    neg = [double_ranks[i] for i in range(len(diffs)) if diffs[i] < 0]
    return pos, neg


def wilcoxon_paired(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Two-sided paired Wilcoxon signed-rank p-value.

    Zero differences are dropped; the p-value uses the exact sign-flip
    distribution of the rank sum for n <= 25 remaining pairs and a normal
    approximation (with tie correction) beyond.
    """
    if len(xs) != len(ys):
        raise ValueError("paired samples must have equal length")
    if len(xs) < 5:
        raise ValueError("need at least 5 pairs")
    diffs = [float(x) - float(y) for x, y in zip(xs, ys)]
    diffs = [d for d in diffs if d != 0.0]
    if not diffs:
        raise ValueError("all differences are zero")
    n = len(diffs)
    pos, neg = _signed_ranks(diffs)
    w_pos = sum(pos)  # doubled-rank scale

    if n <= EXACT_WILCOXON_MAX_N:
        all_ranks = pos + neg
        total = sum(all_ranks)
        # Distribution of the positive doubled-rank sum over all 2^n sign
        # assignments, as a dense count table.
        ways = [0] * (total + 1)
        ways[0] = 1
        for r in all_ranks:
            for w in range(total, r - 1, -1):
                ways[w] += ways[w - r]
        denom = float(2**n)
        lo = sum(ways[: w_pos + 1]) / denom
        hi = sum(ways[w_pos:]) / denom
        return min(1.0, 2.0 * min(lo, hi))

    # Normal approximation on the standard rank scale.
    w = w_pos / 2.0
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # Tie correction: subtract sum(t^3 - t) / 48 over tie groups.
    seen: dict[float, int] = {}
    for d in diffs:
        seen[abs(d)] = seen.get(abs(d), 0) + 1
    var -= sum(t**3 - t for t in seen.values()) / 48.0
    if var <= 0:
        raise ValueError("degenerate variance (all |differences| equal?)")
    z = (w - mean) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))

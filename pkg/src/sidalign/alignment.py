"""Token-space alignment between two SID assignments.

Given an old and a new tokenization of a shared item catalog, count how often
each new token co-occurs with each old token at the same codebook position,
solve a one-to-one matching per position (greedy or Hungarian), complete the
mapping over the remaining tokens, and rewrite new SIDs into the old token
space. The rewritten assignment keeps the token vocabulary an existing model
checkpoint was trained against.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from .assignment_solver import min_cost_assignment
from .core import CooccurrenceMatrix, SemanticId, SidAssignment, TokenMapping


class AlignmentError(ValueError):
    pass


def compute_cooccurrence(
    old: SidAssignment, new: SidAssignment
) -> list[CooccurrenceMatrix]:
    """Per-position counts of (new token, old token) pairs over the items
    present in both assignments."""
    if old.spec != new.spec:
        raise AlignmentError("incompatible codebook specs")
    overlap = old.entries.keys() & new.entries.keys()
    if not overlap:
        raise AlignmentError("no shared items")
    counters: list[Counter] = [Counter() for _ in range(old.spec.num_positions)]
    for item in overlap:
        new_toks = new.entries[item].tokens
        old_toks = old.entries[item].tokens
        for pos, (a, b) in enumerate(zip(new_toks, old_toks)):
            counters[pos][(a, b)] += 1
    return [
        CooccurrenceMatrix(position=pos, counts=dict(c))
        for pos, c in enumerate(counters)
    ]


def solve_greedy(w: CooccurrenceMatrix) -> dict[int, int]:
    """Highest-count-first scan: sort pairs by (count desc, new asc, old asc)
    and accept a pair iff both endpoints are still free."""
    new_t = np.fromiter((k[0] for k in w.counts), dtype=np.int64, count=len(w.counts))
    old_t = np.fromiter((k[1] for k in w.counts), dtype=np.int64, count=len(w.counts))
    cnt = np.fromiter(w.counts.values(), dtype=np.int64, count=len(w.counts))
    order = np.lexsort((old_t, new_t, -cnt))  # last key is primary
    used_new: set[int] = set()
    used_old: set[int] = set()
    out: dict[int, int] = {}
    for i in order:
        a, b = int(new_t[i]), int(old_t[i])
        if a in used_new or b in used_old:
            continue
        out[a] = b
        used_new.add(a)
        used_old.add(b)
    return out


def solve_hungarian(w: CooccurrenceMatrix) -> dict[int, int]:
    """Maximum-total-weight one-to-one matching between active new and old
    tokens.

    Solved as min-cost assignment on the negated, zero-padded square matrix
    of active tokens. Among equal-weight optima the result is canonicalized
    to the lexicographically smallest matching by (new token asc, then old
    token asc). Zero-weight (padding) matches are dropped, so tokens
    without co-occurrence evidence are left to the completion stage.
    """
    active_new = w.active_new()
    active_old = w.active_old()
    if not active_new:
        return {}
    n_a, n_b = len(active_new), len(active_old)
    n = max(n_a, n_b)
    counts = np.zeros((n, n), dtype=np.float64)
    row_of = {a: i for i, a in enumerate(active_new)}
    col_of = {b: j for j, b in enumerate(active_old)}
    for (a, b), c in w.counts.items():
        counts[row_of[a], col_of[b]] = c
    cost = -counts
    col4row, u, v = min_cost_assignment(cost)
    col4row = _canonicalize(cost, counts, col4row, u, v, n_a, n_b)
    out: dict[int, int] = {}
    for i in range(n_a):
        j = int(col4row[i])
        if j < n_b and counts[i, j] > 0:
            out[active_new[i]] = active_old[j]
    return out


def _canonicalize(cost, counts, col4row, u, v, n_a, n_b):
    """Rearrange a max-weight matching into the lexicographically smallest
    co-optimal one.

    Every optimal matching lies in the zero reduced-cost subgraph of the
    optimal duals, and any perfect matching inside it is optimal. Rows are
    fixed in ascending order; each takes the smallest positive-count column
    reachable through an alternating path over still-movable rows, which is
    found with one reverse BFS per row. Costs are integer-valued, so the
    zero test is exact.
    """
    n = cost.shape[0]
    tight = (cost - u[:, None] - v[None, :]) == 0.0
    col4row = col4row.copy()
    row4col = np.empty(n, dtype=np.int64)
    row4col[col4row] = np.arange(n)
    movable = np.ones(n, dtype=bool)
    for i in range(n_a):
        j_cur = int(col4row[i])
        # Reverse BFS from j_cur: next_hop[p] leads one step along an
        # alternating path from column p toward j_cur.
        next_hop = np.full(n, -1, dtype=np.int64)
        next_hop[j_cur] = j_cur
        frontier = [j_cur]
        while frontier:
            new_frontier = []
            for q in frontier:
                rows = np.nonzero(tight[:, q] & movable)[0]
                for p in col4row[rows]:
                    p = int(p)
                    if next_hop[p] == -1 and p != j_cur:
                        next_hop[p] = q
                        new_frontier.append(p)
            frontier = new_frontier
        # Smallest positive-count column for row i with a feasible
        # rearrangement; active_old columns are already in ascending order.
        choices = np.nonzero(tight[i, :n_b] & (counts[i, :n_b] > 0))[0]
        for j in choices:
            j = int(j)
            if next_hop[j] == -1:
                continue
            # Shift displaced rows along the path, then give j to row i.
            path = [j]
            while path[-1] != j_cur:
                path.append(int(next_hop[path[-1]]))
            displaced = [int(row4col[p]) for p in path[:-1]]
            for r, q in zip(displaced, path[1:]):
                col4row[r] = q
                row4col[q] = r
            col4row[i] = j
            row4col[j] = i
            break
        movable[i] = False
    return col4row


def matched_weight(w: CooccurrenceMatrix, mapping: dict[int, int]) -> int:
    return sum(w.counts.get((a, b), 0) for a, b in mapping.items())


def complete_mapping(
    partial: list[dict[int, int]], new: SidAssignment
) -> TokenMapping:
    """Extend per-position partial maps to cover every token the new
    assignment uses, pairing leftover new tokens with unused old tokens in
    ascending index order."""
    spec = new.spec
    used_by_new: list[set[int]] = [set() for _ in range(spec.num_positions)]
    for sid in new.entries.values():
        for pos, tok in enumerate(sid.tokens):
            used_by_new[pos].add(tok)
    maps = []
    for pos in range(spec.num_positions):
        m = dict(partial[pos])
        taken = set(m.values())
        unmapped = sorted(t for t in used_by_new[pos] if t not in m)
        available = [b for b in range(spec.sizes[pos]) if b not in taken]
        if len(unmapped) > len(available):
            raise AlignmentError(
                f"position {pos}: {len(unmapped)} unmapped tokens but only "
                f"{len(available)} old tokens free"
            )
        m.update(zip(unmapped, available))
        maps.append(m)
    return TokenMapping(spec=spec, maps=tuple(maps))


SOLVERS = {"greedy": solve_greedy, "hungarian": solve_hungarian}


def align(old: SidAssignment, new: SidAssignment, solver: str) -> TokenMapping:
    """Full alignment pipeline: co-occurrence counts, per-position matching,
    completion over all tokens the new assignment uses."""
    try:
        solve = SOLVERS[solver]
    except KeyError:
        raise AlignmentError(f"unknown solver {solver!r}") from None
    matrices = compute_cooccurrence(old, new)
    partial = [solve(w) for w in matrices]
    return complete_mapping(partial, new)


def rewrite(new: SidAssignment, mapping: TokenMapping) -> SidAssignment:
    """Substitute every token of every SID through the per-position maps."""
    if mapping.spec != new.spec:
        raise AlignmentError("incompatible codebook specs")
    entries = {}
    maps = mapping.maps
    for item, sid in new.entries.items():
        toks = []
        for pos, tok in enumerate(sid.tokens):
            try:
                toks.append(maps[pos][tok])
            except KeyError:
                raise AlignmentError(
                    f"item {item!r}: token {tok} at position {pos} "
                    "is outside the mapping domain"
                ) from None
        entries[item] = SemanticId(tokens=tuple(toks))
    return SidAssignment(spec=new.spec, entries=entries)

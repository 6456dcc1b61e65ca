"""Dense square min-cost assignment (shortest augmenting path, Jonker-
Volgenant style) returning the matching together with optimal dual
potentials.

The potentials are what make an O(n^2)-per-row canonicalization pass
possible downstream: every optimal matching lives inside the zero
reduced-cost subgraph, so tie-breaking can be done by alternating-path
rearrangements instead of repeated re-solves.

All arithmetic is add/subtract on the input costs, so integer-valued
float64 costs stay exact throughout.
"""

from __future__ import annotations

import numpy as np


def min_cost_assignment(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve the square assignment problem, minimizing total cost.

    Returns (col4row, u, v): col4row[i] is the column matched to row i, and
    (u, v) are dual potentials with cost[i, j] - u[i] - v[j] >= 0 everywhere
    and == 0 on matched edges.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n != m:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)

    for cur_row in range(n):
        # Dijkstra over columns from cur_row in the reduced-cost graph.
        dist = np.full(n, np.inf)
        pred_row = np.full(n, -1, dtype=np.int64)  # row we reached column j from
        done = np.zeros(n, dtype=bool)
        row_visited = np.zeros(n, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            row_visited[i] = True
            reduced = min_val + cost[i] - u[i] - v
            better = ~done & (reduced < dist)
            dist[better] = reduced[better]
            pred_row[better] = i
            masked = np.where(done, np.inf, dist)
            j = int(np.argmin(masked))
            min_val = masked[j]
            if not np.isfinite(min_val):
                raise ValueError("assignment infeasible (non-finite costs)")
            done[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])

        # Dual update keeps reduced costs non-negative and matched edges tight.
        u[cur_row] += min_val
        seen = row_visited.copy()
        seen[cur_row] = False
        rows = np.nonzero(seen)[0]
        u[rows] += min_val - dist[col4row[rows]]
        v[done] -= min_val - dist[done]

        # Augment: walk predecessors back from the sink.
        j = sink
        while True:
            i = int(pred_row[j])
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break
    return col4row, u, v

"""Residual k-means tokenizer: produces SID assignments from item embeddings.

Each codebook level runs Lloyd's k-means (k-means++ seeding) on the residuals
left by the previous levels, then subtracts the chosen centroids. Fully
deterministic for a fixed (embeddings, spec, iters, seed): seeding uses a
counter-based Philox stream keyed by (seed, level), distance ties break
toward the lowest centroid index, and a centroid that loses all members is
reseeded to the point farthest from its nearest centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CodebookSpec, ItemEmbeddingTable, SemanticId, SidAssignment


class QuantizerError(ValueError):
    pass


@dataclass(frozen=True)
class RqCodebooks:
    spec: CodebookSpec
    dim: int
    centroids: tuple[np.ndarray, ...]  # per level: (V_l, dim)
    objective_history: tuple[tuple[float, ...], ...]  # per level, per iteration

    def __post_init__(self):
        if len(self.centroids) != self.spec.num_positions:
            raise QuantizerError("one centroid matrix per position required")
        for pos, c in enumerate(self.centroids):
            if c.shape != (self.spec.sizes[pos], self.dim):
                raise QuantizerError(
                    f"position {pos}: centroid shape {c.shape} != "
                    f"({self.spec.sizes[pos]}, {self.dim})"
                )
            if not np.all(np.isfinite(c)):
                raise QuantizerError(f"position {pos}: non-finite centroid")


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances, clamped against tiny negatives.
    d = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = _sq_dists(points, centroids[0:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # All points already covered exactly; reuse the first point.
            centroids[c] = points[int(rng.integers(n))]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
        idx = min(idx, n - 1)
        centroids[c] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centroids[c : c + 1])[:, 0])
    return centroids


def _repair_empty(points, centroids, labels, empty):
    """Reseed each empty centroid to the point farthest from its nearest
    centroid, one at a time so repairs stay deterministic."""
    for c in sorted(empty):
        min_d = _sq_dists(points, centroids).min(axis=1)
        if min_d.max() <= 0.0:
            continue  # every point coincides with a centroid; nothing to move
        far = int(np.argmax(min_d))
        centroids[c] = points[far]
        labels[far] = c
    return centroids, labels


def _lloyd(points, k, iters, rng):
    centroids = _kmeanspp_seed(points, k, rng)
    history = []
    labels = None
    for _ in range(iters):
        d = _sq_dists(points, centroids)
        labels = np.argmin(d, axis=1)  # argmin takes the lowest index on ties
        present = np.bincount(labels, minlength=k)
        empty = np.nonzero(present == 0)[0]
        if empty.size:
            centroids, labels = _repair_empty(points, centroids, labels, empty)
            d = _sq_dists(points, centroids)
        history.append(float(d[np.arange(len(labels)), labels].sum()))
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        counts = np.bincount(labels, minlength=k).astype(float)
        nonzero = counts > 0
        centroids[nonzero] = sums[nonzero] / counts[nonzero, None]
    return centroids, history


def fit(
    embeddings: ItemEmbeddingTable,
    spec: CodebookSpec,
    iters: int = 25,
    seed: int = 0,
) -> RqCodebooks:
    if len(embeddings) == 0:
        raise QuantizerError("cannot fit on an empty embedding table")
    if iters < 1:
        raise QuantizerError("iters must be >= 1")
    items = embeddings.sorted_items()
    residual = np.stack([embeddings.vectors[it] for it in items])
    centroids = []
    histories = []
    for level, k in enumerate(spec.sizes):
        rng = np.random.Generator(np.random.Philox(key=[seed, level]))
        c, hist = _lloyd(residual, k, iters, rng)
        labels = np.argmin(_sq_dists(residual, c), axis=1)
        residual = residual - c[labels]
        centroids.append(c)
        histories.append(tuple(hist))
    return RqCodebooks(
        spec=spec,
        dim=embeddings.dim,
        centroids=tuple(centroids),
        objective_history=tuple(histories),
    )


def encode(
    embeddings: ItemEmbeddingTable, codebooks: RqCodebooks, threads: int = 1
) -> SidAssignment:
    """Greedy nearest-centroid encoding per level on the running residual.

    Per-item results are independent, so any chunking over items (threads)
    yields bit-identical assignments.
    """
    if embeddings.dim != codebooks.dim:
        raise QuantizerError(
            f"embedding dim {embeddings.dim} != codebook dim {codebooks.dim}"
        )
    items = embeddings.sorted_items()
    x = np.stack([embeddings.vectors[it] for it in items])
    codes = _encode_matrix(x, codebooks, max(1, threads))
    entries = {
        item: SemanticId(tokens=tuple(int(t) for t in row))
        for item, row in zip(items, codes)
    }
    return SidAssignment(spec=codebooks.spec, entries=entries)


def _encode_matrix(x: np.ndarray, codebooks: RqCodebooks, threads: int) -> np.ndarray:
    n = x.shape[0]
    if threads > 1 and n > 1:
        bounds = np.linspace(0, n, threads + 1, dtype=int)
        chunks = [
            _encode_matrix(x[a:b], codebooks, 1)
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        return np.concatenate(chunks)
    codes = np.empty((n, codebooks.spec.num_positions), dtype=np.int64)
    residual = x.copy()
    for level, c in enumerate(codebooks.centroids):
        labels = np.argmin(_sq_dists(residual, c), axis=1)
        codes[:, level] = labels
        residual -= c[labels]
    return codes


def quantization_error(
    embeddings: ItemEmbeddingTable, codebooks: RqCodebooks
) -> float:
    """Mean squared norm of the residual left after the final level."""
    if embeddings.dim != codebooks.dim:
        raise QuantizerError(
            f"embedding dim {embeddings.dim} != codebook dim {codebooks.dim}"
        )
    items = embeddings.sorted_items()
    residual = np.stack([embeddings.vectors[it] for it in items])
    for c in codebooks.centroids:
        labels = np.argmin(_sq_dists(residual, c), axis=1)
        residual -= c[labels]
    return float(np.mean(np.sum(residual**2, axis=1)))

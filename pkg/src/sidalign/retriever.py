"""Warm-startable count-based sequential SID model with prefix-trie
constrained beam decoding.

The model is the retriever surrogate: a per-position interpolated-backoff
n-gram over flattened SID token streams. Its state is keyed by token
identity, which is exactly the coupling that makes a checkpoint stale when
tokens are reassigned and valuable again once the new assignment is aligned
back into the old token space.
"""

from __future__ import annotations

import json
import math
import struct
from collections import defaultdict
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .core import CodebookSpec, SidAssignment

PathLike = Union[str, Path]

MODEL_MAGIC = b"SIDNGM01"

DEFAULT_ORDER = 8
DEFAULT_ALPHA = 0.1
# Geometric interpolation: weight ratio between a context length and the
# next shorter one; longer contexts dominate.
DEFAULT_BACKOFF_RATIO = 0.6


class RetrieverError(ValueError):
    pass


class SidTrie:
    """Prefix trie over the SIDs of an assignment; leaves hold the sorted
    item ids sharing that SID."""

    def __init__(self, spec: CodebookSpec):
        self.spec = spec
        self.root: dict = {}
        self.num_sids = 0

    def children(self, node: dict) -> dict:
        return node

    def leaf_items(self, sid: Sequence[int]) -> list[str]:
        node = self.root
        for tok in sid:
            node = node[tok]
        return node["$items"]

    def all_sids(self) -> list[tuple[int, ...]]:
        out = []

        def walk(node, prefix, depth):
            if depth == self.spec.num_positions:
                out.append(prefix)
                return
            for tok in sorted(k for k in node if k != "$items"):
                walk(node[tok], prefix + (tok,), depth + 1)

        walk(self.root, (), 0)
        return out


def build_trie(a: SidAssignment) -> SidTrie:
    trie = SidTrie(a.spec)
    depth = a.spec.num_positions
    for item in sorted(a.entries):
        node = trie.root
        toks = a.entries[item].tokens
        for pos, tok in enumerate(toks):
            node = node.setdefault(tok, {})
        leaf = node.setdefault("$items", [])
        if not leaf:
            trie.num_sids += 1
        leaf.append(item)
    return trie


class NGramSidModel:
    """Interpolated add-alpha n-gram over SID token streams.

    tables[(position, context_tuple)] maps next-token -> count. Counts are
    kept for every backoff context length 0..order, so shorter contexts are
    always available for interpolation.
    """

    def __init__(
        self,
        spec: CodebookSpec,
        order: int = DEFAULT_ORDER,
        alpha: float = DEFAULT_ALPHA,
        backoff_ratio: float = DEFAULT_BACKOFF_RATIO,
    ):
        if order < 0:
            raise RetrieverError("order must be >= 0")
        if alpha <= 0:
            raise RetrieverError("alpha must be positive")
        if not 0 < backoff_ratio <= 1:
            raise RetrieverError("backoff_ratio must be in (0, 1]")
        self.spec = spec
        self.order = order
        self.alpha = float(alpha)
        self.backoff_ratio = float(backoff_ratio)
        self.tables: dict[tuple[int, tuple[int, ...]], dict[int, float]] = {}
        self._dist_cache: dict = {}

    def copy(self) -> "NGramSidModel":
        dup = NGramSidModel(self.spec, self.order, self.alpha, self.backoff_ratio)
        dup.tables = {key: dict(d) for key, d in self.tables.items()}
        return dup

    def _invalidate(self):
        self._dist_cache = {}

    def add_sequences(
        self,
        sequences: Mapping[str, Sequence[str]],
        a: SidAssignment,
        weight: float = 1.0,
    ) -> None:
        if a.spec != self.spec:
            raise RetrieverError("assignment spec does not match model spec")
        self._invalidate()
        length = self.spec.num_positions
        order = self.order
        tables = self.tables
        entries = a.entries
        for user in sorted(sequences):
            stream: list[int] = []
            for item in sequences[user]:
                try:
                    stream.extend(entries[item].tokens)
                except KeyError:
                    raise RetrieverError(
                        f"item {item!r} has no SID in the assignment"
                    ) from None
            for p, tok in enumerate(stream):
                pos = p % length
                top = min(order, p)
                for c in range(top + 1):
                    key = (pos, tuple(stream[p - c : p]))
                    d = tables.get(key)
                    if d is None:
                        d = {}
                        tables[key] = d
                    d[tok] = d.get(tok, 0.0) + weight


def train(
    sequences: Mapping[str, Sequence[str]],
    a: SidAssignment,
    order: int = DEFAULT_ORDER,
    alpha: float = DEFAULT_ALPHA,
    backoff_ratio: float = DEFAULT_BACKOFF_RATIO,
) -> NGramSidModel:
    model = NGramSidModel(a.spec, order=order, alpha=alpha, backoff_ratio=backoff_ratio)
    model.add_sequences(sequences, a)
    return model


def warm_update(
    model: NGramSidModel,
    new_sequences: Mapping[str, Sequence[str]],
    a: SidAssignment,
    decay: float = 1.0,
) -> NGramSidModel:
    """Return a copy with all counts decayed then new-block counts added.
    decay=1 is pure accumulation; the input model is left untouched."""
    if a.spec != model.spec:
        raise RetrieverError("assignment spec does not match model spec")
    if not 0 < decay <= 1:
        raise RetrieverError("decay must be in (0, 1]")
    updated = model.copy()
    if decay != 1.0:
        for d in updated.tables.values():
            for tok in d:
                d[tok] *= decay
    updated.add_sequences(new_sequences, a)
    return updated


def next_token_dist(
    model: NGramSidModel, position: int, context: Sequence[int]
) -> np.ndarray:
    """Interpolated backoff distribution over the position's vocabulary.

    Mixture over context lengths c = min(order, len(context)) down to 0 with
    geometric weights favoring longer contexts; each component is the
    add-alpha smoothed count distribution (uniform when unseen).
    """
    v = model.spec.sizes[position]
    ctx = tuple(context)
    top = min(model.order, len(ctx))
    alpha = model.alpha
    ratio = model.backoff_ratio
    weights = np.array([ratio ** (top - c) for c in range(top, -1, -1)])
    weights /= weights.sum()
    dist = np.zeros(v)
    cache = model._dist_cache
    for w, c in zip(weights, range(top, -1, -1)):
        suffix = ctx[len(ctx) - c :]
        key = (position, suffix)
        level = cache.get(key)
        if level is None:
            counts = np.full(v, alpha)
            d = model.tables.get(key)
            if d:
                for tok, cnt in d.items():
                    counts[tok] += cnt
            level = counts / counts.sum()
            cache[key] = level
        dist += w * level
    return dist


def beam_decode(
    model: NGramSidModel,
    context_items: Sequence[str],
    a: SidAssignment,
    trie: SidTrie,
    beam_width: int,
    top_k: int,
) -> list[tuple[str, float]]:
    """Constrained beam search over valid SIDs, expanded to a ranked item
    list.

    The beam expands position by position; extensions absent from the trie
    are pruned, so only SIDs present in the assignment can be emitted. The
    effective beam is max(beam_width, top_k). Ties break by (score desc,
    SID lexicographic asc, item id asc); collisions expand in leaf order.
    Returns up to top_k (item, log-probability) pairs.
    """
    if beam_width < 1 or top_k < 1:
        raise RetrieverError("beam width and k must be >= 1")
    width = max(beam_width, top_k)
    history: list[int] = []
    for item in context_items:
        try:
            history.extend(a.entries[item].tokens)
        except KeyError:
            raise RetrieverError(f"context item {item!r} has no SID") from None
    history_t = tuple(history[-model.order :] if model.order else [])

    length = model.spec.num_positions
    beams: list[tuple[float, tuple[int, ...], dict]] = [(0.0, (), trie.root)]
    for pos in range(length):
        candidates: list[tuple[float, tuple[int, ...], dict]] = []
        for logp, prefix, node in beams:
            ctx = (history_t + prefix)[-model.order :] if model.order else ()
            dist = next_token_dist(model, pos, ctx)
            for tok, child in node.items():
                if tok == "$items":
                    continue
                candidates.append((logp + math.log(dist[tok]), prefix + (tok,), child))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beams = candidates[:width]

    ranked: list[tuple[str, float]] = []
    seen: set[str] = set()
    for logp, sid, node in beams:
        for item in node["$items"]:
            if item not in seen:
                seen.add(item)
                ranked.append((item, logp))
            if len(ranked) >= top_k:
                return ranked
    return ranked


def exhaustive_decode(
    model: NGramSidModel,
    context_items: Sequence[str],
    a: SidAssignment,
    trie: SidTrie,
    top_k: int,
) -> list[tuple[str, float]]:
    """Score every valid SID directly; reference path for beam exactness."""
    return beam_decode(
        model, context_items, a, trie, beam_width=max(1, trie.num_sids), top_k=top_k
    )


def save_model(model: NGramSidModel, path: PathLike) -> None:
    header = json.dumps(
        {
            "order": model.order,
            "alpha": model.alpha,
            "backoff_ratio": model.backoff_ratio,
            "spec": model.spec.to_json(),
        }
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<Q", len(model.tables)))
        for (pos, ctx) in sorted(model.tables):
            d = model.tables[(pos, ctx)]
            f.write(struct.pack("<BH", pos, len(ctx)))
            f.write(struct.pack(f"<{len(ctx)}I", *ctx) if ctx else b"")
            f.write(struct.pack("<I", len(d)))
            for tok in sorted(d):
                f.write(struct.pack("<Id", tok, d[tok]))


def load_model(path: PathLike) -> NGramSidModel:
    with open(path, "rb") as f:
        if f.read(8) != MODEL_MAGIC:
            raise RetrieverError(f"{path}: not a model file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        model = NGramSidModel(
            spec=CodebookSpec.from_json(header["spec"]),
            order=int(header["order"]),
            alpha=float(header["alpha"]),
            backoff_ratio=float(header["backoff_ratio"]),
        )
        (n_entries,) = struct.unpack("<Q", f.read(8))
        for _ in range(n_entries):
            pos, clen = struct.unpack("<BH", f.read(3))
            ctx = struct.unpack(f"<{clen}I", f.read(4 * clen)) if clen else ()
            (n_next,) = struct.unpack("<I", f.read(4))
            d = {}
            for _ in range(n_next):
                tok, cnt = struct.unpack("<Id", f.read(12))
                d[tok] = cnt
            model.tables[(pos, tuple(ctx))] = d
    return model

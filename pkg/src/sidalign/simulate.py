"""Synthetic drift benchmark: interaction logs plus window-dependent item
embeddings with controllable collaborative drift.

Generative process: users and items live in a shared d-dimensional latent
space organized around preference clusters. Item factors move linearly over
normalized time tau in [0, 1] (factor = base + drift * tau * direction,
where the direction points at a possibly different cluster), and a Zipf-like
popularity prior re-ranks over time at a rate tied to the drift strength.
Events are sampled from softmax(user . item(tau) / temperature + popularity)
via the Gumbel-max trick in time buckets. Everything is keyed by counter-based
Philox streams, so outputs are byte-identical per seed.

Embedding tables for a time window are the item factors evaluated at the
item's recency-weighted mean event time within the window: fresher windows
therefore reflect fresher collaborative structure, which is what makes a
rebuilt tokenization differ from a stale one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import compute_cooccurrence, matched_weight, solve_hungarian
from .core import InteractionEvent, ItemEmbeddingTable, SidAssignment


@dataclass(frozen=True)
class BenchmarkParams:
    n_users: int = 2000
    n_items: int = 3000
    n_events: int = 200_000
    dim: int = 16
    drift_strength: float = 1.3
    popularity_skew: float = 1.0
    n_clusters: int = 32
    item_noise: float = 0.15
    user_noise: float = 1.0
    temperature: float = 0.3
    move_fraction: float = 0.6
    popularity_drift: float = 0.0
    recency_half_life: float = 0.12
    activity_sigma: float = 0.5
    n_buckets: int = 40

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.n_events, self.dim) < 1:
            raise ValueError("sizes must be positive")
        if self.drift_strength < 0:
            raise ValueError("drift strength must be >= 0")


BENCHMARK_DEFAULT = BenchmarkParams()

PRESETS = {"benchmark-default": BENCHMARK_DEFAULT}


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


@dataclass
class DriftBenchmark:
    """Generated world state plus the event log; embedding tables are
    derived per requested time window."""

    params: BenchmarkParams
    seed: int
    events: list[InteractionEvent]
    item_ids: list[str]
    _base: np.ndarray
    _direction: np.ndarray
    _event_item: np.ndarray  # item index per event, in timestamp order
    _event_tau: np.ndarray  # normalized event time per event
    _cache: dict = field(default_factory=dict)

    def embeddings_for_window(self, window: float) -> ItemEmbeddingTable:
        """Item factors at the recency-weighted mean event time, over items
        with at least one event before `window` (fraction of the timeline)."""
        key = round(window, 6)
        if key in self._cache:
            return self._cache[key]
        p = self.params
        in_window = self._event_tau < window
        idx = self._event_item[in_window]
        tau = self._event_tau[in_window]
        rate = np.log(2.0) / max(p.recency_half_life, 1e-9)
        lam = np.exp(-(window - tau) * rate)
        tau_sum = np.bincount(idx, weights=lam * tau, minlength=p.n_items)
        w_sum = np.bincount(idx, weights=lam, minlength=p.n_items)
        seen = w_sum > 0
        tau_bar = np.zeros(p.n_items)
        tau_bar[seen] = tau_sum[seen] / w_sum[seen]
        factors = self._base + p.drift_strength * tau_bar[:, None] * self._direction
        vectors = {self.item_ids[i]: factors[i] for i in np.nonzero(seen)[0]}
        table = ItemEmbeddingTable(dim=p.dim, vectors=vectors)
        self._cache[key] = table
        return table


def make_benchmark(seed: int, params: BenchmarkParams = BENCHMARK_DEFAULT) -> DriftBenchmark:
    p = params
    centers = _rng(seed, 0).normal(size=(p.n_clusters, p.dim))

    rng_items = _rng(seed, 1)
    c0 = rng_items.integers(p.n_clusters, size=p.n_items)
    base = centers[c0] + p.item_noise * rng_items.normal(size=(p.n_items, p.dim))
    moves = rng_items.random(p.n_items) < p.move_fraction
    c1 = np.where(
        moves, rng_items.integers(p.n_clusters, size=p.n_items), c0
    )
    target = centers[c1] + p.item_noise * rng_items.normal(size=(p.n_items, p.dim))
    direction = target - base
    direction[~moves] = 0.0

    rng_users = _rng(seed, 2)
    cu = rng_users.integers(p.n_clusters, size=p.n_users)
    user_f = centers[cu] + p.user_noise * rng_users.normal(size=(p.n_users, p.dim))
    activity = np.exp(p.activity_sigma * rng_users.normal(size=p.n_users))
    activity /= activity.sum()

    rng_pop = _rng(seed, 3)
    pop_base = rng_pop.normal(size=p.n_items)
    pop_drift = rng_pop.normal(size=p.n_items)

    user_ids = [f"u{k:05d}" for k in range(p.n_users)]
    item_ids = [f"i{k:05d}" for k in range(p.n_items)]

    rng_ev = _rng(seed, 4)
    events: list[InteractionEvent] = []
    event_item: list[np.ndarray] = []
    bounds = np.linspace(0, p.n_events, p.n_buckets + 1, dtype=int)
    for b in range(p.n_buckets):
        size = int(bounds[b + 1] - bounds[b])
        if size == 0:
            continue
        tau = (bounds[b] + bounds[b + 1]) / (2.0 * p.n_events)
        factors = base + p.drift_strength * tau * direction
        score = pop_base + p.drift_strength * p.popularity_drift * tau * pop_drift
        ranks = np.empty(p.n_items)
        ranks[np.argsort(-score)] = np.arange(p.n_items)
        pop_logit = -p.popularity_skew * np.log1p(ranks)
        users_b = rng_ev.choice(p.n_users, size=size, p=activity)
        logits = (user_f[users_b] @ factors.T) / p.temperature + pop_logit[None, :]
        gumbel = rng_ev.gumbel(size=logits.shape)
        items_b = np.argmax(logits + gumbel, axis=1)
        event_item.append(items_b)
        for off, (u, i) in enumerate(zip(users_b, items_b)):
            events.append(
                InteractionEvent(
                    user=user_ids[int(u)],
                    item=item_ids[int(i)],
                    ts=int(bounds[b]) + off,
                )
            )
    all_items = np.concatenate(event_item) if event_item else np.empty(0, dtype=int)
    return DriftBenchmark(
        params=p,
        seed=seed,
        events=events,
        item_ids=item_ids,
        _base=base,
        _direction=direction,
        _event_item=all_items,
        _event_tau=np.array([e.ts for e in events]) / p.n_events,
    )


def gen_benchmark(
    seed: int,
    n_users: int = BENCHMARK_DEFAULT.n_users,
    n_items: int = BENCHMARK_DEFAULT.n_items,
    n_events: int = BENCHMARK_DEFAULT.n_events,
    dim: int = BENCHMARK_DEFAULT.dim,
    drift_strength: float = BENCHMARK_DEFAULT.drift_strength,
    popularity_skew: float = BENCHMARK_DEFAULT.popularity_skew,
) -> tuple[list[InteractionEvent], ItemEmbeddingTable, ItemEmbeddingTable]:
    """Events plus the two standard embedding tables: the old window spans
    blocks 1-8 (first 80% of the timeline), the full window blocks 1-9."""
    params = replace(
        BENCHMARK_DEFAULT,
        n_users=n_users,
        n_items=n_items,
        n_events=n_events,
        dim=dim,
        drift_strength=drift_strength,
        popularity_skew=popularity_skew,
    )
    bench = make_benchmark(seed, params)
    return (
        bench.events,
        bench.embeddings_for_window(0.8),
        bench.embeddings_for_window(0.9),
    )


@dataclass(frozen=True)
class DriftReport:
    position_churn: tuple[float, ...]  # per position, token disagreement rate
    item_change_rate: float  # fraction of overlap items whose SID changed
    recoverable_fraction: float  # churn explainable by a per-position permutation
    overlap_size: int


def drift_report(old: SidAssignment, new: SidAssignment) -> DriftReport:
    matrices = compute_cooccurrence(old, new)
    overlap = old.entries.keys() & new.entries.keys()
    n = len(overlap)
    length = old.spec.num_positions
    churn = []
    changed = 0
    for item in overlap:
        if old.entries[item].tokens != new.entries[item].tokens:
            changed += 1
    for w in matrices:
        agree = sum(c for (a, b), c in w.counts.items() if a == b)
        churn.append(1.0 - agree / n)
    matched = sum(matched_weight(w, solve_hungarian(w)) for w in matrices)
    return DriftReport(
        position_churn=tuple(churn),
        item_change_rate=changed / n,
        recoverable_fraction=matched / (n * length),
        overlap_size=n,
    )

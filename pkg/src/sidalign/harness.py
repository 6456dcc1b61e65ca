"""Policy harness: one-step refresh comparison and multi-step rolling
adaptation over chronological blocks, using the tokenizer, alignment, and
retriever surrogate.

Policies (all warm-started ones share the same base checkpoint):
  base              train on the early window, no update
  ft-old            finetune on the fresh block keeping stale SIDs
  ft-new            rebuild SIDs from the full window, finetune unaligned
  ft-ours-greedy    rebuild, align to the old token space (greedy), finetune
  ft-ours-hungarian rebuild, align (hungarian), finetune
  full              rebuild SIDs and retrain from scratch on all blocks

Evaluation is future-item prediction on the held-out block: context is the
last N restricted interactions before it, targets are the user's items in
it, and both are restricted to items present in the old tokenization so all
policies see the identical user and target sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import quantizer
from .alignment import align, rewrite
from .core import CodebookSpec, InteractionEvent, SidAssignment, TemporalBlocks
from .metrics import ndcg_at_k, recall_at_k
from .retriever import NGramSidModel, beam_decode, build_trie, train, warm_update
from .simulate import DriftBenchmark
from .temporal import chronological_blocks, five_core_filter, user_histories

POLICIES = (
    "base",
    "ft-old",
    "ft-new",
    "ft-ours-greedy",
    "ft-ours-hungarian",
    "full",
)


@dataclass(frozen=True)
class PolicyConfig:
    policy: str = "ft-ours-greedy"
    base_upto: int = 8  # base model trains on blocks 1..base_upto
    finetune_block: int = 9
    eval_block: int = 10
    n_blocks: int = 10
    context_len: int = 20  # last-N interaction context
    order: int = 4
    alpha: float = 0.1
    backoff_ratio: float = 0.6
    beam_width: int = 50
    k_list: tuple[int, ...] = (10, 50)
    decay: float = 0.5
    passes: int = 1
    seed: int = 0
    codebook_sizes: tuple[int, ...] = (32, 16)
    kmeans_iters: int = 25
    max_eval_users: Optional[int] = 600

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if not self.base_upto < self.finetune_block < self.eval_block <= self.n_blocks:
            raise ValueError("block indices must be strictly increasing")
        ks = tuple(self.k_list)
        if any(k < 1 for k in ks) or list(ks) != sorted(ks):
            raise ValueError("k_list must be positive and ascending")
        object.__setattr__(self, "k_list", ks)
        object.__setattr__(self, "codebook_sizes", tuple(self.codebook_sizes))

    @property
    def spec(self) -> CodebookSpec:
        return CodebookSpec(sizes=self.codebook_sizes)


@dataclass(frozen=True)
class PolicyResult:
    policy: str
    seed: int
    step: Optional[int]  # rolling-adaptation step, None for one-shot runs
    recall: dict[int, float]
    ndcg: dict[int, float]
    n_users: int
    n_skipped: int

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "step": self.step,
            "recall": {str(k): v for k, v in self.recall.items()},
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "n_users": self.n_users,
            "n_skipped": self.n_skipped,
        }


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[PolicyResult, ...]

    def mean(self, policy: str, k: int, metric: str = "recall", step=None) -> float:
        vals = [
            getattr(r, metric)[k]
            for r in self.rows
            if r.policy == policy and r.step == step
        ]
        if not vals:
            raise KeyError(f"no rows for policy {policy!r} step {step}")
        return float(np.mean(vals))

    def per_seed(self, policy: str, k: int, metric: str = "recall", step=None):
        return [
            getattr(r, metric)[k]
            for r in sorted(
                (r for r in self.rows if r.policy == policy and r.step == step),
                key=lambda r: r.seed,
            )
        ]

    def to_json(self) -> dict:
        return {"rows": [r.to_json() for r in self.rows]}


@dataclass
class PreparedData:
    """Blocked event log plus window-indexed embedding tables."""

    blocks: TemporalBlocks
    embeddings: dict[float, "object"]  # window fraction -> ItemEmbeddingTable


def prepare_benchmark(
    bench: DriftBenchmark,
    n_blocks: int = 10,
    five_core: bool = True,
    windows: Sequence[float] = (0.5, 0.6, 0.7, 0.8, 0.9),
) -> PreparedData:
    events = bench.events
    if five_core:
        events = five_core_filter(events)
    blocks = chronological_blocks(events, n=n_blocks)
    emb = {round(w, 6): bench.embeddings_for_window(w) for w in windows}
    return PreparedData(blocks=blocks, embeddings=emb)


def _block_sequences(
    blocks: TemporalBlocks, first: int, last: int
) -> dict[str, list[str]]:
    """Per-user item sequences over blocks first..last, in event order."""
    seqs: dict[str, list[str]] = {}
    for k in range(first, last + 1):
        for e in blocks.block(k):
            seqs.setdefault(e.user, []).append(e.item)
    return seqs


def _tokenize(data: PreparedData, window: float, config: PolicyConfig) -> SidAssignment:
    # Each window's tokenizer is rebuilt from scratch with its own seed, so
    # two rebuilds share no initialization and their token labels are only
    # related through the data (alignment has to earn any correspondence).
    emb = data.embeddings[round(window, 6)]
    seed = config.seed * 1009 + int(round(window * 1000))
    books = quantizer.fit(emb, config.spec, iters=config.kmeans_iters, seed=seed)
    return quantizer.encode(emb, books)


def _restrict(seq: Sequence[str], allowed: set[str]) -> list[str]:
    return [it for it in seq if it in allowed]


def _chained_train(
    blocks: TemporalBlocks,
    first: int,
    last: int,
    assignment: SidAssignment,
    allowed: set[str],
    config: PolicyConfig,
) -> NGramSidModel:
    """Train block-by-block, decaying existing counts before each block, so
    the result is the checkpoint a decay-based incremental pipeline would
    hold after `last` blocks."""
    model = NGramSidModel(
        assignment.spec,
        order=config.order,
        alpha=config.alpha,
        backoff_ratio=config.backoff_ratio,
    )
    for k in range(first, last + 1):
        seqs = _block_sequences(blocks, k, k)
        seqs = {u: s2 for u, s in seqs.items() if (s2 := _restrict(s, allowed))}
        model = warm_update(model, seqs, assignment, decay=config.decay)
    return model


@dataclass
class _EvalSet:
    users: list[str]
    contexts: dict[str, list[str]]
    targets: dict[str, set[str]]
    n_skipped: int


def _build_eval_set(
    data: PreparedData,
    eval_block: int,
    context_len: int,
    restriction: set[str],
    max_eval_users: Optional[int],
    seed: int,
) -> _EvalSet:
    histories = user_histories(data.blocks, upto_block=eval_block - 1, max_len=10**9)
    target_items: dict[str, set[str]] = {}
    for e in data.blocks.block(eval_block):
        target_items.setdefault(e.user, set()).add(e.item)
    users, contexts, targets = [], {}, {}
    skipped = 0
    for u in sorted(target_items):
        tgt = target_items[u] & restriction
        ctx = _restrict(histories.get(u, []), restriction)[-context_len:]
        if not tgt or not ctx:
            skipped += 1
            continue
        users.append(u)
        contexts[u] = ctx
        targets[u] = tgt
    if max_eval_users is not None and len(users) > max_eval_users:
        rng = np.random.Generator(np.random.Philox(key=[seed, 999]))
        chosen = rng.choice(len(users), size=max_eval_users, replace=False)
        users = [users[i] for i in sorted(chosen)]
    return _EvalSet(users=users, contexts=contexts, targets=targets, n_skipped=skipped)


def _evaluate(
    model: NGramSidModel,
    assignment: SidAssignment,
    eval_set: _EvalSet,
    config: PolicyConfig,
    restriction: set[str],
    policy: str,
    step: Optional[int] = None,
) -> PolicyResult:
    catalog = SidAssignment(
        spec=assignment.spec,
        entries={it: assignment.entries[it] for it in restriction},
    )
    trie = build_trie(catalog)
    top_k = max(config.k_list)
    recall_acc = {k: 0.0 for k in config.k_list}
    ndcg_acc = {k: 0.0 for k in config.k_list}
    for u in eval_set.users:
        ranked_pairs = beam_decode(
            model,
            eval_set.contexts[u],
            catalog,
            trie,
            beam_width=config.beam_width,
            top_k=top_k,
        )
        ranked = [item for item, _ in ranked_pairs]
        tgt = eval_set.targets[u]
        for k in config.k_list:
            recall_acc[k] += recall_at_k(ranked, tgt, k)
            ndcg_acc[k] += ndcg_at_k(ranked, tgt, k)
    n = max(len(eval_set.users), 1)
    return PolicyResult(
        policy=policy,
        seed=config.seed,
        step=step,
        recall={k: v / n for k, v in recall_acc.items()},
        ndcg={k: v / n for k, v in ndcg_acc.items()},
        n_users=len(eval_set.users),
        n_skipped=eval_set.n_skipped,
    )


class Experiment:
    """One seed's worth of shared state: tokenizations, base checkpoint, and
    the common evaluation set, reused across policies."""

    def __init__(
        self,
        data: PreparedData,
        config: PolicyConfig,
        old_assignment: Optional[SidAssignment] = None,
        new_assignment: Optional[SidAssignment] = None,
    ):
        self.data = data
        self.config = config
        self._old = old_assignment
        self._new = new_assignment
        self._base_model: Optional[NGramSidModel] = None
        self._eval_set: Optional[_EvalSet] = None

    @property
    def old_assignment(self) -> SidAssignment:
        if self._old is None:
            self._old = _tokenize(
                self.data, self.config.base_upto / self.config.n_blocks, self.config
            )
        return self._old

    @property
    def new_assignment(self) -> SidAssignment:
        if self._new is None:
            self._new = _tokenize(
                self.data, self.config.finetune_block / self.config.n_blocks, self.config
            )
        return self._new

    @property
    def restriction(self) -> set[str]:
        return set(self.old_assignment.entries)

    def aligned_assignment(self, solver: str) -> SidAssignment:
        mapping = align(self.old_assignment, self.new_assignment, solver)
        return rewrite(self.new_assignment, mapping)

    def base_model(self) -> NGramSidModel:
        # The checkpoint is built the way it would exist in production: one
        # warm update per block with the configured decay, so older blocks
        # are down-weighted exactly as every later refresh step will be.
        if self._base_model is None:
            self._base_model = _chained_train(
                self.data.blocks,
                1,
                self.config.base_upto,
                self.old_assignment,
                self.restriction,
                self.config,
            )
        return self._base_model

    def eval_set(self) -> _EvalSet:
        if self._eval_set is None:
            self._eval_set = _build_eval_set(
                self.data,
                self.config.eval_block,
                self.config.context_len,
                self.restriction,
                self.config.max_eval_users,
                self.config.seed,
            )
        return self._eval_set

    def _finetune_sequences(self, assignment: SidAssignment) -> dict[str, list[str]]:
        seqs = _block_sequences(
            self.data.blocks, self.config.finetune_block, self.config.finetune_block
        )
        allowed = set(assignment.entries)
        seqs = {u: _restrict(s, allowed) for u, s in seqs.items()}
        return {u: s for u, s in seqs.items() if s}

    def _warm(self, assignment: SidAssignment) -> NGramSidModel:
        model = warm_update(
            self.base_model(),
            {},
            assignment,
            decay=self.config.decay,
        )
        seqs = self._finetune_sequences(assignment)
        model.add_sequences(seqs, assignment, weight=float(self.config.passes))
        return model

    def run(self, policy: str) -> PolicyResult:
        cfg = self.config
        if policy == "base":
            model, assignment = self.base_model(), self.old_assignment
        elif policy == "ft-old":
            model, assignment = self._warm(self.old_assignment), self.old_assignment
        elif policy == "ft-new":
            model, assignment = self._warm(self.new_assignment), self.new_assignment
        elif policy in ("ft-ours-greedy", "ft-ours-hungarian"):
            aligned = self.aligned_assignment(policy.rsplit("-", 1)[1])
            model, assignment = self._warm(aligned), aligned
        elif policy == "full":
            seqs = _block_sequences(self.data.blocks, 1, cfg.finetune_block)
            allowed = set(self.new_assignment.entries)
            seqs = {u: s2 for u, s in seqs.items() if (s2 := _restrict(s, allowed))}
            model = train(
                seqs,
                self.new_assignment,
                order=cfg.order,
                alpha=cfg.alpha,
                backoff_ratio=cfg.backoff_ratio,
            )
            assignment = self.new_assignment
        else:
            raise ValueError(f"unknown policy {policy!r}")
        return _evaluate(
            model, assignment, self.eval_set(), cfg, self.restriction, policy
        )


def run_policy(
    config: PolicyConfig,
    data: PreparedData,
    old_assignment: Optional[SidAssignment] = None,
    new_assignment: Optional[SidAssignment] = None,
) -> PolicyResult:
    """Execute one policy end to end. Assignments may be injected to pin the
    tokenizations (identity-drift checks); otherwise they are built from the
    window embedding tables."""
    exp = Experiment(data, config, old_assignment, new_assignment)
    return exp.run(config.policy)


def run_policies(
    config: PolicyConfig, data: PreparedData, policies: Sequence[str] = POLICIES
) -> list[PolicyResult]:
    """Run several policies against shared per-seed state."""
    exp = Experiment(data, config)
    return [exp.run(p) for p in policies]


ROLLING_POLICIES = ("ft-old", "ft-new", "ft-ours-greedy", "full")


def run_rolling(
    config: PolicyConfig,
    data: PreparedData,
    t_start: int = 5,
    t_end: int = 8,
    policies: Sequence[str] = ROLLING_POLICIES,
) -> list[PolicyResult]:
    """Multi-step continual adaptation: initialize on blocks 1..t_start,
    then for each t in (t_start, t_end] adapt on block t and evaluate on
    block t+1.

    ft-old keeps the initial SIDs; ft-new rebuilds each step; ft-ours
    rebuilds and re-aligns to the previous step's (aligned) token space;
    full rebuilds and retrains from scratch on blocks 1..t.
    """
    cfg = config
    n_blocks = cfg.n_blocks
    old0 = _tokenize(data, t_start / n_blocks, cfg)
    restriction = set(old0.entries)

    def _train_on(first, last, assignment):
        seqs = _block_sequences(data.blocks, first, last)
        allowed = set(assignment.entries)
        seqs = {u: s2 for u, s in seqs.items() if (s2 := _restrict(s, allowed))}
        return train(
            seqs,
            assignment,
            order=cfg.order,
            alpha=cfg.alpha,
            backoff_ratio=cfg.backoff_ratio,
        )

    init_model = _chained_train(data.blocks, 1, t_start, old0, restriction, cfg)
    state_model = {p: init_model for p in policies if p != "full"}
    prev_space = {p: old0 for p in policies}  # token space each policy decodes in

    results: list[PolicyResult] = []
    for t in range(t_start + 1, t_end + 1):
        new_t = _tokenize(data, t / n_blocks, cfg)
        eval_set = _build_eval_set(
            data, t + 1, cfg.context_len, restriction, cfg.max_eval_users, cfg.seed
        )
        for policy in policies:
            if policy == "ft-old":
                assignment = old0
            elif policy in ("ft-new", "full"):
                assignment = new_t
            elif policy.startswith("ft-ours"):
                solver = policy.rsplit("-", 1)[1]
                mapping = align(prev_space[policy], new_t, solver)
                assignment = rewrite(new_t, mapping)
            else:
                raise ValueError(f"policy {policy!r} not supported in rolling mode")
            if policy == "full":
                model = _train_on(1, t, assignment)
            else:
                base = state_model[policy]
                model = warm_update(base, {}, assignment, decay=cfg.decay)
                seqs = _block_sequences(data.blocks, t, t)
                allowed = set(assignment.entries)
                seqs = {
                    u: s2 for u, s in seqs.items() if (s2 := _restrict(s, allowed))
                }
                model.add_sequences(seqs, assignment, weight=float(cfg.passes))
                state_model[policy] = model
            prev_space[policy] = assignment
            results.append(
                _evaluate(
                    model, assignment, eval_set, cfg, restriction, policy, step=t
                )
            )
    return results

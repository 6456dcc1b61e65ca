"""Interaction-log preparation: 5-core filtering, chronological equal-size
blocking, and per-user history extraction."""

from __future__ import annotations

from collections import Counter

from .core import InteractionEvent, TemporalBlocks


def five_core_filter(events: list[InteractionEvent]) -> list[InteractionEvent]:
    """Iteratively drop events of users with < 5 interactions and items with
    < 5 interactions until a fixpoint; relative order is preserved."""
    current = list(events)
    while True:
        users = Counter(e.user for e in current)
        items = Counter(e.item for e in current)
        kept = [e for e in current if users[e.user] >= 5 and items[e.item] >= 5]
        if len(kept) == len(current):
            return kept
        current = kept


def chronological_blocks(
    events: list[InteractionEvent], n: int = 10
) -> TemporalBlocks:
    """Stable-sort by timestamp and split into n contiguous ranges whose
    sizes differ by at most one; the first len(events) % n blocks take the
    extra event."""
    if n < 1:
        raise ValueError("block count must be >= 1")
    if len(events) < n:
        raise ValueError(f"{len(events)} events cannot fill {n} blocks")
    ordered = sorted(events, key=lambda e: e.ts)  # stable: ties keep input order
    q, r = divmod(len(ordered), n)
    blocks = []
    start = 0
    for k in range(n):
        size = q + 1 if k < r else q
        blocks.append(tuple(ordered[start : start + size]))
        start += size
    return TemporalBlocks(blocks=tuple(blocks))


def user_histories(
    blocks: TemporalBlocks, upto_block: int, max_len: int
) -> dict[str, list[str]]:
    """Per user, the chronologically last <= max_len items from blocks
    1..upto_block. Users with no events in that range are absent."""
    if not 1 <= upto_block <= len(blocks):
        raise ValueError(f"upto_block {upto_block} outside 1..{len(blocks)}")
    histories: dict[str, list[str]] = {}
    for e in blocks.events_through(upto_block):
        histories.setdefault(e.user, []).append(e.item)
    return {u: seq[-max_len:] for u, seq in histories.items()}

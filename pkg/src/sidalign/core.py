"""Shared domain types for semantic-ID tokenizations and interaction logs.

Everything here is immutable after construction and safe to share across
threads. Item ids and user ids are opaque strings; integer-looking ids are
preserved verbatim. Timestamps are opaque integers, only their order is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Sequence


@dataclass(frozen=True)
class CodebookSpec:
    """Shape of a semantic-ID token space: L positions, one vocabulary each."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) < 1:
            raise ValueError("codebook spec needs at least one position")
        if any(int(v) < 1 for v in self.sizes):
            raise ValueError(f"codebook sizes must be >= 1, got {self.sizes}")
        object.__setattr__(self, "sizes", tuple(int(v) for v in self.sizes))

    @property
    def num_positions(self) -> int:
        return len(self.sizes)

    def to_json(self) -> dict:
        return {"L": self.num_positions, "sizes": list(self.sizes)}

    @classmethod
    def from_json(cls, obj: Mapping) -> "CodebookSpec":
        spec = cls(sizes=tuple(obj["sizes"]))
        if int(obj.get("L", spec.num_positions)) != spec.num_positions:
            raise ValueError("spec header L does not match number of sizes")
        return spec


@dataclass(frozen=True)
class SemanticId:
    """A length-L token sequence identifying one item."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))


@dataclass(frozen=True)
class Violation:
    """One broken invariant found by validate_assignment."""

    item: str
    rule: str
    position: Optional[int] = None

    def __str__(self):
        where = "" if self.position is None else f" at position {self.position}"
        return f"item {self.item!r}{where}: {self.rule}"


@dataclass(frozen=True)
class SidAssignment:
    """Mapping from item id to semantic ID under a common codebook spec.

    Two items may share a SID (collisions are legal; retrieval expands
    SID -> items one-to-many). Construction does not validate entries so
    that validate_assignment can report violations as data.
    """

    spec: CodebookSpec
    entries: Mapping[str, SemanticId]

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def items(self) -> Iterator[str]:
        return iter(self.entries)

    def tokens_of(self, item: str) -> tuple[int, ...]:
        return self.entries[item].tokens

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SidAssignment):
            return NotImplemented
        return self.spec == other.spec and self.entries == other.entries


def validate_assignment(a: SidAssignment) -> list[Violation]:
    """Check every entry against the assignment's codebook spec.

    Returns an empty list iff all invariants hold; violations are data,
    not exceptions.
    """
    sizes = a.spec.sizes
    length = len(sizes)
    out: list[Violation] = []
    for item, sid in a.entries.items():
        toks = sid.tokens
        if len(toks) != length:
            out.append(Violation(item, f"sid length {len(toks)} != {length}"))
            continue
        for pos, tok in enumerate(toks):
            if not 0 <= tok < sizes[pos]:
                out.append(
                    Violation(item, f"token {tok} outside [0, {sizes[pos]})", pos)
                )
    return out


@dataclass(frozen=True)
class TokenMapping:
    """Per-position injective map from new token indices into the old space.

    maps[pos] is a partial function; its domain must cover every token the
    new assignment it was built for uses at that position.
    """

    spec: CodebookSpec
    maps: tuple[Mapping[int, int], ...]

    def __post_init__(self):
        if len(self.maps) != self.spec.num_positions:
            raise ValueError(
                f"expected {self.spec.num_positions} position maps, got {len(self.maps)}"
            )
        frozen = []
        for pos, m in enumerate(self.maps):
            size = self.spec.sizes[pos]
            values = list(m.values())
            if len(set(values)) != len(values):
                raise ValueError(f"position {pos}: map is not injective")
            for a, b in m.items():
                if not 0 <= b < size:
                    raise ValueError(
                        f"position {pos}: mapped value {b} outside [0, {size})"
                    )
                if not 0 <= a < size:
                    raise ValueError(
                        f"position {pos}: domain token {a} outside [0, {size})"
                    )
            frozen.append(dict(sorted(m.items())))
        object.__setattr__(self, "maps", tuple(frozen))

    def apply(self, position: int, token: int) -> int:
        return self.maps[position][token]

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "maps": [[[a, b] for a, b in sorted(m.items())] for m in self.maps],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TokenMapping":
        spec = CodebookSpec.from_json(obj["spec"])
        maps = tuple({int(a): int(b) for a, b in pairs} for pairs in obj["maps"])
        return cls(spec=spec, maps=maps)


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Sparse per-position counts of (new token, old token) pairs over the
    item overlap set."""

    position: int
    counts: Mapping[tuple[int, int], int]

    def __post_init__(self):
        for (a, b), c in self.counts.items():
            if c < 0:
                raise ValueError(f"negative count for pair ({a}, {b})")
        object.__setattr__(self, "counts", dict(self.counts))

    def total(self) -> int:
        return sum(self.counts.values())

    def active_new(self) -> list[int]:
        return sorted({a for a, _ in self.counts})

    def active_old(self) -> list[int]:
        return sorted({b for _, b in self.counts})


@dataclass(frozen=True)
class InteractionEvent:
    """One timestamped (user, item) interaction."""

    user: str
    item: str
    ts: int

    def __post_init__(self):
        if self.ts < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.ts}")


@dataclass(frozen=True)
class TemporalBlocks:
    """Contiguous chronological partition of an event stream.

    Concatenating the blocks in order reproduces the stream sorted stably by
    timestamp; block sizes differ by at most one event.
    """

    blocks: tuple[tuple[InteractionEvent, ...], ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def block(self, k: int) -> tuple[InteractionEvent, ...]:
        """1-based block access, matching the block numbering used in reports."""
        return self.blocks[k - 1]

    def events_through(self, k: int) -> list[InteractionEvent]:
        """All events of blocks 1..k in order."""
        out: list[InteractionEvent] = []
        for b in self.blocks[:k]:
            out.extend(b)
        return out


@dataclass(frozen=True)
class ItemEmbeddingTable:
    """Dense per-item vectors, all of one dimension, all components finite."""

    dim: int
    vectors: Mapping[str, Sequence[float]]

    def __post_init__(self):
        import numpy as np

        frozen = {}
        for item, vec in self.vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise ValueError(
                    f"item {item!r}: vector shape {arr.shape} != ({self.dim},)"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"item {item!r}: non-finite component")
            arr.setflags(write=False)
            frozen[item] = arr
        object.__setattr__(self, "vectors", frozen)

    def __len__(self) -> int:
        return len(self.vectors)

    def sorted_items(self) -> list[str]:
        return sorted(self.vectors)

"""File formats: SID assignments (JSONL), interaction logs (TSV),
embeddings (binary), token mappings (JSON).

Assignment JSONL: a header line `{"spec": {"L": ..., "sizes": [...]}}`
followed by one `{"item": ..., "sid": [...]}` object per line, UTF-8, LF.
Writers emit items in sorted order so output is byte-stable.

Embedding binary: magic `SIDEMB01`, little-endian u32 count, u32 dim, then
`count` records of (u32 id byte length, id bytes, dim little-endian f32).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .core import (
    CodebookSpec,
    InteractionEvent,
    ItemEmbeddingTable,
    SemanticId,
    SidAssignment,
    TokenMapping,
)

PathLike = Union[str, Path]

EMBEDDING_MAGIC = b"SIDEMB01"


class FormatError(ValueError):
    """Raised when an input file does not match its documented format."""


def write_assignment(a: SidAssignment, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({"spec": a.spec.to_json()}) + "\n")
        for item in sorted(a.entries):
            sid = a.entries[item]
            f.write(
                json.dumps({"item": item, "sid": list(sid.tokens)}, ensure_ascii=False)
                + "\n"
            )


def read_assignment(path: PathLike) -> SidAssignment:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        if not header.strip():
            raise FormatError(f"{path}: empty assignment file")
        try:
            spec = CodebookSpec.from_json(json.loads(header)["spec"])
        except (KeyError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: bad assignment header: {e}") from e
        entries = {}
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                item = str(obj["item"])
                sid = SemanticId(tokens=tuple(obj["sid"]))
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise FormatError(f"{path}:{lineno}: bad assignment row: {e}") from e
            if item in entries:
                raise FormatError(f"{path}:{lineno}: duplicate item {item!r}")
            entries[item] = sid
    return SidAssignment(spec=spec, entries=entries)


def write_events(events: Iterable[InteractionEvent], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("user\titem\tts\n")
        for e in events:
            f.write(f"{e.user}\t{e.item}\t{e.ts}\n")


def read_events(path: PathLike) -> list[InteractionEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header.split("\t") != ["user", "item", "ts"]:
            raise FormatError(f"{path}: expected header 'user\\titem\\tts'")
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns")
            try:
                events.append(
                    InteractionEvent(user=parts[0], item=parts[1], ts=int(parts[2]))
                )
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
    return events


def write_embeddings(table: ItemEmbeddingTable, path: PathLike) -> None:
    with open(path, "wb") as f:
        f.write(EMBEDDING_MAGIC)
        f.write(struct.pack("<II", len(table.vectors), table.dim))
        for item in table.sorted_items():
            raw = item.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(np.asarray(table.vectors[item], dtype="<f4").tobytes())


def read_embeddings(path: PathLike) -> ItemEmbeddingTable:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != EMBEDDING_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        count, dim = struct.unpack("<II", f.read(8))
        vectors = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<I", f.read(4))
            item = f.read(id_len).decode("utf-8")
            buf = f.read(4 * dim)
            if len(buf) != 4 * dim:
                raise FormatError(f"{path}: truncated record for item {item!r}")
            vectors[item] = np.frombuffer(buf, dtype="<f4").astype(np.float64)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")
    return ItemEmbeddingTable(dim=dim, vectors=vectors)


def write_mapping(mapping: TokenMapping, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(mapping.to_json(), f, indent=2)
        f.write("\n")


def read_mapping(path: PathLike) -> TokenMapping:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return TokenMapping.from_json(json.load(f))
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: bad mapping file: {e}") from e

import numpy as np
import pytest
from hypothesis import given, settings

from sidalign import io
from sidalign.core import (
    CodebookSpec,
    InteractionEvent,
    ItemEmbeddingTable,
    SemanticId,
    SidAssignment,
    TokenMapping,
)

from conftest import assignments


@given(assignments())
@settings(max_examples=50)
def test_assignment_round_trip(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("rt") / "a.jsonl"
    io.write_assignment(a, path)
    assert io.read_assignment(path) == a


def test_assignment_write_is_byte_stable(tmp_path):
    spec = CodebookSpec(sizes=(4, 4))
    entries = {"b": SemanticId(tokens=(1, 2)), "a": SemanticId(tokens=(0, 3))}
    p1, p2 = tmp_path / "1.jsonl", tmp_path / "2.jsonl"
    io.write_assignment(SidAssignment(spec=spec, entries=entries), p1)
    io.write_assignment(SidAssignment(spec=spec, entries=dict(reversed(entries.items()))), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_assignment_header_line_format(tmp_path):
    spec = CodebookSpec(sizes=(4, 4))
    a = SidAssignment(spec=spec, entries={"x": SemanticId(tokens=(0, 1))})
    path = tmp_path / "a.jsonl"
    io.write_assignment(a, path)
    lines = path.read_text().splitlines()
    assert lines[0] == '{"spec": {"L": 2, "sizes": [4, 4]}}'
    assert lines[1] == '{"item": "x", "sid": [0, 1]}'


def test_read_assignment_rejects_duplicates(tmp_path):
    path = tmp_path / "a.jsonl"
    path.write_text(
        '{"spec": {"L": 1, "sizes": [4]}}\n'
        '{"item": "x", "sid": [0]}\n'
        '{"item": "x", "sid": [1]}\n'
    )
    with pytest.raises(io.FormatError, match="duplicate"):
        io.read_assignment(path)


def test_events_round_trip(tmp_path):
    events = [
        InteractionEvent(user="u1", item="i1", ts=5),
        InteractionEvent(user="u2", item="i 2", ts=0),
    ]
    path = tmp_path / "e.tsv"
    io.write_events(events, path)
    assert path.read_text().splitlines()[0] == "user\titem\tts"
    assert io.read_events(path) == events


def test_events_rejects_bad_header(tmp_path):
    path = tmp_path / "e.tsv"
    path.write_text("a\tb\tc\n")
    with pytest.raises(io.FormatError, match="header"):
        io.read_events(path)


def test_embeddings_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    vecs = {f"item-{i}": rng.normal(size=6) for i in range(20)}
    table = ItemEmbeddingTable(dim=6, vectors=vecs)
    path = tmp_path / "emb.bin"
    io.write_embeddings(table, path)
    back = io.read_embeddings(path)
    assert back.dim == 6
    assert set(back.vectors) == set(vecs)
    for k in vecs:
        # f32 storage quantizes the f64 values
        np.testing.assert_allclose(back.vectors[k], vecs[k], atol=1e-6)


def test_embeddings_magic_checked(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 8)
    with pytest.raises(io.FormatError, match="magic"):
        io.read_embeddings(path)


def test_mapping_round_trip(tmp_path):
    spec = CodebookSpec(sizes=(4, 4))
    mapping = TokenMapping(spec=spec, maps=({0: 2, 1: 0, 3: 1}, {2: 2}))
    path = tmp_path / "map.json"
    io.write_mapping(mapping, path)
    back = io.read_mapping(path)
    assert back.spec == spec
    assert back.maps == mapping.maps

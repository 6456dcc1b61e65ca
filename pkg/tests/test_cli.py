import json

import pytest

from sidalign.cli import main
from sidalign import io


SMALL_SIM = [
    "--users", "60",
    "--items", "120",
    "--events", "4000",
    "--dim", "6",
]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A simulated benchmark plus derived artifacts, built once via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    sim = root / "sim"
    rc = main(["simulate", "--seed", "5", "--out-dir", str(sim), *SMALL_SIM])
    assert rc == 0
    return root


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_subcommand_help_exits_zero():
    for cmd in ("simulate", "split", "tokenize", "align", "train", "decode",
                "eval", "pipeline"):
        assert main([cmd, "--help"]) == 0


def test_missing_subcommand_exits_two():
    assert main([]) == 2


def test_simulate_outputs(workdir):
    sim = workdir / "sim"
    events = io.read_events(sim / "events.tsv")
    assert len(events) == 4000
    emb = io.read_embeddings(sim / "embeddings_old.bin")
    assert emb.dim == 6
    cfg = json.loads((sim / "resolved_config.json").read_text())
    assert cfg["seed"] == 5
    assert cfg["n_users"] == 60


def test_split_writes_blocks(workdir):
    sim, out = workdir / "sim", workdir / "blocks"
    rc = main([
        "split", "--events", str(sim / "events.tsv"),
        "--blocks", "10", "--five-core", "--out-dir", str(out),
    ])
    assert rc == 0
    files = sorted(out.glob("block_*.tsv"))
    assert len(files) == 10
    total = sum(len(io.read_events(f)) for f in files)
    assert total <= 4000


def test_tokenize_align_train_decode_chain(workdir):
    sim = workdir / "sim"
    old_a = workdir / "old.jsonl"
    new_a = workdir / "new.jsonl"
    for emb, out in (("embeddings_old.bin", old_a), ("embeddings_full.bin", new_a)):
        rc = main([
            "tokenize", "--embeddings", str(sim / emb),
            "--spec", "2,8,8", "--iters", "5", "--out", str(out),
        ])
        assert rc == 0
    aligned = workdir / "aligned.jsonl"
    mapping = workdir / "mapping.json"
    rc = main([
        "align", "--old", str(old_a), "--new", str(new_a),
        "--solver", "hungarian",
        "--out-mapping", str(mapping), "--out-aligned", str(aligned),
    ])
    assert rc == 0
    a = io.read_assignment(aligned)
    assert set(a.entries) == set(io.read_assignment(new_a).entries)
    io.read_mapping(mapping)  # parses and validates

    model = workdir / "model.bin"
    rc = main([
        "train", "--events", str(sim / "events.tsv"),
        "--assignment", str(new_a), "--order", "3", "--out", str(model),
    ])
    assert rc == 0

    ranks = workdir / "ranks.tsv"
    rc = main([
        "decode", "--model", str(model), "--assignment", str(new_a),
        "--history", str(sim / "events.tsv"),
        "--beam", "10", "--k", "5", "--out", str(ranks),
    ])
    assert rc == 0
    lines = ranks.read_text().splitlines()
    assert lines[0] == "user\trank\titem\tscore"
    assert len(lines) > 1


def test_tokenize_rejects_bad_spec(workdir):
    sim = workdir / "sim"
    rc = main([
        "tokenize", "--embeddings", str(sim / "embeddings_old.bin"),
        "--spec", "3,8,8", "--out", str(workdir / "x.jsonl"),
    ])
    assert rc == 1


def test_align_incompatible_specs_exits_one(workdir, tmp_path):
    sim = workdir / "sim"
    a4 = tmp_path / "a4.jsonl"
    a8 = tmp_path / "a8.jsonl"
    for spec, out in (("1,4", a4), ("1,8", a8)):
        rc = main([
            "tokenize", "--embeddings", str(sim / "embeddings_old.bin"),
            "--spec", spec, "--iters", "3", "--out", str(out),
        ])
        assert rc == 0
    rc = main(["align", "--old", str(a4), "--new", str(a8)])
    assert rc == 1


def test_missing_input_file_exits_two(tmp_path):
    rc = main([
        "split", "--events", str(tmp_path / "absent.tsv"),
        "--out-dir", str(tmp_path / "out"),
    ])
    assert rc == 2


def test_warm_start_train(workdir, tmp_path):
    sim = workdir / "sim"
    model = workdir / "model.bin"
    out = tmp_path / "warm.bin"
    rc = main([
        "train", "--events", str(sim / "events.tsv"),
        "--assignment", str(workdir / "new.jsonl"),
        "--warm-start", str(model), "--decay", "0.5", "--out", str(out),
    ])
    assert rc == 0
    from sidalign.retriever import load_model

    load_model(out)


def test_pipeline_from_config(tmp_path):
    cfg = {
        "preset": "benchmark-default",
        "n_users": 60,
        "n_items": 120,
        "n_events": 4000,
        "dim": 6,
        "n_clusters": 8,
        "seeds": [0],
        "policies": ["base", "ft-old", "ft-ours-greedy"],
        "codebook_sizes": [8, 8],
        "kmeans_iters": 4,
        "beam_width": 10,
        "k_list": [5, 10],
        "max_eval_users": 50,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "report.json"
    rc = main(["pipeline", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert {r["policy"] for r in report["rows"]} == {
        "base", "ft-old", "ft-ours-greedy"
    }
    assert "ft-old" in report["summary"]
    sidecar = tmp_path / "report.resolved_config.json"
    resolved = json.loads(sidecar.read_text())
    assert resolved["resolved_benchmark"]["n_users"] == 60


def test_eval_with_toml_config_and_csv(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        "\n".join(
            [
                'preset = "benchmark-default"',
                "n_users = 60",
                "n_items = 120",
                "n_events = 4000",
                "dim = 6",
                "n_clusters = 8",
                "seeds = [0]",
                'policies = ["ft-old", "ft-ours-greedy"]',
                "codebook_sizes = [8, 8]",
                "kmeans_iters = 4",
                "beam_width = 10",
                "k_list = [5, 10]",
                "max_eval_users = 50",
            ]
        )
    )
    out = tmp_path / "r.json"
    csv_path = tmp_path / "r.csv"
    rc = main([
        "eval", "--config", str(cfg_path),
        "--out", str(out), "--csv", str(csv_path),
    ])
    assert rc == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("policy,seed,step,recall@5")
    assert len(lines) == 3


def test_unknown_preset_exits_one(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"preset": "nope"}))
    assert main(["eval", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1

"""Command-line surface wiring the pipeline: simulate, split, tokenize,
align, train, decode, eval, pipeline.

Exit codes: 0 success, 1 validation error, 2 I/O error. Logs go to stderr;
data goes to files. Every run echoes its resolved configuration and seed so
refresh pipelines stay auditable.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import harness, io, quantizer, retriever, simulate
from .alignment import AlignmentError, align, rewrite
from .core import CodebookSpec
from .metrics import wilcoxon_paired
from .temporal import chronological_blocks, five_core_filter


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _echo_config(name: str, resolved: dict) -> None:
    _log(f"[{name}] resolved config:")
    for k, v in sorted(resolved.items()):
        _log(f"  {k} = {v}")


def _parse_spec(text: str) -> CodebookSpec:
    try:
        parts = [int(x) for x in text.split(",")]
    except ValueError as e:
        raise CliError(f"bad --spec {text!r}: {e}") from e
    if len(parts) < 2 or parts[0] != len(parts) - 1:
        raise CliError(f"--spec must be L,V0,...,V(L-1) with L sizes, got {text!r}")
    return CodebookSpec(sizes=tuple(parts[1:]))


def _load_config_file(path: str) -> dict:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e}", code=2) from e
    if p.suffix in (".toml", ".tml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except Exception as e:
            raise CliError(f"bad TOML in {path}: {e}") from e
    try:
        return json.loads(raw)
    except json.JSONDecodeError as e:
        raise CliError(f"bad JSON in {path}: {e}") from e


def _cmd_simulate(args) -> int:
    params = simulate.PRESETS.get(args.preset)
    if params is None:
        raise CliError(
            f"unknown preset {args.preset!r}; available: {sorted(simulate.PRESETS)}"
        )
    overrides = {
        k: v
        for k, v in {
            "n_users": args.users,
            "n_items": args.items,
            "n_events": args.events,
            "dim": args.dim,
            "drift_strength": args.drift,
            "popularity_skew": args.skew,
        }.items()
        if v is not None
    }
    params = replace(params, **overrides)
    _echo_config("simulate", {**asdict(params), "seed": args.seed})
    bench = simulate.make_benchmark(args.seed, params)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_events(bench.events, out / "events.tsv")
    io.write_embeddings(bench.embeddings_for_window(0.8), out / "embeddings_old.bin")
    io.write_embeddings(bench.embeddings_for_window(0.9), out / "embeddings_full.bin")
    (out / "resolved_config.json").write_text(
        json.dumps({**asdict(params), "seed": args.seed}, indent=2) + "\n"
    )
    _log(f"[simulate] wrote {len(bench.events)} events to {out}")
    return 0


def _cmd_split(args) -> int:
    _echo_config(
        "split",
        {"events": args.events, "blocks": args.blocks, "five_core": args.five_core},
    )
    events = io.read_events(args.events)
    if args.five_core:
        before = len(events)
        events = five_core_filter(events)
        _log(f"[split] 5-core filtering kept {len(events)}/{before} events")
    try:
        blocks = chronological_blocks(events, n=args.blocks)
    except ValueError as e:
        raise CliError(str(e)) from e
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(1, len(blocks) + 1):
        io.write_events(blocks.block(k), out / f"block_{k:02d}.tsv")
    _log(f"[split] wrote {len(blocks)} blocks to {out}")
    return 0


def _cmd_tokenize(args) -> int:
    spec = _parse_spec(args.spec)
    _echo_config(
        "tokenize",
        {
            "embeddings": args.embeddings,
            "spec": args.spec,
            "iters": args.iters,
            "seed": args.seed,
        },
    )
    emb = io.read_embeddings(args.embeddings)
    try:
        books = quantizer.fit(emb, spec, iters=args.iters, seed=args.seed)
        assignment = quantizer.encode(emb, books)
    except quantizer.QuantizerError as e:
        raise CliError(str(e)) from e
    io.write_assignment(assignment, args.out)
    _log(
        f"[tokenize] {len(assignment)} items, final quantization error "
        f"{quantizer.quantization_error(emb, books):.6g}"
    )
    return 0


def _cmd_align(args) -> int:
    _echo_config(
        "align", {"old": args.old, "new": args.new, "solver": args.solver}
    )
    old = io.read_assignment(args.old)
    new = io.read_assignment(args.new)
    try:
        mapping = align(old, new, args.solver)
        aligned = rewrite(new, mapping)
    except AlignmentError as e:
        raise CliError(str(e)) from e
    if args.out_mapping:
        io.write_mapping(mapping, args.out_mapping)
    if args.out_aligned:
        io.write_assignment(aligned, args.out_aligned)
    _log(f"[align] aligned {len(aligned)} items with {args.solver} matching")
    return 0


def _cmd_train(args) -> int:
    _echo_config(
        "train",
        {
            "events": args.events,
            "assignment": args.assignment,
            "order": args.order,
            "alpha": args.alpha,
            "warm_start": args.warm_start,
            "decay": args.decay,
        },
    )
    assignment = io.read_assignment(args.assignment)
    events = io.read_events(args.events)
    seqs: dict[str, list[str]] = {}
    dropped = 0
    for e in sorted(events, key=lambda e: e.ts):
        if e.item in assignment.entries:
            seqs.setdefault(e.user, []).append(e.item)
        else:
            dropped += 1
    if dropped:
        _log(f"[train] dropped {dropped} events whose items have no SID")
    try:
        if args.warm_start:
            model = retriever.load_model(args.warm_start)
            model = retriever.warm_update(model, seqs, assignment, decay=args.decay)
        else:
            model = retriever.train(
                seqs, assignment, order=args.order, alpha=args.alpha
            )
    except retriever.RetrieverError as e:
        raise CliError(str(e)) from e
    retriever.save_model(model, args.out)
    _log(f"[train] saved model with {len(model.tables)} contexts to {args.out}")
    return 0


def _cmd_decode(args) -> int:
    _echo_config(
        "decode",
        {
            "model": args.model,
            "assignment": args.assignment,
            "history": args.history,
            "beam": args.beam,
            "k": args.k,
        },
    )
    model = retriever.load_model(args.model)
    assignment = io.read_assignment(args.assignment)
    events = io.read_events(args.history)
    histories: dict[str, list[str]] = {}
    for e in sorted(events, key=lambda e: e.ts):
        histories.setdefault(e.user, []).append(e.item)
    trie = retriever.build_trie(assignment)
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("user\trank\titem\tscore\n")
        for user in sorted(histories):
            ctx = [it for it in histories[user] if it in assignment.entries]
            try:
                ranked = retriever.beam_decode(
                    model, ctx, assignment, trie, beam_width=args.beam, top_k=args.k
                )
            except retriever.RetrieverError as e:
                raise CliError(str(e)) from e
            for rank, (item, score) in enumerate(ranked, start=1):
                f.write(f"{user}\t{rank}\t{item}\t{score:.8f}\n")
    _log(f"[decode] wrote rankings for {len(histories)} users to {args.out}")
    return 0


def _policy_config_from(cfg: dict, seed: int) -> harness.PolicyConfig:
    known = {
        "base_upto",
        "finetune_block",
        "eval_block",
        "n_blocks",
        "context_len",
        "order",
        "alpha",
        "backoff_ratio",
        "beam_width",
        "k_list",
        "decay",
        "passes",
        "codebook_sizes",
        "kmeans_iters",
        "max_eval_users",
    }
    kwargs = {k: v for k, v in cfg.items() if k in known}
    if "k_list" in kwargs:
        kwargs["k_list"] = tuple(kwargs["k_list"])
    if "codebook_sizes" in kwargs:
        kwargs["codebook_sizes"] = tuple(kwargs["codebook_sizes"])
    try:
        return harness.PolicyConfig(seed=seed, **kwargs)
    except (TypeError, ValueError) as e:
        raise CliError(f"bad config: {e}") from e


def _run_experiment(cfg: dict) -> dict:
    preset = simulate.PRESETS.get(cfg.get("preset", "benchmark-default"))
    if preset is None:
        raise CliError(f"unknown preset {cfg.get('preset')!r}")
    sim_over = {
        k: v for k, v in cfg.items() if k in {f.name for f in fields(preset)}
    }
    params = replace(preset, **sim_over)
    seeds = cfg.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    policies = cfg.get("policies", list(harness.POLICIES))
    mode = cfg.get("mode", "one-step")
    rows = []
    for seed in seeds:
        _log(f"[pipeline] seed {seed}")
        bench = simulate.make_benchmark(seed, params)
        pconfig = _policy_config_from(cfg, seed)
        data = harness.prepare_benchmark(bench, n_blocks=pconfig.n_blocks)
        if mode == "one-step":
            rows.extend(harness.run_policies(pconfig, data, policies))
        elif mode == "rolling":
            rows.extend(
                harness.run_rolling(
                    pconfig,
                    data,
                    t_start=int(cfg.get("t_start", 5)),
                    t_end=int(cfg.get("t_end", 8)),
                    policies=cfg.get("rolling_policies", harness.ROLLING_POLICIES),
                )
            )
        else:
            raise CliError(f"unknown mode {mode!r}")
    report = harness.EvalReport(rows=tuple(rows))
    out = report.to_json()
    out["config"] = {**cfg, "resolved_benchmark": asdict(params)}
    out["summary"] = _summarize(report, policies if mode == "one-step" else [], cfg)
    return out


def _summarize(report: harness.EvalReport, policies, cfg) -> dict:
    summary: dict = {}
    steps = sorted({r.step for r in report.rows})
    for step in steps:
        for policy in sorted({r.policy for r in report.rows if r.step == step}):
            key = policy if step is None else f"{policy}@t{step}"
            entry = {}
            ks = sorted(report.rows[0].recall)
            for k in ks:
                entry[f"recall@{k}"] = report.mean(policy, k, "recall", step=step)
                entry[f"ndcg@{k}"] = report.mean(policy, k, "ndcg", step=step)
            summary[key] = entry
    # Paired significance between the headline pair when enough seeds ran.
    try:
        k = max(sorted(report.rows[0].recall))
        a = report.per_seed("ft-ours-greedy", k, "recall")
        b = report.per_seed("ft-old", k, "recall")
        if len(a) >= 5:
            summary["wilcoxon_ft-ours-greedy_vs_ft-old"] = wilcoxon_paired(a, b)
    except (KeyError, ValueError):
        pass
    return summary


def _cmd_eval(args) -> int:
    cfg = _load_config_file(args.config)
    _echo_config("eval", cfg)
    out = _run_experiment(cfg)
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    _log(f"[eval] wrote report to {args.out}")
    if args.csv:
        _write_csv(out, args.csv)
        _log(f"[eval] wrote per-row CSV to {args.csv}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_config_file(args.config)
    _echo_config("pipeline", cfg)
    out = _run_experiment(cfg)
    out_path = Path(args.out or "report.json")
    out_path.write_text(json.dumps(out, indent=2) + "\n")
    resolved = out_path.with_name(out_path.stem + ".resolved_config.json")
    resolved.write_text(json.dumps(out["config"], indent=2) + "\n")
    _log(f"[pipeline] wrote report to {out_path}")
    return 0


def _write_csv(report_json: dict, path: str) -> None:
    import csv

    rows = report_json["rows"]
    ks = sorted(rows[0]["recall"], key=int) if rows else []
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["policy", "seed", "step"]
            + [f"recall@{k}" for k in ks]
            + [f"ndcg@{k}" for k in ks]
        )
        for r in rows:
            w.writerow(
                [r["policy"], r["seed"], r["step"]]
                + [r["recall"][k] for k in ks]
                + [r["ndcg"][k] for k in ks]
            )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sidalign",
        description="Checkpoint-compatible semantic-ID refresh toolkit",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic drift benchmark")
    s.add_argument("--preset", default="benchmark-default")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--users", type=int)
    s.add_argument("--items", type=int)
    s.add_argument("--events", type=int)
    s.add_argument("--dim", type=int)
    s.add_argument("--drift", type=float)
    s.add_argument("--skew", type=float)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("split", help="5-core filter and chronological blocking")
    s.add_argument("--events", required=True)
    s.add_argument("--blocks", type=int, default=10)
    s.add_argument("--five-core", action="store_true")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=_cmd_split)

    s = sub.add_parser("tokenize", help="residual k-means SID construction")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--spec", required=True, help="L,V0,...,V(L-1)")
    s.add_argument("--iters", type=int, default=25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_tokenize)

    s = sub.add_parser("align", help="align a new assignment into an old token space")
    s.add_argument("--old", required=True)
    s.add_argument("--new", required=True)
    s.add_argument("--solver", choices=["greedy", "hungarian"], default="hungarian")
    s.add_argument("--out-mapping")
    s.add_argument("--out-aligned")
    s.set_defaults(func=_cmd_align)

    s = sub.add_parser("train", help="train or warm-update the SID n-gram model")
    s.add_argument("--events", required=True)
    s.add_argument("--assignment", required=True)
    s.add_argument("--order", type=int, default=retriever.DEFAULT_ORDER)
    s.add_argument("--alpha", type=float, default=retriever.DEFAULT_ALPHA)
    s.add_argument("--warm-start", help="existing model to update")
    s.add_argument("--decay", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("decode", help="constrained beam search over valid SIDs")
    s.add_argument("--model", required=True)
    s.add_argument("--assignment", required=True)
    s.add_argument("--history", required=True)
    s.add_argument("--beam", type=int, default=500)
    s.add_argument("--k", type=int, default=500)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_decode)

    s = sub.add_parser("eval", help="run the policy harness from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="report.json")
    s.add_argument("--csv", help="optional per-row CSV export")
    s.set_defaults(func=_cmd_eval)

    s = sub.add_parser("pipeline", help="full experiment from one config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="report.json")
    s.set_defaults(func=_cmd_pipeline)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except CliError as e:
        _log(f"error: {e}")
        return e.code
    except io.FormatError as e:
        _log(f"error: {e}")
        return 2
    except OSError as e:
        _log(f"error: {e}")
        return 2
    except ValueError as e:
        _log(f"error: {e}")
        return 1


def entrypoint() -> None:
    sys.exit(main())

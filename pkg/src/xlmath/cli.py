"""Unified command line: eval, datagen, arena, contamination, curate.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 dataset
validation failure. Human-readable tables and machine-readable JSON files are
derived from the same in-memory report objects, so they cannot drift.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import contamination as contam
from . import curation, datagen, reporting
from .arena import ArenaEntry, compute_elo, run_matches, win_rate
from .core import SamplingConfig, load_dataset, mode_for, validate_dataset
from .gateway import (
    GatewayClient,
    HttpRewardBackend,
    MockBackend,
    MockRewardBackend,
    OpenAiChatBackend,
)
from .harness import RunReport, compare_runs, run_eval, run_te2e
from .msi import run_msi

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_VALIDATION = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _resolve_backend(spec: str, config: dict):
    """Backend from an inline 'mock:<fixture>' spec or a config-file name."""
    if spec.startswith("mock:"):
        return MockBackend.from_file(spec[len("mock:") :])
    entry = config.get("backends", {}).get(spec)
    if entry is None:
        raise UsageError(f"unknown backend {spec!r}; define it in the config file")
    if entry["type"] == "mock":
        return MockBackend.from_file(entry["fixture"], backend_id=spec)
    if entry["type"] == "openai_chat":
        return OpenAiChatBackend(
            endpoint=entry["endpoint"],
            model_id=entry["model"],
            auth_env=entry.get("auth_env"),
            backend_id=spec,
        )
    raise UsageError(f"unknown backend type {entry['type']!r} for {spec!r}")


def _resolve_reward_backend(spec: str | None, config: dict):
    if spec is None:
        return None
    if spec.startswith("mock:"):
        return MockRewardBackend.from_file(spec[len("mock:") :])
    entry = config.get("reward_backends", {}).get(spec)
    if entry is None:
        raise UsageError(f"unknown reward backend {spec!r}")
    if entry["type"] == "mock":
        return MockRewardBackend.from_file(entry["fixture"], backend_id=spec)
    if entry["type"] == "http":
        return HttpRewardBackend(entry["endpoint"], auth_env=entry.get("auth_env"))
    raise UsageError(f"unknown reward backend type {entry['type']!r}")


def _gateway(args, config: dict, reward: bool = False) -> GatewayClient:
    backend = _resolve_backend(args.backend, config)
    reward_backend = (
        _resolve_reward_backend(getattr(args, "reward", None), config) if reward else None
    )
    cache_dir = getattr(args, "cache", None) or config.get("cache_dir")
    max_in_flight = getattr(args, "max_in_flight", None) or config.get("max_in_flight", 4)
    return GatewayClient(
        backend,
        reward_backend=reward_backend,
        cache_dir=cache_dir,
        max_in_flight=int(max_in_flight),
    )


def _sampling(args) -> SamplingConfig:
    return SamplingConfig(seed=args.seed)


def _build_parser() -> _Parser:
    parser = _Parser(prog="xlmath", description=__doc__)
    parser.add_argument("--config", help="JSON config file (backends, cache, limits)")
    parser.add_argument("--seed", type=int, default=0, help="global RNG / sampling seed")
    parser.add_argument("--verbose", action="store_true")
    # the same flags are accepted after the subcommand; SUPPRESS keeps the
    # subparser from clobbering values parsed at the top level
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    ev = commands.add_parser("eval", help="run and compare benchmark evaluations")
    ev_sub = ev.add_subparsers(dest="subcommand", required=True)
    run = ev_sub.add_parser(
        "run", help="evaluate a dataset under one prompting mode", parents=[common]
    )
    run.add_argument("--dataset", required=True)
    run.add_argument(
        "--mode", required=True, choices=["k2k", "k2e", "e2e", "te2e", "msi"]
    )
    run.add_argument("--backend", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--cache", help="response cache directory")
    run.add_argument("--max-in-flight", type=int, dest="max_in_flight")
    compare = ev_sub.add_parser(
        "compare", help="delta table against a baseline run", parents=[common]
    )
    compare.add_argument("--baseline", required=True)
    compare.add_argument("runs", nargs="+")
    compare.add_argument("--out", help="write machine-readable comparison JSON here")

    dg = commands.add_parser("datagen", help="staged training-data generation")
    dg_sub = dg.add_subparsers(dest="subcommand", required=True)
    dgr = dg_sub.add_parser(
        "run", help="run the generation pipeline over seeds", parents=[common]
    )
    dgr.add_argument("--seeds", required=True)
    dgr.add_argument("--backend", required=True)
    dgr.add_argument("--reward", required=True)
    dgr.add_argument("--out", required=True)
    dgr.add_argument("--policy", choices=["high", "low"], default="high")
    dgr.add_argument("--high-thresh", type=float, default=1.0)
    dgr.add_argument("--low-thresh", type=float, default=0.0)
    dgr.add_argument("--top-k", type=int)
    dgr.add_argument("--sample-k", type=int, help="reservoir-subsample the seeds first")
    dgr.add_argument("--cache")
    dgr.add_argument("--max-in-flight", type=int, dest="max_in_flight")
    dgr.add_argument(
        "--stage",
        action="append",
        choices=list(datagen.STAGES),
        help="emit only these stages (repeatable); default all",
    )

    ar = commands.add_parser("arena", help="pairwise judge tournament with Elo")
    ar_sub = ar.add_subparsers(dest="subcommand", required=True)
    arr = ar_sub.add_parser(
        "run", help="judge two answer files and rate contestants", parents=[common]
    )
    arr.add_argument("--a", required=True, help="JSONL of {question_id, question, answer}")
    arr.add_argument("--b", required=True)
    arr.add_argument("--judge", required=True, help="judge backend spec")
    arr.add_argument("--name-a", default="model_a")
    arr.add_argument("--name-b", default="model_b")
    arr.add_argument("--iters", type=int, default=1000)
    arr.add_argument("--k", type=float, default=4.0)
    arr.add_argument("--out", required=True)
    arr.add_argument("--summary-a", help="eval summary.json to join accuracy/cost")
    arr.add_argument("--summary-b")
    arr.add_argument("--cache")
    arr.add_argument("--max-in-flight", type=int, dest="max_in_flight")

    co = commands.add_parser("contamination", help="exact-match corpus scanning")
    co_sub = co.add_subparsers(dest="subcommand", required=True)
    cos = co_sub.add_parser(
        "scan", help="scan a corpus for benchmark questions", parents=[common]
    )
    cos.add_argument("--patterns", required=True, help="JSONL of {id, text} patterns")
    cos.add_argument("--corpus", required=True, help="JSONL file or raw-text directory")
    cos.add_argument("--normalize", choices=["none", "ws"], default="none")
    cos.add_argument("--workers", type=int, default=1)
    cos.add_argument("--min-length", type=int, default=contam.DEFAULT_MIN_LENGTH)
    cos.add_argument("--report", required=True, help="machine-readable report path")
    cos.add_argument("--sources", help="JSON list of source URL prefixes to focus on")

    cu = commands.add_parser("curate", help="human review queue service")
    cu_sub = cu.add_subparsers(dest="subcommand", required=True)
    serve = cu_sub.add_parser("serve", help="run the review HTTP service", parents=[common])
    serve.add_argument("--db", required=True)
    serve.add_argument("--port", type=int, default=8808)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--static", help="directory with the review UI bundle")
    enqueue = cu_sub.add_parser(
        "enqueue", help="add review items from a JSONL file", parents=[common]
    )
    enqueue.add_argument("--db", required=True)
    enqueue.add_argument("--file", required=True)
    export = cu_sub.add_parser("export", help="export accepted/edited items", parents=[common])
    export.add_argument("--db", required=True)
    export.add_argument("--out", required=True)

    return parser


def _cmd_eval_run(args, config: dict) -> int:
    problems = load_dataset(args.dataset)
    report = validate_dataset(problems)
    if not report.ok:
        for finding in report.findings:
            print(f"validation: {finding.item_id}: {finding.code}: {finding.message}")
        return EXIT_VALIDATION
    gateway = _gateway(args, config)
    sampling = _sampling(args)
    mode = mode_for(args.mode)
    if mode.name == "TE2E":
        run_report = run_te2e(problems, gateway, sampling)
    elif mode.name == "MSI":
        msi_result = run_msi(problems, gateway, sampling)
        run_report = msi_result.report
        traces_path = Path(args.out) / "traces.jsonl"
        traces_path.parent.mkdir(parents=True, exist_ok=True)
        with open(traces_path, "w", encoding="utf-8") as handle:
            for trace in msi_result.traces:
                handle.write(json.dumps(trace.to_dict(), ensure_ascii=False, sort_keys=True))
                handle.write("\n")
    else:
        run_report = run_eval(problems, mode, gateway, sampling)
    run_report.save(args.out)
    print(reporting.render_accuracy_table([run_report.summary_dict()]), end="")
    return EXIT_OK


def _cmd_eval_compare(args, config: dict) -> int:
    baseline = RunReport.load(args.baseline)
    others = [RunReport.load(path) for path in args.runs]
    comparison = compare_runs([baseline] + others)
    print(reporting.render_delta_table(comparison), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(comparison, handle, ensure_ascii=False, sort_keys=True, indent=1)
            handle.write("\n")
    return EXIT_OK


def _cmd_datagen_run(args, config: dict) -> int:
    seeds = datagen.load_seeds(args.seeds)
    if args.sample_k is not None:
        seeds = datagen.reservoir_sample(seeds, args.sample_k, args.seed)
    policy = datagen.FilterPolicy(
        high_threshold=args.high_thresh,
        low_threshold=args.low_thresh,
        keep=args.policy,
        top_k=args.top_k,
    )
    gateway = _gateway(args, config, reward=True)
    result = datagen.run_pipeline(seeds, gateway, policy)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = datagen.emit_training_file(
        result.examples, datagen.DEFAULT_SEPARATORS, out_dir / "training.jsonl", args.stage
    )
    datagen.write_discard_log(result, out_dir / "discards.jsonl")
    counts = result.counts()
    counts["input"] = len(seeds)
    counts["written"] = manifest["example_count"]
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


def _load_entries(path: str) -> list[ArenaEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                entries.append(ArenaEntry.from_dict(json.loads(line)))
    return entries


def _cmd_arena_run(args, config: dict) -> int:
    entries_a = _load_entries(args.a)
    entries_b = _load_entries(args.b)
    backend_args = argparse.Namespace(
        backend=args.judge,
        cache=args.cache,
        max_in_flight=args.max_in_flight,
    )
    gateway = _gateway(backend_args, config)
    matches = run_matches(
        entries_a,
        entries_b,
        args.name_a,
        args.name_b,
        gateway,
        rng_seed=args.seed,
        sampling=_sampling(args),
    )
    elo = compute_elo(matches, k=args.k, bootstrap_iters=args.iters, rng_seed=args.seed)
    rows = {}
    for name, summary_path in ((args.name_a, args.summary_a), (args.name_b, args.summary_b)):
        row = dict(elo.ratings[name])
        try:
            row["win_rate"] = win_rate(matches, name)
        except Exception:
            row["win_rate"] = None
        if summary_path:
            with open(summary_path, "r", encoding="utf-8") as handle:
                summary = json.load(handle)
            row["accuracy"] = summary.get("overall")
            row["token_consumption"] = summary.get("l_model")
        rows[name] = row
    report = {
        "contestants": rows,
        "matches": [m.to_dict() for m in matches],
        "elo": elo.to_dict(),
        "seed": args.seed,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "arena.json", "w", encoding="utf-8") as handle:
        json.dump(report, handle, ensure_ascii=False, sort_keys=True, indent=1)
        handle.write("\n")
    for name in sorted(rows):
        row = rows[name]
        line = f"{name}: elo={row['median']:.0f} [{row['low']:.0f}, {row['high']:.0f}]"
        if row.get("win_rate") is not None:
            line += f" win_rate={row['win_rate']:.2f}%"
        if row.get("accuracy") is not None:
            line += f" accuracy={row['accuracy']:.2f}"
        if row.get("token_consumption") is not None:
            line += f" tokens={row['token_consumption']:.0f}"
        print(line)
    return EXIT_OK


def _load_patterns(path: str) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            data = json.loads(line)
            if "text" in data:
                pairs.append((str(data["id"]), data["text"]))
            else:  # dataset-shaped input: scan for both question sides
                pairs.append((f"{data['id']}#ko", data["question_ko"]))
                pairs.append((f"{data['id']}#en", data["question_en"]))
    return pairs


def _cmd_contamination_scan(args, config: dict) -> int:
    normalization = "whitespace_collapse" if args.normalize == "ws" else "none"
    pattern_set = contam.compile_patterns(
        _load_patterns(args.patterns), normalization, args.min_length
    )
    stream = contam.open_corpus(args.corpus)
    if args.sources:
        # two streaming passes: URL matching first, then the focused scan
        prefixes = json.loads(args.sources)
        focus = contam.match_source_documents(
            contam.open_corpus(args.corpus), prefixes
        ).focus_ids()
        stream = (doc for doc in contam.open_corpus(args.corpus) if doc.id in focus)
    report = contam.scan_stream(pattern_set, stream, workers=args.workers)
    payload = report.to_dict()
    payload["peak_rss_bytes"] = contam.peak_rss_bytes()
    payload["excluded_patterns"] = [
        {"id": item_id, "reason": reason} for item_id, reason in pattern_set.excluded
    ]
    with open(args.report, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, sort_keys=True, indent=1)
        handle.write("\n")
    print(
        f"scanned {report.documents_scanned} documents "
        f"({report.bytes_scanned / 1e6:.1f} MB) in {report.elapsed:.2f}s "
        f"({report.throughput_mb_s:.1f} MB/s)"
    )
    if report.total_hits == 0:
        print("no matches found")
    else:
        print(f"{report.total_hits} matches across {len(report.hits)} patterns")
    return EXIT_OK


def _cmd_curate(args, config: dict) -> int:
    if args.subcommand == "serve":
        curation.serve(args.db, port=args.port, host=args.host, static_dir=args.static)
        return EXIT_OK
    queue = curation.CurationQueue(args.db)
    try:
        if args.subcommand == "enqueue":
            outcome = queue.enqueue(curation.load_review_items(args.file))
            print(json.dumps(outcome, sort_keys=True))
        elif args.subcommand == "export":
            fragments = queue.export_reviewed()
            with open(args.out, "w", encoding="utf-8") as handle:
                for fragment in fragments:
                    handle.write(json.dumps(fragment, ensure_ascii=False, sort_keys=True))
                    handle.write("\n")
            print(f"exported {len(fragments)} items")
    finally:
        queue.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        config = _load_config(args.config)
        if args.command == "eval" and args.subcommand == "run":
            return _cmd_eval_run(args, config)
        if args.command == "eval" and args.subcommand == "compare":
            return _cmd_eval_compare(args, config)
        if args.command == "datagen":
            return _cmd_datagen_run(args, config)
        if args.command == "arena":
            return _cmd_arena_run(args, config)
        if args.command == "contamination":
            return _cmd_contamination_scan(args, config)
        if args.command == "curate":
            return _cmd_curate(args, config)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

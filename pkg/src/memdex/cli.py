"""Command-line surface: index, query, bench, stats, compact, synth.

Exit codes: 0 success, 1 usage error, 2 input format error, 3 capacity
exhausted, 4 index corruption.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import bench
from .config import Config, parse_cap
from .errors import (
    CapacityError,
    CorruptSegmentError,
    IndexFormatError,
    InputFormatError,
    InvariantViolationError,
    MemdexError,
)
from .indexer import Index, Indexer

EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_CAPACITY = 3
EXIT_CORRUPT = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_shared_flags(p: argparse.ArgumentParser):
    p.add_argument("--block-size", type=int, default=128, help="compression block size (default 128)")
    p.add_argument("--cap", default="32b",
                   help="buffer cap: 1b..128b or exponent 0..7 (default 32b)")
    p.add_argument("--df-threshold", type=int, default=10,
                   help="minimum document frequency to retain a term (default 10)")
    p.add_argument("--positional", action=argparse.BooleanOptionalAction, default=True,
                   help="index term positions (default on)")
    p.add_argument("--memory-budget", type=int, default=None,
                   help="pool byte budget; exceeding it aborts with exit code 3")
    p.add_argument("--pool-block-bytes", type=int, default=256 * 1024 * 1024,
                   help="pool allocation block size in bytes")
    p.add_argument("--seed", type=int, default=0, help="seed for anything randomized")


def _config_from_args(args) -> Config:
    return Config(
        block_size=args.block_size,
        cap_exponent=parse_cap(args.cap),
        df_threshold=args.df_threshold,
        positional=args.positional,
        pool_block_bytes=args.pool_block_bytes,
        memory_budget=args.memory_budget,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="memdex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist an index from a corpus TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--skip-bad", action="store_true", help="skip malformed lines instead of aborting")
    _add_shared_flags(p)

    p = sub.add_parser("query", help="evaluate a query batch against a persisted index")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--mode", choices=("svs", "wand"), default="svs")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--top", type=int, default=10, help="hits printed per wand result line")

    p = sub.add_parser("bench", help="latency / indexing / kernel benchmark suites")
    p.add_argument("--suite", choices=("latency", "indexing", "kernels"), default="latency")
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--configs", default="1b,32b,COMPACT",
                   help="comma-separated cap labels, optionally COMPACT")
    p.add_argument("--mode", choices=("svs", "wand"), default="svs")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", default="bench_out")
    _add_shared_flags(p)

    p = sub.add_parser("stats", help="memory and layout report for a persisted index")
    p.add_argument("--index", required=True)
    p.add_argument("--csv", help="also write the report as CSV")

    p = sub.add_parser("compact", help="rewrite an index with fully contiguous postings")
    p.add_argument("--index", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("synth", help="generate a deterministic Zipf corpus (and queries)")
    p.add_argument("--output", required=True)
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--zipf-s", type=float, default=1.2)
    p.add_argument("--avg-len", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=0, help="also sample this many queries")
    p.add_argument("--queries-out", help="path for the sampled query file")
    return parser


def cmd_index(args) -> int:
    config = _config_from_args(args)
    indexer = Indexer(config)
    started = time.perf_counter()
    with open(args.input, encoding="utf-8") as fh:
        docs = indexer.ingest(fh, skip_bad=args.skip_bad)
    index = indexer.finalize()
    index.save(args.output)
    wall = time.perf_counter() - started
    print(
        f"indexed {docs} docs, vocab {index.vocab_size} "
        f"(+{index.discarded_terms} below df threshold), "
        f"pool {index.pool.append_offset} bytes, {wall:.2f}s"
    )
    return 0


def cmd_query(args) -> int:
    index = Index.load(args.index)
    queries = bench.load_queries(args.queries)

    def run(q):
        if args.mode == "svs":
            return index.svs(q)
        return index.wand(q, args.k)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run, queries))
    else:
        results = [run(q) for q in queries]
    for qid, result in enumerate(results, 1):
        if args.mode == "svs":
            print(f"{qid}\t{len(result)}")
        else:
            shown = " ".join(f"{h.docid}:{h.score:.6f}" for h in result[: args.top])
            print(f"{qid}\t{len(result)}\t{shown}")
    return 0


def cmd_bench(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.suite == "kernels":
        rows = bench.compare_kernels(seed=args.seed)
        bench.write_kernel_csv(rows, out_dir / "kernels.csv")
        for row in rows:
            print(f"{row.operation:14} {row.backend:8} {row.mops_per_sec:10.2f} Mvalues/s")
        return 0
    if not args.corpus:
        raise InvariantViolationError("--corpus is required for this suite")
    labels = [c.strip() for c in args.configs.split(",") if c.strip()]
    base = _config_from_args(args)
    if args.suite == "indexing":
        rows = bench.run_indexing_suite(args.corpus, labels, trials=args.trials, base_config=base)
        bench.write_indexing_csv(rows, out_dir / "indexing.csv")
        for row in rows:
            ci = "n/a" if row.ci_s is None else f"±{row.ci_s:.3f}"
            print(f"{row.config:8} {row.mean_wall_s:9.3f}s {ci:>9}  {row.docs_per_sec:10.1f} docs/s")
        return 0
    if not args.queries:
        raise InvariantViolationError("--queries is required for the latency suite")
    report = bench.run_latency_suite(
        args.corpus, args.queries, labels, mode=args.mode,
        trials=args.trials, k=args.k, base_config=base, threads=args.threads,
    )
    bench.write_latency_csv(report, out_dir / "latency.csv")
    for row in report.rows:
        if row.bucket == "all":
            ci = "n/a" if row.ci_ms is None else f"±{row.ci_ms:.4f}"
            print(f"{row.config:8} {row.mode:4} {row.mean_ms:10.4f} ms {ci:>10} ({row.trials} trials)")
    return 0


def cmd_stats(args) -> int:
    index = Index.load(args.index)
    report = bench.stats_report(index)
    print(report.to_text())
    if args.csv:
        bench.write_memory_csv(report, args.csv)
    return 0


def cmd_compact(args) -> int:
    index = Index.load(args.index)
    compacted = index.compact()
    compacted.save(args.output)
    print(
        f"compacted {compacted.vocab_size} terms into {compacted.pool.append_offset} pool bytes"
    )
    return 0


def cmd_synth(args) -> int:
    bench.synth_corpus(args.output, args.docs, args.vocab,
                       zipf_s=args.zipf_s, avg_len=args.avg_len, seed=args.seed)
    print(f"wrote {args.docs} docs to {args.output}")
    if args.queries:
        target = args.queries_out or (str(args.output) + ".queries")
        bench.synth_queries(target, args.queries, args.vocab,
                            zipf_s=args.zipf_s, seed=args.seed + 1)
        print(f"wrote {args.queries} queries to {target}")
    return 0


_COMMANDS = {
    "index": cmd_index,
    "query": cmd_query,
    "bench": cmd_bench,
    "stats": cmd_stats,
    "compact": cmd_compact,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (InputFormatError,) as exc:
        print(f"memdex: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapacityError as exc:
        print(f"memdex: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (CorruptSegmentError, IndexFormatError) as exc:
        print(f"memdex: corrupt index: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (MemdexError, OSError) as exc:
        print(f"memdex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Measurement harness: latency by contiguity and query length, indexing
throughput, memory accounting, synthetic corpora, and kernel comparisons.

Latency methodology: per configuration the suite first verifies that every
configuration returns identical results (correctness gates timing), runs one
untimed warmup pass, then times the full query batch per trial. Reported
means are batch wall time divided by query count; per-query times feed the
query-length buckets. Confidence intervals are 95% Student-t over per-trial
means. Queries run single-threaded to isolate latency; pass ``threads > 1``
for a throughput-style run (never used for acceptance numbers).
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .config import Config, parse_cap
from .errors import InvariantViolationError, ResultMismatchError
from .indexer import Index, Indexer

_BUCKETS = ("1", "2", "3", "4", "5+")

COMPACT_LABEL = "COMPACT"


def _bucket(n_terms: int) -> str:
    return str(n_terms) if n_terms < 5 else "5+"


def student_t_halfwidth(samples: Sequence[float], confidence: float = 0.95) -> float | None:
    """95% CI half-width over trial means; None when fewer than 2 trials."""
    n = len(samples)
    if n < 2:
        return None
    t = float(sps.t.ppf(0.5 + confidence / 2.0, n - 1))
    return t * float(np.std(samples, ddof=1)) / float(np.sqrt(n))


# -- synthetic data ----------------------------------------------------------


def zipf_probabilities(vocab_size: int, s: float) -> np.ndarray:
    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    p = ranks ** (-s)
    return p / p.sum()


def synth_corpus(path, doc_count: int, vocab_size: int, zipf_s: float = 1.2,
                 avg_len: int = 12, seed: int = 0) -> Path:
    """Deterministic Zipf-distributed corpus in the tokenized TSV format."""
    if doc_count < 1 or vocab_size < 1 or avg_len < 1 or zipf_s <= 0:
        raise InvariantViolationError("corpus parameters must be positive")
    path = Path(path)
    rng = np.random.default_rng(seed)
    probs = zipf_probabilities(vocab_size, zipf_s)
    doc_lens = np.maximum(rng.poisson(avg_len, size=doc_count), 1)
    bounds = np.zeros(doc_count + 1, dtype=np.int64)
    np.cumsum(doc_lens, out=bounds[1:])
    draws = rng.choice(vocab_size, size=int(bounds[-1]), p=probs)
    width = max(5, len(str(vocab_size - 1)))
    terms = np.array([f"t{i:0{width}d}" for i in range(vocab_size)])
    chunk = 50_000
    with open(path, "w", encoding="utf-8") as fh:
        for base in range(0, doc_count, chunk):
            top = min(base + chunk, doc_count)
            tokens = terms[draws[bounds[base] : bounds[top]]]
            rel = bounds[base:top + 1] - bounds[base]
            lines = []
            for i in range(top - base):
                lines.append(f"{base + i}\t" + " ".join(tokens[rel[i] : rel[i + 1]]))
            fh.write("\n".join(lines) + "\n")
    return path


def synth_queries(path, count: int, vocab_size: int, zipf_s: float = 1.2,
                  seed: int = 0, min_terms: int = 1, max_terms: int = 5) -> Path:
    """Random queries whose terms follow the corpus term distribution."""
    path = Path(path)
    rng = np.random.default_rng(seed)
    probs = zipf_probabilities(vocab_size, zipf_s)
    lengths = rng.integers(min_terms, max_terms + 1, size=count)
    draws = rng.choice(vocab_size, size=int(lengths.sum()), p=probs)
    width = max(5, len(str(vocab_size - 1)))
    with open(path, "w", encoding="utf-8") as fh:
        at = 0
        for n in lengths:
            fh.write(" ".join(f"t{i:0{width}d}" for i in draws[at : at + n]) + "\n")
            at += int(n)
    return path


def load_queries(path) -> list[list[str]]:
    """One query per line, space-separated terms; blank lines skipped."""
    queries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            terms = line.split()
            if terms:
                queries.append(terms)
    return queries


def fit_zipf_slope(corpus_path, top_ranks: int = 1000) -> float:
    """Log-log slope of the corpus rank-frequency curve over the head ranks."""
    counts: dict[str, int] = {}
    with open(corpus_path, encoding="utf-8") as fh:
        for line in fh:
            _, _, rest = line.partition("\t")
            for tok in rest.split():
                counts[tok] = counts.get(tok, 0) + 1
    freqs = np.sort(np.array(list(counts.values()), dtype=np.float64))[::-1]
    top = freqs[: min(top_ranks, len(freqs))]
    ranks = np.arange(1, len(top) + 1, dtype=np.float64)
    slope, _ = np.polyfit(np.log(ranks), np.log(top), 1)
    return float(slope)


# -- index construction per configuration ------------------------------------


def config_for_label(label: str, base: Config) -> Config:
    """Resolve a '1b'..'128b' / exponent label into a Config."""
    m = parse_cap(label)
    return Config(
        block_size=base.block_size,
        cap_exponent=m,
        df_threshold=base.df_threshold,
        positional=base.positional,
        pool_block_bytes=base.pool_block_bytes,
        memory_budget=base.memory_budget,
    )


def build_indexes(corpus_path, labels: Sequence[str], base: Config) -> dict[str, Index]:
    """Build one index per configuration label; COMPACT derives from a built one."""
    indexes: dict[str, Index] = {}
    plain = [lab for lab in labels if lab != COMPACT_LABEL]
    for label in plain:
        indexer = Indexer(config_for_label(label, base))
        with open(corpus_path, encoding="utf-8") as fh:
            indexer.ingest(fh)
        indexes[label] = indexer.finalize()
    if COMPACT_LABEL in labels:
        if not plain:
            indexer = Indexer(config_for_label("1b", base))
            with open(corpus_path, encoding="utf-8") as fh:
                indexer.ingest(fh)
            source = indexer.finalize()
        else:
            source = indexes[plain[0]]
        indexes[COMPACT_LABEL] = source.compact()
    return {label: indexes[label] for label in labels}


# -- latency suite -----------------------------------------------------------


@dataclass
class LatencyRow:
    config: str
    mode: str
    bucket: str
    mean_ms: float
    ci_ms: float | None
    trials: int
    trial_means_ms: list[float] = field(default_factory=list)


@dataclass
class LatencyReport:
    mode: str
    rows: list[LatencyRow]

    def mean_ms(self, config: str, bucket: str = "all") -> float:
        for row in self.rows:
            if row.config == config and row.bucket == bucket:
                return row.mean_ms
        raise KeyError((config, bucket))

    def trial_means(self, config: str) -> list[float]:
        for row in self.rows:
            if row.config == config and row.bucket == "all":
                return row.trial_means_ms
        raise KeyError(config)


def _run_query(index: Index, terms: list[str], mode: str, k: int):
    if mode == "svs":
        return index.svs(terms)
    return index.wand(terms, k)


def _results_equal(mode: str, a, b, tol: float = 1e-9) -> bool:
    if mode == "svs":
        return np.array_equal(a, b)
    if len(a) != len(b):
        return False
    return all(
        x.docid == y.docid and abs(x.score - y.score) <= tol for x, y in zip(a, b)
    )


def run_latency_suite(
    corpus_path,
    queries_path,
    config_labels: Sequence[str],
    mode: str = "svs",
    trials: int = 3,
    k: int = 1000,
    base_config: Config | None = None,
    indexes: dict[str, Index] | None = None,
    threads: int = 1,
) -> LatencyReport:
    """Time the query batch per configuration after a cross-config result gate."""
    if mode not in ("svs", "wand"):
        raise InvariantViolationError("mode must be 'svs' or 'wand'")
    base = base_config or Config()
    queries = load_queries(queries_path)
    if indexes is None:
        indexes = build_indexes(corpus_path, config_labels, base)

    # Correctness gate: all configurations must agree before any timing.
    reference = None
    ref_label = None
    for label in config_labels:
        results = [_run_query(indexes[label], q, mode, k) for q in queries]
        if reference is None:
            reference, ref_label = results, label
        else:
            for qi, (got, want) in enumerate(zip(results, reference)):
                if not _results_equal(mode, got, want):
                    raise ResultMismatchError(
                        f"{mode} results differ between {ref_label} and {label} "
                        f"on query {qi + 1}"
                    )

    rows: list[LatencyRow] = []
    for label in config_labels:
        index = indexes[label]
        for q in queries:  # warmup pass, untimed
            _run_query(index, q, mode, k)
        trial_means: list[float] = []
        bucket_times: dict[str, list[float]] = {b: [] for b in _BUCKETS}
        for _ in range(max(trials, 1)):
            if threads > 1:
                batch_start = time.perf_counter()
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(lambda q: _run_query(index, q, mode, k), queries))
                batch = time.perf_counter() - batch_start
            else:
                batch_start = time.perf_counter()
                for q in queries:
                    q_start = time.perf_counter()
                    _run_query(index, q, mode, k)
                    bucket_times[_bucket(len(q))].append(time.perf_counter() - q_start)
                batch = time.perf_counter() - batch_start
            trial_means.append(batch / len(queries) * 1000.0)
        rows.append(
            LatencyRow(
                config=label, mode=mode, bucket="all",
                mean_ms=float(np.mean(trial_means)),
                ci_ms=student_t_halfwidth(trial_means),
                trials=len(trial_means), trial_means_ms=trial_means,
            )
        )
        for bucket in _BUCKETS:
            times = bucket_times[bucket]
            if times:
                rows.append(
                    LatencyRow(
                        config=label, mode=mode, bucket=bucket,
                        mean_ms=float(np.mean(times)) * 1000.0,
                        ci_ms=None, trials=len(trial_means),
                    )
                )
    return LatencyReport(mode=mode, rows=rows)


def write_latency_csv(report: LatencyReport, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "mode", "query_len_bucket", "mean_ms", "ci_ms", "trials"])
        for row in report.rows:
            w.writerow([
                row.config, row.mode, row.bucket, f"{row.mean_ms:.6f}",
                "" if row.ci_ms is None else f"{row.ci_ms:.6f}", row.trials,
            ])


# -- indexing suite ------------------------------------------------------------


@dataclass
class IndexingRow:
    config: str
    trials: int
    mean_wall_s: float
    ci_s: float | None
    docs_per_sec: float
    wall_times_s: list[float]


def run_indexing_suite(corpus_path, config_labels: Sequence[str], trials: int = 3,
                       base_config: Config | None = None) -> list[IndexingRow]:
    """Wall-clock index builds per configuration (input is pre-tokenized)."""
    base = base_config or Config()
    rows = []
    for label in config_labels:
        if label == COMPACT_LABEL:
            continue  # compaction is a post-pass, not an indexing configuration
        walls = []
        docs = 0
        for _ in range(max(trials, 1)):
            indexer = Indexer(config_for_label(label, base))
            with open(corpus_path, encoding="utf-8") as fh:
                started = time.perf_counter()
                docs = indexer.ingest(fh)
                indexer.finalize()
                walls.append(time.perf_counter() - started)
        mean_wall = float(np.mean(walls))
        rows.append(
            IndexingRow(
                config=label, trials=len(walls), mean_wall_s=mean_wall,
                ci_s=student_t_halfwidth(walls),
                docs_per_sec=docs / mean_wall if mean_wall > 0 else 0.0,
                wall_times_s=walls,
            )
        )
    return rows


def write_indexing_csv(rows: list[IndexingRow], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "trials", "mean_wall_s", "ci_s", "docs_per_sec"])
        for row in rows:
            w.writerow([
                row.config, row.trials, f"{row.mean_wall_s:.6f}",
                "" if row.ci_s is None else f"{row.ci_s:.6f}", f"{row.docs_per_sec:.2f}",
            ])


# -- memory report --------------------------------------------------------------


@dataclass
class MemoryReport:
    peak_docid_bytes: int
    peak_tf_bytes: int
    peak_position_bytes: int
    pool_bytes: int
    segment_bytes: int
    alignment_pad_bytes: int
    block_skip_bytes: int
    vocab_size: int
    discarded_terms: int
    doc_count: int
    total_tokens: int
    level_fractions: list[tuple[str, float]]

    @property
    def peak_buffer_bytes(self) -> int:
        return self.peak_docid_bytes + self.peak_tf_bytes + self.peak_position_bytes

    def to_text(self) -> str:
        lines = [
            f"documents                {self.doc_count}",
            f"total tokens             {self.total_tokens}",
            f"retained vocabulary      {self.vocab_size}",
            f"discarded terms          {self.discarded_terms}",
            f"pool bytes               {self.pool_bytes}",
            f"  segment payload        {self.segment_bytes}",
            f"  alignment padding      {self.alignment_pad_bytes}",
            f"  block-boundary skip    {self.block_skip_bytes}",
            f"peak buffer bytes        {self.peak_buffer_bytes}",
            f"  docids                 {self.peak_docid_bytes}",
            f"  term frequencies       {self.peak_tf_bytes}",
            f"  positions              {self.peak_position_bytes}",
            "buffer-length distribution (share of retained terms):",
        ]
        for label, fraction in self.level_fractions:
            lines.append(f"  {label:>6}  {fraction:.4f}")
        return "\n".join(lines)


def stats_report(index: Index) -> MemoryReport:
    """Memory accounting for a finalized index."""
    total_retained = sum(index.level_counts)
    fractions = []
    for level, count in enumerate(index.level_counts):
        label = f"{1 << level}b"
        fractions.append((label, count / total_retained if total_retained else 0.0))
    return MemoryReport(
        peak_docid_bytes=index.peaks["docid_bytes"],
        peak_tf_bytes=index.peaks["tf_bytes"],
        peak_position_bytes=index.peaks["position_bytes"],
        pool_bytes=index.pool.append_offset,
        segment_bytes=index.pool.segment_bytes,
        alignment_pad_bytes=index.pool.pad_bytes,
        block_skip_bytes=index.pool.skip_bytes,
        vocab_size=index.vocab_size,
        discarded_terms=index.discarded_terms,
        doc_count=index.stats.doc_count,
        total_tokens=index.stats.total_tokens,
        level_fractions=fractions,
    )


def write_memory_csv(report: MemoryReport, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for name in (
            "doc_count", "total_tokens", "vocab_size", "discarded_terms",
            "pool_bytes", "segment_bytes", "alignment_pad_bytes", "block_skip_bytes",
            "peak_docid_bytes", "peak_tf_bytes", "peak_position_bytes",
        ):
            w.writerow([name, getattr(report, name)])
        for label, fraction in report.level_fractions:
            w.writerow([f"buffer_fraction_{label}", f"{fraction:.6f}"])


# -- kernel backend comparison ---------------------------------------------------


@dataclass
class KernelBenchRow:
    operation: str
    backend: str
    mops_per_sec: float
    elapsed_s: float


def compare_kernels(block_count: int = 2000, seed: int = 0) -> list[KernelBenchRow]:
    """Micro-benchmark the compiled and pure-Python kernels on the same data."""
    from ._kernels import pykernels

    backends = [("python", pykernels)]
    try:
        from ._kernels import _native

        backends.insert(0, ("native", _native))
    except ImportError:
        pass

    rng = np.random.default_rng(seed)
    blocks = [
        rng.integers(0, 1 << int(rng.integers(1, 20)), size=128, dtype=np.uint32)
        for _ in range(block_count)
    ]
    encoded = [pykernels.encode_block(b, 0, len(b)) for b in blocks]
    out = np.empty(256, dtype=np.uint32)
    rows = []
    for name, impl in backends:
        started = time.perf_counter()
        for b in blocks:
            impl.encode_block(b, 0, len(b))
        elapsed = time.perf_counter() - started
        rows.append(KernelBenchRow(
            "encode_block", name, block_count * 128 / elapsed / 1e6, elapsed))
        started = time.perf_counter()
        for payload in encoded:
            impl.decode_block(payload, 0, len(payload), out)
        elapsed = time.perf_counter() - started
        rows.append(KernelBenchRow(
            "decode_block", name, block_count * 128 / elapsed / 1e6, elapsed))
    return rows


def write_kernel_csv(rows: list[KernelBenchRow], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["operation", "backend", "mvalues_per_sec", "elapsed_s"])
        for row in rows:
            w.writerow([row.operation, row.backend,
                        f"{row.mops_per_sec:.3f}", f"{row.elapsed_s:.6f}"])

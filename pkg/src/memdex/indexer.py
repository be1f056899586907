"""Document-at-a-time indexing loop and the finalized queryable index.

Documents arrive as (docid, tokens) with strictly increasing docids; tokens
are assumed pre-stemmed with stopwords already removed. Positions are 1-based
token ordinals. The loop is strictly single-threaded; querying is allowed
only on the finalized index, which is immutable and safe to share across
threads.

Corpus file format (used by ``ingest`` and all fixtures): UTF-8 text, one
document per line, ``docid<TAB>token token ...`` with decimal docids.
"""

from __future__ import annotations

import time
from array import array
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import pool as pool_mod
from .buffers import BufferMaps, FlushRequest
from .config import Config
from .dictionary import NO_SEGMENT, TermDictionary, TermEntry
from .errors import (
    InputFormatError,
    InputOrderError,
    InvariantViolationError,
    StateError,
)
from .pool import SegmentPool

_U32_MAX = 0xFFFFFFFF


@dataclass
class CollectionStats:
    """Global statistics required by BM25 scoring."""

    doc_count: int
    total_tokens: int
    doc_ids: np.ndarray
    doc_lens: np.ndarray

    @property
    def avg_doclen(self) -> float:
        return self.total_tokens / self.doc_count if self.doc_count else 0.0


@dataclass
class ProgressEvent:
    docs: int
    docs_per_sec: float
    pool_bytes: int


@dataclass
class FlushEvent:
    """Instrumentation record: one buffer flush routed to the pool."""

    term_id: int
    ordinal: int
    capacity: int
    count: int
    offsets: list[int]


class Indexer:
    """Single-writer incremental indexer.

    Pass ``flush_log`` (a list) to record every buffer flush for layout
    audits; leave it None in production use.
    """

    def __init__(self, config: Config | None = None, flush_log: list[FlushEvent] | None = None):
        self.config = config or Config()
        self.dictionary = TermDictionary()
        self.buffers = BufferMaps(self.config)
        self.pool = SegmentPool(
            block_bytes=self.config.pool_block_bytes,
            memory_budget=self.config.memory_budget,
        )
        self.flush_log = flush_log
        self._doc_ids = array("I")
        self._doc_lens = array("I")
        self._total_tokens = 0
        self._last_docid = -1
        self._finalized = False

    def index_document(self, docid: int, tokens: Sequence[str]):
        """Index one document; tokens in order, positions start at one."""
        if self._finalized:
            raise StateError("index already finalized")
        if docid <= self._last_docid:
            raise InputOrderError(f"docid {docid} not greater than previous {self._last_docid}")
        if docid > _U32_MAX:
            raise InvariantViolationError("docid exceeds 32 bits")
        self._last_docid = docid
        gathered: dict[str, list[int]] = {}
        pos = 1
        for token in tokens:
            slot = gathered.get(token)
            if slot is None:
                gathered[token] = [pos]
            else:
                slot.append(pos)
            pos += 1
        dictionary = self.dictionary
        buffers = self.buffers
        for term, positions in gathered.items():
            term_id = dictionary.lookup_or_insert(term)
            entry = dictionary.entry_by_id(term_id)
            entry.df += 1
            requests = buffers.insert(term_id, docid, len(positions), positions)
            if requests:
                for request in requests:
                    self._route_flush(entry, request)
        self._doc_ids.append(docid)
        self._doc_lens.append(len(tokens))
        self._total_tokens += pos - 1

    def _route_flush(self, entry: TermEntry, request: FlushRequest):
        head, tail, offsets = self.pool.append_segments(request, entry.tail, self.config)
        if entry.head == NO_SEGMENT:
            entry.head = head
        entry.tail = tail
        if self.flush_log is not None:
            self.flush_log.append(
                FlushEvent(request.term_id, request.ordinal, request.capacity,
                           request.count, offsets)
            )

    def ingest(
        self,
        lines: Iterable[str],
        on_progress: Callable[[ProgressEvent], None] | None = None,
        skip_bad: bool = False,
        progress_every: int = 100_000,
    ) -> int:
        """Index a tokenized corpus stream; returns the document count.

        Malformed lines raise :class:`InputFormatError` with the line number,
        or are skipped when ``skip_bad`` is set.
        """
        started = time.monotonic()
        indexed = 0
        for lineno, line in enumerate(lines, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            head, _, rest = line.partition("\t")
            try:
                docid = int(head)
                if not 0 <= docid <= _U32_MAX:
                    raise ValueError
            except ValueError:
                if skip_bad:
                    continue
                raise InputFormatError(f"line {lineno}: bad docid field {head!r}", lineno)
            try:
                self.index_document(docid, rest.split())
            except InputOrderError:
                if skip_bad:
                    continue
                raise InputOrderError(f"line {lineno}: docid {docid} out of order", lineno)
            indexed += 1
            if on_progress is not None and indexed % progress_every == 0:
                elapsed = max(time.monotonic() - started, 1e-9)
                on_progress(ProgressEvent(indexed, indexed / elapsed, self.pool.append_offset))
        return indexed

    def finalize(self) -> "Index":
        """Flush remaining buffers, drop sub-threshold terms, seal the pool."""
        if self._finalized:
            raise StateError("index already finalized")
        self._finalized = True
        dictionary = self.dictionary
        for request in self.buffers.drain_all():
            self._route_flush(dictionary.entry_by_id(request.term_id), request)
        retained = [e for e in dictionary.entries_in_id_order() if e.has_segments]
        self.pool.seal()
        return Index(
            config=self.config,
            entries=retained,
            pool=self.pool,
            stats=CollectionStats(
                doc_count=len(self._doc_ids),
                total_tokens=self._total_tokens,
                doc_ids=np.frombuffer(self._doc_ids, dtype=np.uint32).copy()
                if len(self._doc_ids)
                else np.empty(0, dtype=np.uint32),
                doc_lens=np.frombuffer(self._doc_lens, dtype=np.uint32).copy()
                if len(self._doc_lens)
                else np.empty(0, dtype=np.uint32),
            ),
            peaks=self.buffers.peak_memory_report(),
            discarded_terms=self.buffers.discarded_terms,
            level_counts=list(self.buffers.level_counts),
        )


class Index:
    """Finalized, immutable, queryable index."""

    def __init__(self, config, entries, pool, stats, peaks, discarded_terms, level_counts):
        self.config: Config = config
        self.entries: list[TermEntry] = entries
        self.pool: SegmentPool = pool
        self.stats: CollectionStats = stats
        self.peaks = peaks
        self.discarded_terms = discarded_terms
        self.level_counts = level_counts
        self._terms = {e.term: e for e in entries}
        self._dense_docids = bool(
            stats.doc_count
            and stats.doc_ids[-1] == stats.doc_count - 1
            and stats.doc_ids[0] == 0
        )
        self._doclens_f64 = stats.doc_lens.astype(np.float64)
        self._bounds: dict[int, float] = {}
        self.bounds_prepared = False

    # -- lookups -------------------------------------------------------------

    def lookup(self, term: str) -> TermEntry | None:
        return self._terms.get(term)

    @property
    def vocab_size(self) -> int:
        return len(self.entries)

    def doclen(self, docid: int) -> int:
        if self._dense_docids:
            return int(self.stats.doc_lens[docid])
        i = int(np.searchsorted(self.stats.doc_ids, docid))
        return int(self.stats.doc_lens[i])

    def doclens_for(self, docids: np.ndarray) -> np.ndarray:
        """Float64 document lengths for an array of docids."""
        if self._dense_docids:
            return self._doclens_f64[docids]
        idx = np.searchsorted(self.stats.doc_ids, docids)
        return self._doclens_f64[idx]

    # -- postings access -----------------------------------------------------

    def segment_offsets(self, term: str) -> list[int]:
        """Pool offsets of the term's segments, head to tail."""
        entry = self._terms.get(term)
        if entry is None:
            return []
        offsets = []
        off = entry.head
        while off != NO_SEGMENT:
            offsets.append(off)
            nxt, _ = self.pool.segment_extent(off, self.config)
            off = nxt
        return offsets

    def term_postings(self, term: str):
        """Decode a term's full postings: (docids, tfs, per_doc_positions).

        Positions are a list of per-document arrays, or None for
        non-positional indexes.
        """
        entry = self._terms.get(term)
        if entry is None:
            empty = np.empty(0, dtype=np.uint32)
            return empty, empty.copy(), ([] if self.config.positional else None)
        docid_parts, tf_parts, pos_parts = [], [], []
        off: int | None = entry.head
        while off is not None:
            off, docids, tfs, positions = self.pool.read_segment(off, self.config)
            docid_parts.append(docids)
            tf_parts.append(tfs)
            pos_parts.extend(positions)
        return (
            np.concatenate(docid_parts),
            np.concatenate(tf_parts),
            pos_parts if self.config.positional else None,
        )

    # -- queries (thin delegates; see the query module) ----------------------

    def svs(self, terms: Sequence[str]) -> np.ndarray:
        from . import query

        return query.svs_intersect(self, terms)

    def wand(self, terms: Sequence[str], k: int = 1000):
        from . import query

        return query.wand_topk(self, terms, k)

    # -- layout --------------------------------------------------------------

    def compact(self) -> "Index":
        """Rebuild with every term's segments fully adjacent (oracle layout)."""
        fresh_pool, moved = pool_mod.compact(self.pool, self.entries, self.config)
        fresh_entries = []
        for e in self.entries:
            clone = TermEntry(e.term, e.term_id)
            clone.df = e.df
            clone.head, clone.tail = moved[e.term_id]
            fresh_entries.append(clone)
        return Index(
            config=self.config,
            entries=fresh_entries,
            pool=fresh_pool,
            stats=self.stats,
            peaks=self.peaks,
            discarded_terms=self.discarded_terms,
            level_counts=self.level_counts,
        )

    # -- persistence -----------------------------------------------------------

    def save(self, path):
        pool_mod.persist_index(
            path,
            self.config,
            self.entries,
            self.stats.doc_ids,
            self.stats.doc_lens,
            self.stats.total_tokens,
            self.peaks,
            self.discarded_terms,
            self.level_counts,
            self.pool,
        )

    @classmethod
    def load(cls, path) -> "Index":
        parts = pool_mod.load_index_parts(path)
        entries = []
        for term_id, (term, df, head, tail) in enumerate(parts["terms"]):
            entry = TermEntry(term, term_id)
            entry.df = df
            entry.head = head
            entry.tail = tail
            entries.append(entry)
        table = parts["doc_table"]
        return cls(
            config=parts["config"],
            entries=entries,
            pool=parts["pool"],
            stats=CollectionStats(
                doc_count=len(table),
                total_tokens=parts["total_tokens"],
                doc_ids=np.ascontiguousarray(table[:, 0]),
                doc_lens=np.ascontiguousarray(table[:, 1]),
            ),
            peaks=parts["peaks"],
            discarded_terms=parts["discarded_terms"],
            level_counts=parts["level_counts"],
        )


def build_index(lines: Iterable[str], config: Config | None = None, **ingest_kwargs) -> Index:
    """Convenience: ingest a corpus stream and finalize in one call."""
    indexer = Indexer(config)
    indexer.ingest(lines, **ingest_kwargs)
    return indexer.finalize()

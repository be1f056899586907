"""Query evaluation over segment chains: SvS intersection and WAND top-k.

Both evaluators run over the finalized, sealed pool. Cursors decode one
segment at a time (docids always, tfs only when a document is actually
scored); there is no intra-block skip structure, so galloping decodes whole
segments and skips comparisons, not decode work.

Duplicate query terms are collapsed; terms absent from the dictionary empty
a conjunctive query and are dropped from a disjunctive one.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as kernels
from .dictionary import TermEntry
from .errors import CorruptSegmentError, InvariantViolationError
from .indexer import Index

NO_SEGMENT = kernels.NONE_OFFSET


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4


DEFAULT_BM25 = BM25Params()


@dataclass(frozen=True)
class ScoredHit:
    docid: int
    score: float


def bm25_idf(df: int, doc_count: int) -> float:
    return math.log((doc_count - df + 0.5) / (df + 0.5) + 1.0)


def bm25_score(tf: int, df: int, doclen: int, stats, params: BM25Params = DEFAULT_BM25) -> float:
    """Okapi BM25 with +1-smoothed idf; ``stats`` supplies N and avg_doclen."""
    return _score_one(bm25_idf(df, stats.doc_count), tf, doclen, stats.avg_doclen, params)


def _score_one(idf: float, tf: float, doclen: float, avg_doclen: float, p: BM25Params) -> float:
    # Keep the operation order identical to _score_vector: the two paths must
    # agree bitwise so heap contents match vectorized batches.
    norm = doclen / avg_doclen
    denom = tf + p.k1 * (1.0 - p.b + p.b * norm)
    return idf * (tf * (p.k1 + 1.0)) / denom


def _score_vector(idf: float, tfs: np.ndarray, doclens: np.ndarray,
                  avg_doclen: float, p: BM25Params) -> np.ndarray:
    tf = tfs.astype(np.float64)
    norm = doclens / avg_doclen
    denom = tf + p.k1 * (1.0 - p.b + p.b * norm)
    return idf * (tf * (p.k1 + 1.0)) / denom


class PostingsCursor:
    """Decoding iterator over one term's segment chain with skip support."""

    __slots__ = (
        "buf", "entry", "docids", "tf_block", "count", "idx", "cur",
        "next_off", "f_off", "tfs_ready", "exhausted", "bound", "idf",
    )

    def __init__(self, index: Index, entry: TermEntry):
        self.buf = index.pool.buffer
        self.entry = entry
        block = index.config.block_size
        self.docids = np.empty(block, dtype=np.uint32)
        self.tf_block = np.empty(block, dtype=np.uint32)
        self.exhausted = False
        self.bound = 0.0
        self.idf = 0.0
        self._load(entry.head)

    def _load(self, offset: int):
        if offset == NO_SEGMENT:
            self.exhausted = True
            self.count = 0
            self.idx = 0
            self.cur = -1
            return
        self.next_off, self.count, self.f_off = kernels.decode_segment_docids(
            self.buf, offset, self.docids
        )
        self.idx = 0
        self.cur = int(self.docids[0])
        self.tfs_ready = False

    def current_tf(self) -> int:
        if not self.tfs_ready:
            got, _ = kernels.decode_block_at(self.buf, self.f_off, self.tf_block)
            if got != self.count:
                raise CorruptSegmentError("tf block count disagrees with segment header")
            self.tfs_ready = True
        return int(self.tf_block[self.idx])

    def advance(self):
        """Step to the next posting."""
        idx = self.idx + 1
        if idx < self.count:
            self.idx = idx
            self.cur = int(self.docids[idx])
        else:
            self._load(self.next_off)

    def advance_to(self, target: int):
        """Position at the first docid >= target (galloping within segments)."""
        while not self.exhausted:
            j = kernels.gallop(self.docids, self.count, self.idx, target)
            if j < self.count:
                self.idx = j
                self.cur = int(self.docids[j])
                return
            self._load(self.next_off)


def gallop_advance(cursor: PostingsCursor, target: int) -> int | None:
    """Advance the cursor to the first docid >= target; None when exhausted."""
    cursor.advance_to(target)
    return None if cursor.exhausted else cursor.cur


def _dedupe(terms: Sequence[str]) -> list[str]:
    return list(dict.fromkeys(terms))


def _chain_docids(index: Index, entry: TermEntry) -> np.ndarray:
    out = np.empty(entry.df, dtype=np.uint32)
    n = kernels.decode_chain_docids(index.pool.buffer, entry.head, out)
    if n != entry.df:
        raise CorruptSegmentError(
            f"term {entry.term!r}: chain holds {n} postings, dictionary df is {entry.df}"
        )
    return out


def _chain_docids_tfs(index: Index, entry: TermEntry) -> tuple[np.ndarray, np.ndarray]:
    buf = index.pool.buffer
    docids = np.empty(entry.df, dtype=np.uint32)
    tfs = np.empty(entry.df, dtype=np.uint32)
    n = 0
    off = entry.head
    while off != NO_SEGMENT:
        off, count, f_off = kernels.decode_segment_docids(buf, off, docids[n:])
        got, _ = kernels.decode_block_at(buf, f_off, tfs[n:])
        if got != count:
            raise CorruptSegmentError("tf block count disagrees with segment header")
        n += count
    if n != entry.df:
        raise CorruptSegmentError(
            f"term {entry.term!r}: chain holds {n} postings, dictionary df is {entry.df}"
        )
    return docids, tfs


def svs_intersect(index: Index, terms: Sequence[str]) -> np.ndarray:
    """Exact conjunctive intersection, smallest list first, via galloping.

    Returns ascending docids; any unknown term empties the result.
    """
    terms = _dedupe(terms)
    if not terms:
        return np.empty(0, dtype=np.uint32)
    entries = []
    for term in terms:
        entry = index.lookup(term)
        if entry is None:
            return np.empty(0, dtype=np.uint32)
        entries.append(entry)
    entries.sort(key=lambda e: e.df)
    cands = _chain_docids(index, entries[0])
    n = len(cands)
    if len(entries) == 1:
        return cands
    buf = index.pool.buffer
    out = np.empty(n, dtype=np.uint32)
    scratch = np.empty(index.config.block_size, dtype=np.uint32)
    for entry in entries[1:]:
        n = kernels.intersect_chain(cands, n, buf, entry.head, out, scratch)
        if n == 0:
            return np.empty(0, dtype=np.uint32)
        cands, out = out, cands
    return cands[:n].copy()


def term_upper_bound(index: Index, entry: TermEntry, params: BM25Params = DEFAULT_BM25) -> float:
    """Max BM25 contribution of the term over its whole postings list (cached)."""
    cached = index._bounds.get(entry.term_id)
    if cached is not None:
        return cached
    docids, tfs = _chain_docids_tfs(index, entry)
    idf = bm25_idf(entry.df, index.stats.doc_count)
    scores = _score_vector(idf, tfs, index.doclens_for(docids), index.stats.avg_doclen, params)
    bound = float(scores.max())
    index._bounds[entry.term_id] = bound
    return bound


def prepare_upper_bounds(index: Index, params: BM25Params = DEFAULT_BM25) -> dict[int, float]:
    """Eagerly compute every retained term's score upper bound."""
    for entry in index.entries:
        term_upper_bound(index, entry, params)
    index.bounds_prepared = True
    return index._bounds


_WAND_KERNEL = getattr(kernels.impl, "wand_chains", None)


def wand_topk(index: Index, terms: Sequence[str], k: int,
              params: BM25Params = DEFAULT_BM25, use_kernel: bool = True) -> list[ScoredHit]:
    """Exact disjunctive top-k by BM25 using pivot-based skipping.

    Results are ordered by (score desc, docid asc). A document is skipped
    only when the summed upper bounds of every term that could still contain
    it fall strictly below the current k-th score, so no true top-k document
    is ever missed (ties included). Runs on the compiled kernel when
    available; the loop below is the pure-Python twin.
    """
    if k < 1:
        raise InvariantViolationError("k must be >= 1")
    terms = _dedupe(terms)
    entries = []
    for term in terms:
        entry = index.lookup(term)
        if entry is not None:  # disjunctive: unknown terms contribute nothing
            entries.append(entry)
    if not entries:
        return []

    if use_kernel and _WAND_KERNEL is not None and len(entries) <= 64:
        heads = np.array([e.head for e in entries], dtype=np.int64)
        bounds = np.array([term_upper_bound(index, e, params) for e in entries])
        idfs = np.array([bm25_idf(e.df, index.stats.doc_count) for e in entries])
        docids, scores = _WAND_KERNEL(
            index.pool.buffer, heads, bounds, idfs,
            index._dense_docids, index.stats.doc_ids, index._doclens_f64,
            index.stats.avg_doclen, k, params.k1, params.b,
            index.config.block_size,
        )
        return [ScoredHit(int(d), float(s)) for d, s in zip(docids, scores)]

    ordered: list[PostingsCursor] = []
    for entry in entries:
        cursor = PostingsCursor(index, entry)
        cursor.idf = bm25_idf(entry.df, index.stats.doc_count)
        cursor.bound = term_upper_bound(index, entry, params)
        ordered.append(cursor)

    avg = index.stats.avg_doclen
    k1 = params.k1
    b = params.b
    k1p1 = k1 + 1.0
    omb = 1.0 - b
    doclen_of = index.doclen
    push = heapq.heappush
    replace = heapq.heapreplace
    by_docid = lambda c: c.cur  # noqa: E731

    heap: list[tuple[float, int]] = []  # (score, -docid): root is the weakest hit
    alive = list(ordered)
    while alive:
        for c in alive:
            if c.exhausted:
                alive = [c for c in alive if not c.exhausted]
                break
        if not alive:
            break
        if len(alive) == 1:
            heap = _drain_last_cursor(index, alive[0], k, heap, params)
            break
        alive.sort(key=by_docid)
        full = len(heap) == k
        threshold = heap[0][0] if full else -math.inf
        acc = 0.0
        pivot = -1
        for i, c in enumerate(alive):
            acc += c.bound
            if acc >= threshold:
                pivot = i
                break
        if pivot < 0:
            break  # no remaining document can reach the heap
        pivot_doc = alive[pivot].cur
        if alive[0].cur == pivot_doc:
            norm = doclen_of(pivot_doc) / avg
            inner = omb + b * norm
            score = 0.0
            # Sum in original query-term order so float results are
            # reproducible regardless of cursor sort order (mirrors
            # _score_one exactly, operation for operation).
            for c in ordered:
                if c.cur == pivot_doc and not c.exhausted:
                    tf = c.current_tf()
                    score += c.idf * (tf * k1p1) / (tf + k1 * inner)
            hit = (score, -pivot_doc)
            if not full:
                push(heap, hit)
            elif hit > heap[0]:
                replace(heap, hit)
            for c in alive:
                if c.cur == pivot_doc:
                    c.advance()  # docids are strictly increasing per list
        else:
            for c in alive[:pivot]:
                if c.cur < pivot_doc:
                    c.advance_to(pivot_doc)

    hits = [ScoredHit(-neg, score) for score, neg in heap]
    hits.sort(key=lambda h: (-h.score, h.docid))
    return hits


def _drain_last_cursor(index: Index, cursor: PostingsCursor, k: int,
                       heap: list[tuple[float, int]],
                       params: BM25Params) -> list[tuple[float, int]]:
    """Score the sole remaining cursor's tail in one vectorized pass.

    Exactness: any tail document that lost contributions to an earlier skip
    had its full upper bound strictly below the then-current threshold, so
    its partial score here can never displace a heap entry; documents with
    no skipped contributions get their true full score.
    """
    remaining = cursor.entry.df
    docids = np.empty(remaining, dtype=np.uint32)
    tfs = np.empty(remaining, dtype=np.uint32)
    span = cursor.count - cursor.idx
    docids[:span] = cursor.docids[cursor.idx : cursor.count]
    cursor.current_tf()  # force the current segment's tf block
    tfs[:span] = cursor.tf_block[cursor.idx : cursor.count]
    n = span
    buf = cursor.buf
    off = cursor.next_off
    while off != NO_SEGMENT:
        off, count, f_off = kernels.decode_segment_docids(buf, off, docids[n:])
        got, _ = kernels.decode_block_at(buf, f_off, tfs[n:])
        if got != count:
            raise CorruptSegmentError("tf block count disagrees with segment header")
        n += count
    cursor.exhausted = True
    scores = _score_vector(
        cursor.idf, tfs[:n], index.doclens_for(docids[:n]), index.stats.avg_doclen, params
    )
    all_scores = np.concatenate([np.array([s for s, _ in heap]), scores])
    all_docids = np.concatenate(
        [np.array([-d for _, d in heap], dtype=np.int64), docids[:n].astype(np.int64)]
    )
    order = np.lexsort((all_docids, -all_scores))[:k]
    return [(float(all_scores[i]), -int(all_docids[i])) for i in order]

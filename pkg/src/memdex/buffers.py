"""Per-term uncompressed posting buffers with the doubling-with-cap policy.

Rare terms first accumulate in a small prebuffer sized to the df threshold;
once a term proves frequent enough it switches to real docid/tf arrays that
start at one block and double after each flush until the configured cap of
``2^m`` blocks. The cap decides how many segments of a term later land
adjacently in the pool, which is the whole point of the knob. The positions
buffer is never capped; it expands one block at a time.

Buffers are owned exclusively by the indexing loop (single writer).
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass

from .config import Config
from .errors import InvariantViolationError

PREBUFFER = 0
ACTIVE = 1


def grow_schedule(j: int, m: int, block_size: int = 128) -> int:
    """Docid/tf buffer capacity after ``j`` flushes: block_size * 2^min(j, m)."""
    if j < 0:
        raise InvariantViolationError("flush ordinal must be >= 0")
    return block_size << min(j, m)


@dataclass
class FlushRequest:
    """One buffer's worth of postings handed to the segment pool.

    ``count == capacity`` for every flush except the final drain, which may be
    partial. ``positions`` is a flat run of absolute positions, documents
    back to back, or None for non-positional indexes.
    """

    term_id: int
    docids: array
    tfs: array
    positions: array | None
    count: int
    capacity: int
    ordinal: int


class _TermBuffers:
    __slots__ = (
        "state", "pre", "docid_buf", "tf_buf", "fill",
        "cap", "pos_buf", "pos_alloc", "flushes", "last_docid",
    )

    def __init__(self):
        self.state = PREBUFFER
        self.pre: list | None = []
        self.docid_buf: array | None = None
        self.tf_buf: array | None = None
        self.fill = 0
        self.cap = 0
        self.pos_buf: array | None = None
        self.pos_alloc = 0
        self.flushes = 0
        self.last_docid = -1


class BufferMaps:
    """Dense term_id -> buffer mapping plus the allocation accounting."""

    def __init__(self, config: Config):
        self.config = config
        self._slots: list[_TermBuffers | None] = []
        self._cur = {"docid_bytes": 0, "tf_bytes": 0, "position_bytes": 0}
        self._peak = {"docid_bytes": 0, "tf_bytes": 0, "position_bytes": 0}
        # Filled by drain_all: retained-term histogram over capacity levels
        # 0..m and the count of sub-threshold terms that were dropped.
        self.level_counts: list[int] = [0] * (config.cap_exponent + 1)
        self.discarded_terms = 0

    # -- accounting helpers ------------------------------------------------

    def _bump(self, key: str, delta: int):
        cur = self._cur[key] + delta
        self._cur[key] = cur
        if cur > self._peak[key]:
            self._peak[key] = cur

    def peak_memory_report(self) -> dict[str, int]:
        """High-water mark of allocated buffer bytes per category."""
        return dict(self._peak)

    def current_bytes(self) -> int:
        return sum(self._cur.values())

    # -- posting ingestion ---------------------------------------------------

    def insert(self, term_id: int, docid: int, tf: int, positions) -> list[FlushRequest] | None:
        """Append one posting; returns flush requests when a buffer filled."""
        cfg = self.config
        slots = self._slots
        if term_id >= len(slots):
            if term_id == len(slots):
                slots.append(None)
            else:
                slots.extend([None] * (term_id + 1 - len(slots)))
        tb = slots[term_id]
        if tb is None:
            tb = _TermBuffers()
            slots[term_id] = tb
        if docid <= tb.last_docid:
            raise InvariantViolationError(
                f"docid {docid} not greater than previous {tb.last_docid} for term {term_id}"
            )
        if cfg.positional:
            if tf != len(positions) or tf < 1:
                raise InvariantViolationError("tf must equal the number of positions (>= 1)")
        elif tf < 1:
            raise InvariantViolationError("tf must be >= 1")
        tb.last_docid = docid

        if tb.state == PREBUFFER:
            pos = tuple(positions) if cfg.positional else None
            tb.pre.append((docid, tf, pos))
            self._bump("docid_bytes", 4)
            self._bump("tf_bytes", 4)
            if cfg.positional:
                self._bump("position_bytes", 4 * tf)
            if len(tb.pre) < cfg.df_threshold:
                return None
            return self._activate(term_id, tb)
        return self._append_active(term_id, tb, docid, tf, positions)

    def _activate(self, term_id: int, tb: _TermBuffers) -> list[FlushRequest] | None:
        cfg = self.config
        pre = tb.pre
        tb.state = ACTIVE
        tb.pre = None
        self._bump("docid_bytes", -4 * len(pre))
        self._bump("tf_bytes", -4 * len(pre))
        self._alloc_main(tb, cfg.block_size)
        flushes: list[FlushRequest] = []
        for docid, tf, pos in pre:
            if cfg.positional:
                self._bump("position_bytes", -4 * tf)
            out = self._append_active(term_id, tb, docid, tf, pos)
            if out:
                flushes.extend(out)
        return flushes or None

    def _alloc_main(self, tb: _TermBuffers, cap: int):
        tb.docid_buf = array("I", bytes(4 * cap))
        tb.tf_buf = array("I", bytes(4 * cap))
        tb.fill = 0
        tb.cap = cap
        if self.config.positional:
            tb.pos_buf = array("I")
            tb.pos_alloc = 0
        self._bump("docid_bytes", 4 * cap)
        self._bump("tf_bytes", 4 * cap)

    def _append_active(self, term_id, tb, docid, tf, positions) -> list[FlushRequest] | None:
        fill = tb.fill
        tb.docid_buf[fill] = docid
        tb.tf_buf[fill] = tf
        tb.fill = fill + 1
        if tb.pos_buf is not None:
            pos_buf = tb.pos_buf
            pos_buf.extend(positions)
            need = len(pos_buf)
            if need > tb.pos_alloc:
                b = self.config.block_size
                grown = -(-(need - tb.pos_alloc) // b) * b
                tb.pos_alloc += grown
                self._bump("position_bytes", 4 * grown)
        if tb.fill == tb.cap:
            return [self._flush(term_id, tb)]
        return None

    def _flush(self, term_id: int, tb: _TermBuffers) -> FlushRequest:
        cfg = self.config
        req = FlushRequest(
            term_id=term_id,
            docids=tb.docid_buf,
            tfs=tb.tf_buf,
            positions=tb.pos_buf,
            count=tb.fill,
            capacity=tb.cap,
            ordinal=tb.flushes,
        )
        tb.flushes += 1
        old_cap = tb.cap
        self._bump("docid_bytes", -4 * old_cap)
        self._bump("tf_bytes", -4 * old_cap)
        if tb.pos_buf is not None:
            self._bump("position_bytes", -4 * tb.pos_alloc)
        self._alloc_main(tb, grow_schedule(tb.flushes, cfg.cap_exponent, cfg.block_size))
        return req

    def drain_all(self) -> list[FlushRequest]:
        """Flush every live buffer at finalize.

        Active terms with buffered postings emit one final (possibly partial)
        request; prebuffered terms never met the df threshold and are dropped.
        All buffer memory is released.
        """
        cfg = self.config
        out: list[FlushRequest] = []
        for term_id, tb in enumerate(self._slots):
            if tb is None:
                continue
            if tb.state == PREBUFFER:
                self.discarded_terms += 1
                self._bump("docid_bytes", -4 * len(tb.pre))
                self._bump("tf_bytes", -4 * len(tb.pre))
                if cfg.positional:
                    self._bump("position_bytes", -4 * sum(tf for _, tf, _ in tb.pre))
                self._slots[term_id] = None
                continue
            self.level_counts[min(tb.flushes, cfg.cap_exponent)] += 1
            if tb.fill > 0:
                out.append(
                    FlushRequest(
                        term_id=term_id,
                        docids=tb.docid_buf[: tb.fill],
                        tfs=tb.tf_buf[: tb.fill],
                        positions=tb.pos_buf if cfg.positional else None,
                        count=tb.fill,
                        capacity=tb.cap,
                        ordinal=tb.flushes,
                    )
                )
            self._bump("docid_bytes", -4 * tb.cap)
            self._bump("tf_bytes", -4 * tb.cap)
            if cfg.positional:
                self._bump("position_bytes", -4 * tb.pos_alloc)
            self._slots[term_id] = None
        return out

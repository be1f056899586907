"""Append-only byte arena holding every compressed inverted-list segment.

The pool grows in large fixed-size allocation blocks; segments are packed
end to end (4-byte aligned, never straddling a block) and chained per term
through an 8-byte next-pointer at the start of each segment, which is the
only byte range ever rewritten after append. Offsets are global 8-byte byte
positions; all-ones marks end of chain.

After indexing the pool is sealed into one immutable contiguous buffer
(offsets unchanged) so the decode kernels can run over a single memoryview.
"""

from __future__ import annotations

import struct
from math import ceil

import numpy as np

from . import _kernels as kernels
from . import codec
from .config import Config
from .buffers import FlushRequest
from .errors import CapacityError, CorruptSegmentError, IndexFormatError, StateError

NO_SEGMENT = kernels.NONE_OFFSET

_MAGIC = b"MEMDEX1\x00"
_VERSION = 1

MIN_POOL_BLOCK = 1024 * 1024


class SegmentPool:
    """Arena of compressed segments with per-term next-pointer chains."""

    def __init__(self, block_bytes: int = 256 * 1024 * 1024, memory_budget: int | None = None):
        if block_bytes < MIN_POOL_BLOCK:
            raise CapacityError(f"pool blocks must be at least {MIN_POOL_BLOCK} bytes")
        self.block_bytes = block_bytes
        self.memory_budget = memory_budget
        self.blocks: list[bytearray] | None = []
        self.append_offset = 0
        self.segment_bytes = 0
        self.pad_bytes = 0
        self.skip_bytes = 0
        self._sealed: bytes | None = None

    # -- write path ---------------------------------------------------------

    def _place(self, length: int) -> int:
        """Reserve ``length`` bytes for one segment; returns its offset."""
        bb = self.block_bytes
        if length > bb:
            raise CapacityError(f"segment of {length} bytes exceeds pool block size {bb}")
        off = self.append_offset
        pad = (-off) % 4
        off += pad
        intra = off % bb
        skip = 0
        if intra + length > bb:
            skip = bb - intra
            off += skip
        end = off + length
        if self.memory_budget is not None and end > self.memory_budget:
            raise CapacityError(
                f"pool byte budget {self.memory_budget} exhausted at offset {end}"
            )
        blocks = self.blocks
        while off // bb >= len(blocks):
            blocks.append(bytearray(bb))
        self.pad_bytes += pad
        self.skip_bytes += skip
        self.segment_bytes += length
        self.append_offset = end
        return off

    def _write(self, offset: int, data: bytes):
        block = self.blocks[offset // self.block_bytes]
        i = offset % self.block_bytes
        block[i : i + len(data)] = data

    def patch_next(self, seg_offset: int, next_offset: int):
        """Rewrite a segment's next-pointer (the only mutable slot)."""
        if self._sealed is not None:
            raise StateError("cannot patch a sealed pool")
        self._write(seg_offset, struct.pack("<Q", next_offset))

    def append_segments(
        self, flush: FlushRequest, tail: int, config: Config
    ) -> tuple[int, int, list[int]]:
        """Compress one flush into block-sized segments written back to back.

        The flush is split into ceil(count/B) segments (the last may be
        partial on the final drain), chained internally, and the previous
        tail's next-pointer is patched to the first new segment. Returns
        (first_offset, last_offset, all offsets).
        """
        if self._sealed is not None:
            raise StateError("cannot append to a sealed pool")
        B = config.block_size
        count = flush.count
        nseg = ceil(count / B)
        tf_np = np.frombuffer(flush.tfs, dtype=np.uint32)[:count]
        if config.positional:
            pos_np = np.frombuffer(flush.positions, dtype=np.uint32)
            pstart = np.zeros(count + 1, dtype=np.int64)
            np.cumsum(tf_np, out=pstart[1:])
        bodies: list[bytes] = []
        for i in range(nseg):
            a = i * B
            b = min(count, a + B)
            n = b - a
            d_payload = kernels.encode_docid_block(flush.docids, a, n)
            f_payload = kernels.encode_block(flush.tfs, a, n)
            parts = [
                struct.pack("<II", n, len(d_payload)),
                d_payload,
                struct.pack("<I", len(f_payload)),
                f_payload,
            ]
            if config.positional:
                gaps = codec.position_gaps_flat(
                    pos_np[int(pstart[a]) : int(pstart[b])], tf_np[a:b]
                )
                n_blocks = ceil(len(gaps) / B)
                parts.append(struct.pack("<I", n_blocks))
                for j in range(n_blocks):
                    chunk = gaps[j * B : (j + 1) * B]
                    p_payload = kernels.encode_block(chunk, 0, len(chunk))
                    parts.append(struct.pack("<I", len(p_payload)))
                    parts.append(p_payload)
            bodies.append(b"".join(parts))

        offsets = [self._place(8 + len(body)) for body in bodies]
        for i, (off, body) in enumerate(zip(offsets, bodies)):
            nxt = offsets[i + 1] if i + 1 < nseg else NO_SEGMENT
            self._write(off, struct.pack("<Q", nxt))
            self._write(off + 8, body)
        if tail != NO_SEGMENT:
            self.patch_next(tail, offsets[0])
        return offsets[0], offsets[-1], offsets

    # -- read path ------------------------------------------------------------

    def _locate(self, offset: int):
        """Map a global offset to (buffer, local offset)."""
        if self._sealed is not None:
            return self._sealed, offset
        bb = self.block_bytes
        idx = offset // bb
        if offset < 0 or idx >= len(self.blocks):
            raise CorruptSegmentError(f"offset {offset} outside the pool")
        return self.blocks[idx], offset % bb

    def read_segment(self, offset: int, config: Config):
        """Fully decode the segment at ``offset``.

        Returns (next_offset or None, docids, tfs, per_doc_positions); the
        position list is empty for non-positional indexes.
        """
        buf, local = self._locate(offset)
        base = offset - local
        out = np.empty(config.block_size, dtype=np.uint32)
        nxt, count, f_off = kernels.decode_segment_docids(buf, local, out)
        docids = out[:count].copy()
        tfs = np.empty(config.block_size, dtype=np.uint32)
        tf_count, p_off = kernels.decode_block_at(buf, f_off, tfs)
        if tf_count != count:
            raise CorruptSegmentError("tf block count disagrees with segment header")
        tfs = tfs[:count].copy()
        positions: list[np.ndarray] = []
        if config.positional:
            view = memoryview(buf)
            (n_blocks,) = struct.unpack_from("<I", view, p_off)
            p_off += 4
            flat_parts = []
            scratch = np.empty(config.block_size, dtype=np.uint32)
            for _ in range(n_blocks):
                got, p_off = kernels.decode_block_at(buf, p_off, scratch)
                flat_parts.append(scratch[:got].copy())
            flat = np.concatenate(flat_parts) if flat_parts else np.empty(0, dtype=np.uint32)
            positions = codec.position_gap_decode(flat, tfs)
        next_offset = None if nxt == NO_SEGMENT else nxt
        if next_offset is not None and next_offset <= offset:
            raise CorruptSegmentError("segment chain offsets must increase")
        return next_offset, docids, tfs, positions

    def segment_extent(self, offset: int, config: Config) -> tuple[int, int]:
        """Parse (next_offset, byte length) without decoding any block."""
        buf, local = self._locate(offset)
        view = memoryview(buf)
        try:
            nxt, _count, d_len = struct.unpack_from("<QII", view, local)
            p = local + 16 + d_len
            (f_len,) = struct.unpack_from("<I", view, p)
            p += 4 + f_len
            if config.positional:
                (n_blocks,) = struct.unpack_from("<I", view, p)
                p += 4
                for _ in range(n_blocks):
                    (p_len,) = struct.unpack_from("<I", view, p)
                    p += 4 + p_len
        except struct.error as exc:
            raise CorruptSegmentError("segment extent runs past the pool") from exc
        if p - local > len(view) - local:
            raise CorruptSegmentError("segment extent runs past the pool")
        return nxt, p - local

    # -- lifecycle ---------------------------------------------------------

    @property
    def sealed(self) -> bool:
        return self._sealed is not None

    def seal(self):
        """Freeze the pool into one contiguous immutable buffer."""
        if self._sealed is not None:
            return
        joined = b"".join(bytes(b) for b in self.blocks)
        self._sealed = joined[: self.append_offset]
        self.blocks = None

    @property
    def buffer(self) -> bytes:
        if self._sealed is None:
            raise StateError("pool is not sealed yet")
        return self._sealed

    @classmethod
    def from_bytes(cls, raw: bytes, block_bytes: int = 256 * 1024 * 1024) -> "SegmentPool":
        pool = cls(block_bytes=block_bytes)
        pool._sealed = raw
        pool.append_offset = len(raw)
        pool.segment_bytes = len(raw)
        pool.blocks = None
        return pool


def compact(pool: SegmentPool, entries, config: Config) -> tuple[SegmentPool, dict[int, tuple[int, int]]]:
    """Copy every term's segments adjacently into a fresh pool, in id order.

    Returns the new pool plus a term_id -> (head, tail) relocation map.
    Segment bytes are copied verbatim except for rewritten next-pointers, so
    decoded postings are identical before and after.
    """
    budget = None
    if config.memory_budget is not None:
        budget = config.memory_budget - pool.append_offset
        if budget <= 0:
            raise CapacityError("memory budget cannot hold a transient pool copy")
    fresh = SegmentPool(block_bytes=pool.block_bytes, memory_budget=budget)
    moved: dict[int, tuple[int, int]] = {}
    for entry in entries:
        if entry.head == NO_SEGMENT:
            continue
        spans: list[tuple[int, int]] = []
        off = entry.head
        while off != NO_SEGMENT:
            nxt, length = pool.segment_extent(off, config)
            spans.append((off, length))
            off = nxt
        placed = [fresh._place(length) for _, length in spans]
        for i, ((src, length), dst) in enumerate(zip(spans, placed)):
            buf, local = pool._locate(src)
            body = bytes(memoryview(buf)[local + 8 : local + length])
            nxt = placed[i + 1] if i + 1 < len(placed) else NO_SEGMENT
            fresh._write(dst, struct.pack("<Q", nxt))
            fresh._write(dst + 8, body)
        moved[entry.term_id] = (placed[0], placed[-1])
    fresh.seal()
    return fresh, moved


# -- persistence -------------------------------------------------------------


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.raw):
            raise IndexFormatError("index file truncated")
        out = self.raw[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def persist_index(
    path,
    config: Config,
    retained_entries,
    doc_ids,
    doc_lens,
    total_tokens: int,
    peaks: dict[str, int],
    discarded_terms: int,
    level_counts,
    pool: SegmentPool,
):
    """Write the finalized index to ``path`` (format documented in README)."""
    if not pool.sealed:
        raise StateError("pool must be sealed before persisting")
    parts = [
        _MAGIC,
        struct.pack("<II", _VERSION, 0),
        struct.pack(
            "<IIIB3x", config.block_size, config.cap_exponent, config.df_threshold,
            1 if config.positional else 0,
        ),
        struct.pack("<QQ", len(doc_ids), total_tokens),
        np.column_stack([doc_ids, doc_lens]).astype("<u4").tobytes() if len(doc_ids) else b"",
        struct.pack(
            "<QQQQQQ",
            peaks["docid_bytes"], peaks["tf_bytes"], peaks["position_bytes"],
            discarded_terms, pool.pad_bytes, pool.skip_bytes,
        ),
        struct.pack("<I", len(level_counts)),
        struct.pack(f"<{len(level_counts)}Q", *level_counts),
        struct.pack("<Q", len(retained_entries)),
    ]
    for entry in retained_entries:
        raw = entry.term.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InvariantViolationError(
                f"term of {len(raw)} bytes exceeds the 2-byte length field"
            )
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<IQQ", entry.df, entry.head, entry.tail))
    parts.append(struct.pack("<Q", len(pool.buffer)))
    parts.append(pool.buffer)
    data = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(data)


def load_index_parts(path):
    """Read a persisted index back into its raw constituents."""
    with open(path, "rb") as fh:
        raw = fh.read()
    r = _Reader(raw)
    if r.take(8) != _MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    version, _ = r.unpack("<II")
    if version != _VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    block_size, cap_exponent, df_threshold, positional = r.unpack("<IIIB3x")
    config = Config(
        block_size=block_size,
        cap_exponent=cap_exponent,
        df_threshold=df_threshold,
        positional=bool(positional),
    )
    doc_count, total_tokens = r.unpack("<QQ")
    table = np.frombuffer(r.take(8 * doc_count), dtype="<u4").reshape(doc_count, 2)
    peaks_tuple = r.unpack("<QQQQQQ")
    peaks = {
        "docid_bytes": peaks_tuple[0],
        "tf_bytes": peaks_tuple[1],
        "position_bytes": peaks_tuple[2],
    }
    discarded_terms, pad_bytes, skip_bytes = peaks_tuple[3], peaks_tuple[4], peaks_tuple[5]
    (n_levels,) = r.unpack("<I")
    level_counts = list(r.unpack(f"<{n_levels}Q"))
    (n_terms,) = r.unpack("<Q")
    terms = []
    for _ in range(n_terms):
        (term_len,) = r.unpack("<H")
        term = r.take(term_len).decode("utf-8")
        df, head, tail = r.unpack("<IQQ")
        terms.append((term, df, head, tail))
    (pool_len,) = r.unpack("<Q")
    pool_bytes = r.take(pool_len)
    if r.off != len(raw):
        raise IndexFormatError("trailing bytes after the pool section")
    pool = SegmentPool.from_bytes(pool_bytes)
    pool.pad_bytes = pad_bytes
    pool.skip_bytes = skip_bytes
    pool.segment_bytes = pool_len - pad_bytes - skip_bytes
    return {
        "config": config,
        "doc_table": table,
        "total_tokens": total_tokens,
        "peaks": peaks,
        "discarded_terms": discarded_terms,
        "level_counts": level_counts,
        "terms": terms,
        "pool": pool,
    }

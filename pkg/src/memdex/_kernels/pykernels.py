"""Pure-Python (numpy) implementations of the hot kernels.

This module is the portable twin of the compiled extension ``_native``.
Both expose the same functions and must produce byte-identical encodings;
``tests/test_kernels.py`` cross-checks them. The compiled module is preferred
at import time (see ``__init__``); this one keeps the package usable on
interpreters without a C toolchain, at a large speed penalty.

Encoded block payload layout (little-endian, stable on-wire format):

    byte 0      bit width w in [0, 32]
    byte 1      exception count
    bytes 2-3   element count n (u16)
    next        ceil(n*w/32) packed 32-bit words; value i occupies bits
                [i*w, (i+1)*w) of the little-endian bitstream (low w bits only)
    next        exceptions, 5 bytes each: u8 element position, u32 original value

Width selection: the smallest w at which at least 90% of the values fit is
the primary candidate; the full width of the maximum value is the secondary.
Whichever encodes smaller wins (ties keep the 90% candidate). Values >= 2^w
keep their low w bits in the packed area and are patched from the exception
list on decode.

Segment layout in the pool (little-endian):

    u64 next-segment offset (all-ones terminates the chain)
    u32 posting count
    u32 |D|, D   docid gaps, first docid absolute
    u32 |F|, F   raw term frequencies
    [positional only] u32 m_p, then m_p repetitions of u32 |P_i|, P_i
"""

from __future__ import annotations

import numpy as np

from ..errors import CorruptSegmentError, InvariantViolationError

BACKEND = "python"

NONE_OFFSET = 0xFFFFFFFFFFFFFFFF

_U32_MAX = 0xFFFFFFFF


def _as_u32(obj) -> np.ndarray:
    if isinstance(obj, np.ndarray):
        if obj.dtype != np.uint32:
            raise TypeError("expected a uint32 array")
        return obj
    return np.frombuffer(obj, dtype=np.uint32)


def _as_u8(buf) -> np.ndarray:
    if isinstance(buf, np.ndarray) and buf.dtype == np.uint8:
        return buf
    return np.frombuffer(buf, dtype=np.uint8)


def bitwise_hash(data: bytes) -> int:
    """Shift-add-xor hash over raw bytes, truncated to 32 bits."""
    h = 0
    for c in data:
        h = (((h << 5) + h) ^ c) & _U32_MAX
    return h


def _fitting_counts(values: np.ndarray) -> np.ndarray:
    """fitting[w] = number of values strictly below 2**w, for w in 0..32."""
    ordered = np.sort(values.astype(np.int64))
    bounds = np.array([1 << w for w in range(33)], dtype=np.int64)
    return np.searchsorted(ordered, bounds, side="left")


def _encoded_size(n: int, w: int, exceptions: int) -> int:
    return 4 + 4 * ((n * w + 31) // 32) + 5 * exceptions


def _choose_width(values: np.ndarray) -> tuple[int, int]:
    """Return (width, exception_count) for a block of uint32 values."""
    n = len(values)
    fitting = _fitting_counts(values)
    need = (9 * n + 9) // 10  # ceil(0.9 * n)
    w90 = int(np.argmax(fitting >= need))
    wfull = int(values.max()).bit_length()
    if _encoded_size(n, wfull, 0) < _encoded_size(n, w90, int(n - fitting[w90])):
        return wfull, 0
    return w90, int(n - fitting[w90])


def _pack_bits(low: np.ndarray, w: int) -> bytes:
    n = len(low)
    if w == 0:
        return b""
    if w == 32:
        return low.astype("<u4").tobytes()
    shifts = np.arange(w, dtype=np.uint32)
    bits = ((low[:, None] >> shifts) & 1).astype(np.uint8)
    packed = np.packbits(bits.ravel(), bitorder="little").tobytes()
    word_bytes = 4 * ((n * w + 31) // 32)
    return packed + b"\x00" * (word_bytes - len(packed))


def encode_block(values, start: int, count: int) -> bytes:
    """Encode ``count`` uint32 values starting at ``start`` into a payload."""
    if count < 1:
        raise InvariantViolationError("cannot encode an empty block")
    if count > 256:
        raise InvariantViolationError("block count exceeds the 256-element format limit")
    vals = _as_u32(values)[start : start + count]
    w, n_exc = _choose_width(vals)
    mask = np.uint32((1 << w) - 1) if w < 32 else np.uint32(_U32_MAX)
    header = bytes((w, n_exc)) + int(count).to_bytes(2, "little")
    packed = _pack_bits(vals & mask, w)
    if n_exc:
        positions = np.nonzero(vals.astype(np.int64) >= (1 << w))[0]
        exc = b"".join(
            bytes((int(p),)) + int(vals[p]).to_bytes(4, "little") for p in positions
        )
    else:
        exc = b""
    return header + packed + exc


def encode_docid_block(docids, start: int, count: int) -> bytes:
    """Gap-transform strictly increasing docids (first absolute) and encode."""
    d = _as_u32(docids)[start : start + count].astype(np.int64)
    if count > 1:
        gaps = np.empty(count, dtype=np.int64)
        gaps[0] = d[0]
        np.subtract(d[1:], d[:-1], out=gaps[1:])
        if gaps[1:].min() < 1:
            raise InvariantViolationError("docids must be strictly increasing")
    else:
        gaps = d
    return encode_block(gaps.astype(np.uint32), 0, count)


def decode_block(buf, offset: int, length: int, out) -> int:
    """Decode one payload at ``buf[offset:offset+length]`` into ``out``.

    Returns the element count. Raises CorruptSegmentError when the header or
    the byte length is inconsistent.
    """
    b = _as_u8(buf)
    o = _as_u32(out)
    if length < 4 or offset + length > len(b):
        raise CorruptSegmentError("block payload truncated")
    w = int(b[offset])
    n_exc = int(b[offset + 1])
    count = int(b[offset + 2]) | (int(b[offset + 3]) << 8)
    if w > 32:
        raise CorruptSegmentError(f"bit width {w} out of range")
    if count == 0:
        raise CorruptSegmentError("block element count is zero")
    if count > len(o):
        raise CorruptSegmentError(f"block count {count} exceeds output capacity {len(o)}")
    word_bytes = 4 * ((count * w + 31) // 32)
    if length != 4 + word_bytes + 5 * n_exc:
        raise CorruptSegmentError("block byte length inconsistent with header")
    body = offset + 4
    if w == 0:
        o[:count] = 0
    elif w == 32:
        o[:count] = b[body : body + word_bytes].view("<u4")[:count]
    else:
        bits = np.unpackbits(b[body : body + word_bytes], bitorder="little")
        shifts = np.arange(w, dtype=np.uint32)
        vals = (bits[: count * w].reshape(count, w).astype(np.uint32) << shifts).sum(
            axis=1, dtype=np.uint32
        )
        o[:count] = vals
    exc = body + word_bytes
    for i in range(n_exc):
        p = int(b[exc + 5 * i])
        if p >= count:
            raise CorruptSegmentError("exception position out of range")
        o[p] = int.from_bytes(b[exc + 5 * i + 1 : exc + 5 * i + 5].tobytes(), "little")
    return count


def decode_block_at(buf, offset: int, out) -> tuple[int, int]:
    """Decode a length-prefixed block; return (count, offset past the block)."""
    b = _as_u8(buf)
    if offset + 4 > len(b):
        raise CorruptSegmentError("block length prefix truncated")
    length = int(b[offset : offset + 4].view("<u4")[0])
    count = decode_block(b, offset + 4, length, out)
    return count, offset + 4 + length


def decode_docid_block_at(buf, offset: int, out) -> tuple[int, int]:
    """Decode a docid gap block, validate gaps, and prefix-sum in place."""
    count, end = decode_block_at(buf, offset, out)
    o = _as_u32(out)
    gaps = o[:count].astype(np.uint64)
    if count > 1 and gaps[1:].min() < 1:
        raise CorruptSegmentError("zero docid gap inside a segment")
    docids = np.cumsum(gaps)
    if docids[-1] > _U32_MAX:
        raise CorruptSegmentError("docid overflow while decoding a segment")
    o[:count] = docids.astype(np.uint32)
    return count, end


def read_segment_header(buf, offset: int) -> tuple[int, int]:
    """Return (next_offset, posting_count) for the segment at ``offset``."""
    b = _as_u8(buf)
    if offset + 12 > len(b):
        raise CorruptSegmentError("segment header truncated")
    nxt = int(b[offset : offset + 8].view("<u8")[0])
    count = int(b[offset + 8 : offset + 12].view("<u4")[0])
    return nxt, count


def decode_segment_docids(buf, seg_offset: int, out) -> tuple[int, int, int]:
    """Decode the docid block of one segment.

    Returns (next_offset, posting_count, offset of the tf section).
    """
    nxt, count = read_segment_header(buf, seg_offset)
    got, f_offset = decode_docid_block_at(buf, seg_offset + 12, out)
    if got != count:
        raise CorruptSegmentError("segment posting count disagrees with docid block")
    return nxt, count, f_offset


def gallop(arr, n: int, start: int, target: int) -> int:
    """First index in [start, n) whose value is >= target, else n."""
    a = _as_u32(arr)
    return int(np.searchsorted(a[start:n], np.uint32(target), side="left")) + start


def intersect_chain(cands, ncands: int, buf, head_offset: int, out, scratch) -> int:
    """Intersect ascending candidate docids against a term's segment chain.

    Decodes segments one at a time into ``scratch`` and keeps candidates that
    appear; survivors are written to ``out``. Returns the survivor count.
    """
    c = _as_u32(cands)[:ncands]
    o = _as_u32(out)
    s = _as_u32(scratch)
    i = 0
    nout = 0
    off = head_offset
    while off != NONE_OFFSET and i < ncands:
        nxt, cnt, _ = decode_segment_docids(buf, off, s)
        seg = s[:cnt]
        if seg[cnt - 1] >= c[i]:
            # Vectorized membership test for the candidates this segment spans.
            j = int(np.searchsorted(c, seg[cnt - 1], side="right"))
            chunk = c[i:j]
            pos = np.searchsorted(seg, chunk)
            hits = chunk[seg[pos] == chunk]
            o[nout : nout + len(hits)] = hits
            nout += len(hits)
            i = j
        off = nxt
    return nout


def decode_chain_docids(buf, head_offset: int, out) -> int:
    """Decode every docid in a segment chain into ``out``; return the count."""
    o = _as_u32(out)
    n = 0
    off = head_offset
    while off != NONE_OFFSET:
        nxt, cnt, _ = decode_segment_docids(buf, off, o[n:])
        n += cnt
        off = nxt
    return n

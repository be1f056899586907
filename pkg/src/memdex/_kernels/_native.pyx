# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: block codec, segment decode, galloping intersection.

Mirrors ``pykernels`` exactly (same signatures, same bytes out); see that
module's docstring for the wire format. Keep the two in sync.
"""

from libc.stdint cimport int64_t, uint8_t, uint32_t, uint64_t

import numpy as np

from ..errors import CorruptSegmentError, InvariantViolationError

BACKEND = "native"

NONE_OFFSET = 0xFFFFFFFFFFFFFFFF

cdef uint64_t _NONE = 0xFFFFFFFFFFFFFFFFULL
cdef uint32_t _U32_MAX = 0xFFFFFFFFUL

# Worst-case payload: 4-byte header + 256 values at 32 bits + 26 exceptions.
DEF _MAX_PAYLOAD = 4 + 1024 + 5 * 26
DEF _MAX_COUNT = 256


cdef inline uint32_t _read_u32(const uint8_t* b) noexcept nogil:
    return (<uint32_t>b[0]) | (<uint32_t>b[1] << 8) | (<uint32_t>b[2] << 16) | (<uint32_t>b[3] << 24)


cdef inline uint64_t _read_u64(const uint8_t* b) noexcept nogil:
    return <uint64_t>_read_u32(b) | (<uint64_t>_read_u32(b + 4) << 32)


cdef inline void _write_u32(uint8_t* b, uint32_t v) noexcept nogil:
    b[0] = v & 0xFF
    b[1] = (v >> 8) & 0xFF
    b[2] = (v >> 16) & 0xFF
    b[3] = (v >> 24) & 0xFF


cdef inline int _bit_length(uint32_t v) noexcept nogil:
    cdef int n = 0
    while v:
        n += 1
        v >>= 1
    return n


def bitwise_hash(data: bytes) -> int:
    """Shift-add-xor hash over raw bytes, truncated to 32 bits."""
    cdef const uint8_t[::1] b = data
    cdef uint32_t h = 0
    cdef Py_ssize_t i
    for i in range(b.shape[0]):
        h = ((h << 5) + h) ^ b[i]
    return h


cdef inline Py_ssize_t _encoded_size(Py_ssize_t n, int w, Py_ssize_t exc) noexcept nogil:
    return 4 + 4 * ((n * w + 31) // 32) + 5 * exc


cdef Py_ssize_t _encode_into(const uint32_t* vals, Py_ssize_t count, uint8_t* dst) except -1:
    """Encode ``count`` values into ``dst``; returns the payload length."""
    cdef Py_ssize_t fitting[33]
    cdef Py_ssize_t i, n_exc, size
    cdef int w, w90, wfull, bl
    cdef uint64_t window
    cdef int have
    cdef uint32_t mask, v
    cdef uint8_t* p

    for w in range(33):
        fitting[w] = 0
    wfull = 0
    for i in range(count):
        bl = _bit_length(vals[i])
        fitting[bl] += 1
        if bl > wfull:
            wfull = bl
    for w in range(1, 33):
        fitting[w] += fitting[w - 1]

    cdef Py_ssize_t need = (9 * count + 9) // 10
    w90 = 0
    while fitting[w90] < need:
        w90 += 1
    n_exc = count - fitting[w90]
    w = w90
    if _encoded_size(count, wfull, 0) < _encoded_size(count, w90, n_exc):
        w = wfull
        n_exc = 0

    dst[0] = <uint8_t>w
    dst[1] = <uint8_t>n_exc
    dst[2] = count & 0xFF
    dst[3] = (count >> 8) & 0xFF

    mask = _U32_MAX if w == 32 else ((<uint32_t>1 << w) - 1)
    p = dst + 4
    window = 0
    have = 0
    if w > 0:
        for i in range(count):
            window |= (<uint64_t>(vals[i] & mask)) << have
            have += w
            while have >= 32:
                _write_u32(p, <uint32_t>window)
                p += 4
                window >>= 32
                have -= 32
        if have > 0:
            _write_u32(p, <uint32_t>window)
            p += 4
    if n_exc > 0:
        for i in range(count):
            if w < 32 and vals[i] >= (<uint32_t>1 << w):
                p[0] = <uint8_t>i
                _write_u32(p + 1, vals[i])
                p += 5
    return p - dst


def encode_block(values, start, count) -> bytes:
    """Encode ``count`` uint32 values starting at ``start`` into a payload."""
    cdef const uint32_t[::1] vals = values
    cdef Py_ssize_t s = start, n = count
    cdef uint8_t scratch[_MAX_PAYLOAD]
    if n < 1:
        raise InvariantViolationError("cannot encode an empty block")
    if n > _MAX_COUNT:
        raise InvariantViolationError("block count exceeds the 256-element format limit")
    if s + n > vals.shape[0]:
        raise InvariantViolationError("block range exceeds the input buffer")
    cdef Py_ssize_t size = _encode_into(&vals[s], n, scratch)
    return bytes(scratch[:size])


def encode_docid_block(docids, start, count) -> bytes:
    """Gap-transform strictly increasing docids (first absolute) and encode."""
    cdef const uint32_t[::1] d = docids
    cdef Py_ssize_t s = start, n = count
    cdef uint32_t gaps[_MAX_COUNT]
    cdef uint8_t scratch[_MAX_PAYLOAD]
    cdef Py_ssize_t i
    if n < 1:
        raise InvariantViolationError("cannot encode an empty block")
    if n > _MAX_COUNT:
        raise InvariantViolationError("block count exceeds the 256-element format limit")
    if s + n > d.shape[0]:
        raise InvariantViolationError("block range exceeds the input buffer")
    gaps[0] = d[s]
    for i in range(1, n):
        if d[s + i] <= d[s + i - 1]:
            raise InvariantViolationError("docids must be strictly increasing")
        gaps[i] = d[s + i] - d[s + i - 1]
    cdef Py_ssize_t size = _encode_into(gaps, n, scratch)
    return bytes(scratch[:size])


cdef Py_ssize_t _decode_block(const uint8_t[::1] buf, Py_ssize_t offset, Py_ssize_t length,
                              uint32_t[::1] out, Py_ssize_t out_base) except -1:
    cdef Py_ssize_t count, word_bytes, i, exc_off
    cdef int w, n_exc, have
    cdef uint64_t window
    cdef uint32_t mask
    cdef const uint8_t* b
    cdef const uint8_t* words

    if length < 4 or offset < 0 or offset + length > buf.shape[0]:
        raise CorruptSegmentError("block payload truncated")
    b = &buf[offset]
    w = b[0]
    n_exc = b[1]
    count = <Py_ssize_t>b[2] | (<Py_ssize_t>b[3] << 8)
    if w > 32:
        raise CorruptSegmentError(f"bit width {w} out of range")
    if count == 0:
        raise CorruptSegmentError("block element count is zero")
    if out_base + count > out.shape[0]:
        raise CorruptSegmentError(
            f"block count {count} exceeds output capacity {out.shape[0] - out_base}"
        )
    word_bytes = 4 * ((count * w + 31) // 32)
    if length != 4 + word_bytes + 5 * n_exc:
        raise CorruptSegmentError("block byte length inconsistent with header")

    words = b + 4
    if w == 0:
        for i in range(count):
            out[out_base + i] = 0
    elif w == 32:
        for i in range(count):
            out[out_base + i] = _read_u32(words + 4 * i)
    else:
        mask = (<uint32_t>1 << w) - 1
        window = 0
        have = 0
        for i in range(count):
            while have < w:
                window |= <uint64_t>_read_u32(words) << have
                words += 4
                have += 32
            out[out_base + i] = <uint32_t>window & mask
            window >>= w
            have -= w

    exc_off = offset + 4 + word_bytes
    for i in range(n_exc):
        if buf[exc_off] >= count:
            raise CorruptSegmentError("exception position out of range")
        out[out_base + <Py_ssize_t>buf[exc_off]] = _read_u32(&buf[exc_off + 1])
        exc_off += 5
    return count


def decode_block(buf, offset, length, out) -> int:
    """Decode one payload at ``buf[offset:offset+length]`` into ``out``."""
    cdef const uint8_t[::1] b = buf
    cdef uint32_t[::1] o = out
    return _decode_block(b, offset, length, o, 0)


cdef Py_ssize_t _decode_block_at(const uint8_t[::1] buf, Py_ssize_t offset,
                                 uint32_t[::1] out, Py_ssize_t out_base,
                                 Py_ssize_t* end_offset) except -1:
    cdef Py_ssize_t length, count
    if offset < 0 or offset + 4 > buf.shape[0]:
        raise CorruptSegmentError("block length prefix truncated")
    length = <Py_ssize_t>_read_u32(&buf[offset])
    count = _decode_block(buf, offset + 4, length, out, out_base)
    end_offset[0] = offset + 4 + length
    return count


def decode_block_at(buf, offset, out) -> tuple:
    """Decode a length-prefixed block; return (count, offset past the block)."""
    cdef const uint8_t[::1] b = buf
    cdef uint32_t[::1] o = out
    cdef Py_ssize_t end = 0
    cdef Py_ssize_t count = _decode_block_at(b, offset, o, 0, &end)
    return count, end


cdef Py_ssize_t _decode_docid_block_at(const uint8_t[::1] buf, Py_ssize_t offset,
                                       uint32_t[::1] out, Py_ssize_t out_base,
                                       Py_ssize_t* end_offset) except -1:
    cdef Py_ssize_t count = _decode_block_at(buf, offset, out, out_base, end_offset)
    cdef uint64_t acc = out[out_base]
    cdef Py_ssize_t i
    for i in range(1, count):
        if out[out_base + i] == 0:
            raise CorruptSegmentError("zero docid gap inside a segment")
        acc += out[out_base + i]
        if acc > <uint64_t>_U32_MAX:
            raise CorruptSegmentError("docid overflow while decoding a segment")
        out[out_base + i] = <uint32_t>acc
    return count


def decode_docid_block_at(buf, offset, out) -> tuple:
    """Decode a docid gap block, validate gaps, and prefix-sum in place."""
    cdef const uint8_t[::1] b = buf
    cdef uint32_t[::1] o = out
    cdef Py_ssize_t end = 0
    cdef Py_ssize_t count = _decode_docid_block_at(b, offset, o, 0, &end)
    return count, end


def read_segment_header(buf, offset) -> tuple:
    """Return (next_offset, posting_count) for the segment at ``offset``."""
    cdef const uint8_t[::1] b = buf
    cdef Py_ssize_t off = offset
    if off < 0 or off + 12 > b.shape[0]:
        raise CorruptSegmentError("segment header truncated")
    return _read_u64(&b[off]), <Py_ssize_t>_read_u32(&b[off + 8])


cdef uint64_t _decode_segment_docids(const uint8_t[::1] buf, uint64_t seg_offset,
                                     uint32_t[::1] out, Py_ssize_t out_base,
                                     Py_ssize_t* count, Py_ssize_t* f_offset) except? 0:
    cdef Py_ssize_t off = <Py_ssize_t>seg_offset
    cdef uint64_t nxt
    cdef Py_ssize_t declared, got
    cdef Py_ssize_t end = 0
    if off < 0 or off + 12 > buf.shape[0]:
        raise CorruptSegmentError("segment header truncated")
    nxt = _read_u64(&buf[off])
    declared = <Py_ssize_t>_read_u32(&buf[off + 8])
    got = _decode_docid_block_at(buf, off + 12, out, out_base, &end)
    if got != declared:
        raise CorruptSegmentError("segment posting count disagrees with docid block")
    count[0] = got
    f_offset[0] = end
    return nxt


def decode_segment_docids(buf, seg_offset, out) -> tuple:
    """Decode the docid block of one segment.

    Returns (next_offset, posting_count, offset of the tf section).
    """
    cdef const uint8_t[::1] b = buf
    cdef uint32_t[::1] o = out
    cdef Py_ssize_t count = 0, f_off = 0
    cdef uint64_t nxt = _decode_segment_docids(b, seg_offset, o, 0, &count, &f_off)
    return nxt, count, f_off


cdef inline Py_ssize_t _gallop(const uint32_t* arr, Py_ssize_t n, Py_ssize_t start,
                               uint32_t target) noexcept nogil:
    cdef Py_ssize_t lo, hi, step, mid
    if start >= n:
        return n
    if arr[start] >= target:
        return start
    step = 1
    lo = start
    while lo + step < n and arr[lo + step] < target:
        lo += step
        step <<= 1
    hi = lo + step
    if hi > n:
        hi = n
    # arr[lo] < target <= arr[hi] (if hi < n); bisect (lo, hi].
    while hi - lo > 1:
        mid = lo + ((hi - lo) >> 1)
        if arr[mid] < target:
            lo = mid
        else:
            hi = mid
    return hi


def gallop(arr, n, start, target) -> int:
    """First index in [start, n) whose value is >= target, else n."""
    cdef const uint32_t[::1] a = arr
    cdef Py_ssize_t nn = n
    if nn <= start:
        return nn
    return _gallop(&a[0], nn, start, target)


def intersect_chain(cands, ncands, buf, head_offset, out, scratch) -> int:
    """Intersect ascending candidate docids against a term's segment chain.

    Decodes segments one at a time into ``scratch`` and keeps candidates that
    appear; survivors are written to ``out``. Returns the survivor count.
    """
    cdef const uint32_t[::1] c = cands
    cdef uint32_t[::1] o = out
    cdef uint32_t[::1] s = scratch
    cdef const uint8_t[::1] b = buf
    cdef Py_ssize_t nc = ncands
    cdef Py_ssize_t i = 0, nout = 0, cnt = 0, f_off = 0, j
    cdef uint64_t off = head_offset
    cdef uint32_t t
    while off != _NONE and i < nc:
        off = _decode_segment_docids(b, off, s, 0, &cnt, &f_off)
        if s[cnt - 1] < c[i]:
            continue
        j = 0
        while i < nc and j < cnt:
            t = c[i]
            j = _gallop(&s[0], cnt, j, t)
            if j < cnt:
                if s[j] == t:
                    o[nout] = t
                    nout += 1
                    j += 1
                i += 1
    return nout


def decode_chain_docids(buf, head_offset, out) -> int:
    """Decode every docid in a segment chain into ``out``; return the count."""
    cdef const uint8_t[::1] b = buf
    cdef uint32_t[::1] o = out
    cdef Py_ssize_t n = 0, cnt = 0, f_off = 0
    cdef uint64_t off = head_offset
    while off != _NONE:
        off = _decode_segment_docids(b, off, o, n, &cnt, &f_off)
        n += cnt
    return n


# -- WAND top-k over segment chains -------------------------------------------
#
# Mirrors the pure-Python pivot loop in query.wand_topk operation for
# operation (same float64 arithmetic order, same tie rule) so both paths
# return identical results.

cdef int64_t _EXHAUSTED_DOC = 0x7FFFFFFFFFFFFFFF


cdef inline bint _weaker(double s1, int64_t d1, double s2, int64_t d2) noexcept nogil:
    # Total order for hits: higher score wins, ties prefer smaller docid.
    if s1 != s2:
        return s1 < s2
    return d1 > d2


cdef inline void _heap_sift_down(double* hs, int64_t* hd, Py_ssize_t size) noexcept nogil:
    cdef Py_ssize_t at = 0, child
    cdef double s = hs[0]
    cdef int64_t d = hd[0]
    while True:
        child = 2 * at + 1
        if child >= size:
            break
        if child + 1 < size and _weaker(hs[child + 1], hd[child + 1], hs[child], hd[child]):
            child += 1
        if _weaker(hs[child], hd[child], s, d):
            hs[at] = hs[child]
            hd[at] = hd[child]
            at = child
        else:
            break
    hs[at] = s
    hd[at] = d


cdef inline void _heap_push(double* hs, int64_t* hd, Py_ssize_t size,
                            double s, int64_t d) noexcept nogil:
    cdef Py_ssize_t at = size, parent
    while at > 0:
        parent = (at - 1) >> 1
        if _weaker(s, d, hs[parent], hd[parent]):
            hs[at] = hs[parent]
            hd[at] = hd[parent]
            at = parent
        else:
            break
    hs[at] = s
    hd[at] = d


cdef inline double _doclen_at(bint dense, const uint32_t[::1] doc_ids,
                              const double[::1] doclens, int64_t docid) noexcept nogil:
    cdef Py_ssize_t lo, hi, mid
    if dense:
        return doclens[docid]
    lo = 0
    hi = doc_ids.shape[0]
    while hi - lo > 1:
        mid = lo + ((hi - lo) >> 1)
        if doc_ids[mid] > <uint32_t>docid:
            hi = mid
        else:
            lo = mid
    return doclens[lo]


def wand_chains(buf, heads, bounds, idfs, bint dense, doc_ids, doclens,
                double avg, Py_ssize_t k, double k1, double b, Py_ssize_t block):
    """Exact WAND top-k over raw segment chains.

    heads/bounds/idfs are parallel per-term arrays; doclens is indexed by
    docid when ``dense`` else aligned with the sorted ``doc_ids`` array.
    Returns (docids int64 array, scores float64 array) ordered by
    (score desc, docid asc).
    """
    cdef const uint8_t[::1] bview = buf
    cdef const int64_t[::1] hview = heads
    cdef const double[::1] bnd = bounds
    cdef const uint32_t[::1] ids = doc_ids
    cdef const double[::1] dls = doclens
    cdef const double[::1] idf = idfs
    cdef Py_ssize_t n = hview.shape[0]
    if n == 0 or k < 1:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)

    state_docs_arr = np.empty(n * block, dtype=np.uint32)
    state_tfs_arr = np.empty(n * block, dtype=np.uint32)
    cdef uint32_t[::1] dflat = state_docs_arr
    cdef uint32_t[::1] tflat = state_tfs_arr
    cdef int64_t[64] cur
    cdef uint64_t[64] next_off
    cdef Py_ssize_t[64] idx
    cdef Py_ssize_t[64] count
    cdef Py_ssize_t[64] f_off
    cdef uint8_t[64] tfs_ready
    cdef uint8_t[64] dead
    cdef Py_ssize_t[64] order
    if n > 64:
        raise InvariantViolationError("at most 64 distinct query terms supported")

    heap_scores_arr = np.empty(k, dtype=np.float64)
    heap_docids_arr = np.empty(k, dtype=np.int64)
    cdef double[::1] hs = heap_scores_arr
    cdef int64_t[::1] hd = heap_docids_arr
    cdef Py_ssize_t heap_size = 0

    cdef double k1p1 = k1 + 1.0
    cdef double omb = 1.0 - b
    cdef Py_ssize_t i, ii, jj, alive, pivot, cnt, fo, end
    cdef int64_t pivot_doc
    cdef uint64_t nxt
    cdef double threshold, acc, score, inner, tf
    cdef Py_ssize_t sort_i, sort_j
    cdef Py_ssize_t key_i

    # Load the first segment of every chain.
    alive = n
    for i in range(n):
        dead[i] = 0
        tfs_ready[i] = 0
        cnt = 0
        fo = 0
        nxt = _decode_segment_docids(bview, <uint64_t>hview[i], dflat, i * block, &cnt, &fo)
        count[i] = cnt
        f_off[i] = fo
        next_off[i] = nxt
        idx[i] = 0
        cur[i] = <int64_t>dflat[i * block]
        order[i] = i

    while alive > 0:
        if alive == 1:
            i = order[0]
            # Single live chain: every remaining posting gets its true full
            # score (any contribution it could have lost to a skip implies a
            # bound strictly below the threshold, which cannot displace).
            while not dead[i]:
                if not tfs_ready[i]:
                    end = 0
                    _decode_block_at(bview, f_off[i], tflat, i * block, &end)
                    tfs_ready[i] = 1
                while idx[i] < count[i]:
                    pivot_doc = <int64_t>dflat[i * block + idx[i]]
                    tf = <double>tflat[i * block + idx[i]]
                    inner = omb + b * (_doclen_at(dense, ids, dls, pivot_doc) / avg)
                    score = idf[i] * (tf * k1p1) / (tf + k1 * inner)
                    if heap_size < k:
                        _heap_push(&hs[0], &hd[0], heap_size, score, pivot_doc)
                        heap_size += 1
                    elif _weaker(hs[0], hd[0], score, pivot_doc):
                        hs[0] = score
                        hd[0] = pivot_doc
                        _heap_sift_down(&hs[0], &hd[0], heap_size)
                    idx[i] += 1
                if next_off[i] == _NONE:
                    dead[i] = 1
                else:
                    cnt = 0
                    fo = 0
                    nxt = _decode_segment_docids(bview, next_off[i], dflat, i * block, &cnt, &fo)
                    count[i] = cnt
                    f_off[i] = fo
                    next_off[i] = nxt
                    idx[i] = 0
                    tfs_ready[i] = 0
            break

        # Insertion sort of the alive prefix by current docid (nearly sorted).
        for sort_i in range(1, alive):
            key_i = order[sort_i]
            sort_j = sort_i
            while sort_j > 0 and cur[order[sort_j - 1]] > cur[key_i]:
                order[sort_j] = order[sort_j - 1]
                sort_j -= 1
            order[sort_j] = key_i

        threshold = hs[0] if heap_size == k else -1e308
        acc = 0.0
        pivot = -1
        for ii in range(alive):
            acc += bnd[order[ii]]
            if acc >= threshold:
                pivot = ii
                break
        if pivot < 0:
            break
        pivot_doc = cur[order[pivot]]

        if cur[order[0]] == pivot_doc:
            inner = omb + b * (_doclen_at(dense, ids, dls, pivot_doc) / avg)
            score = 0.0
            for i in range(n):  # original term order: reproducible float sums
                if not dead[i] and cur[i] == pivot_doc:
                    if not tfs_ready[i]:
                        end = 0
                        _decode_block_at(bview, f_off[i], tflat, i * block, &end)
                        tfs_ready[i] = 1
                    tf = <double>tflat[i * block + idx[i]]
                    score += idf[i] * (tf * k1p1) / (tf + k1 * inner)
            if heap_size < k:
                _heap_push(&hs[0], &hd[0], heap_size, score, pivot_doc)
                heap_size += 1
            elif _weaker(hs[0], hd[0], score, pivot_doc):
                hs[0] = score
                hd[0] = pivot_doc
                _heap_sift_down(&hs[0], &hd[0], heap_size)
            for ii in range(alive):
                i = order[ii]
                if cur[i] == pivot_doc:
                    idx[i] += 1
                    if idx[i] < count[i]:
                        cur[i] = <int64_t>dflat[i * block + idx[i]]
                    elif next_off[i] == _NONE:
                        dead[i] = 1
                        cur[i] = _EXHAUSTED_DOC
                    else:
                        cnt = 0
                        fo = 0
                        nxt = _decode_segment_docids(bview, next_off[i], dflat,
                                                     i * block, &cnt, &fo)
                        count[i] = cnt
                        f_off[i] = fo
                        next_off[i] = nxt
                        idx[i] = 0
                        tfs_ready[i] = 0
                        cur[i] = <int64_t>dflat[i * block]
        else:
            for ii in range(pivot):
                i = order[ii]
                if cur[i] < pivot_doc:
                    # Gallop within the decoded segment, chain-follow past it.
                    while True:
                        jj = _gallop(&dflat[i * block], count[i], idx[i],
                                     <uint32_t>pivot_doc)
                        if jj < count[i]:
                            idx[i] = jj
                            cur[i] = <int64_t>dflat[i * block + jj]
                            break
                        if next_off[i] == _NONE:
                            dead[i] = 1
                            cur[i] = _EXHAUSTED_DOC
                            break
                        cnt = 0
                        fo = 0
                        nxt = _decode_segment_docids(bview, next_off[i], dflat,
                                                     i * block, &cnt, &fo)
                        count[i] = cnt
                        f_off[i] = fo
                        next_off[i] = nxt
                        idx[i] = 0
                        tfs_ready[i] = 0

        # Drop exhausted cursors from the order array.
        ii = 0
        for jj in range(alive):
            if not dead[order[jj]]:
                order[ii] = order[jj]
                ii += 1
        alive = ii

    # Pop weakest-first, reverse into (score desc, docid asc).
    out_docids = np.empty(heap_size, dtype=np.int64)
    out_scores = np.empty(heap_size, dtype=np.float64)
    cdef int64_t[::1] od = out_docids
    cdef double[::1] osc = out_scores
    for ii in range(heap_size - 1, -1, -1):
        od[ii] = hd[0]
        osc[ii] = hs[0]
        hs[0] = hs[ii]  # last element to root, heap shrinks to ii
        hd[0] = hd[ii]
        _heap_sift_down(&hs[0], &hd[0], ii)
    return out_docids, out_scores

"""Block-based integer compression for docid gaps, tfs, and position gaps.

Docid runs are gap-transformed (first value absolute so every segment decodes
independently) and bit-packed per block with out-of-band exceptions; term
frequencies are packed raw; positions are gap-encoded against the previous
position within the same document. The byte layout is documented in
``_kernels.pykernels`` and is a stable on-wire format consumed by the segment
pool and the persisted index file.

All functions here are pure and thread-safe.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from . import _kernels as kernels
from .errors import CorruptSegmentError, InvariantViolationError

DEFAULT_BLOCK_SIZE = 128


def _to_u32(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InvariantViolationError("expected a flat sequence of integers")
    if arr.dtype != np.uint32:
        if len(arr) and (arr.min() < 0 or arr.max() > 0xFFFFFFFF):
            raise InvariantViolationError("values must fit in unsigned 32 bits")
        arr = arr.astype(np.uint32)
    return np.ascontiguousarray(arr)


def encode_block(values) -> bytes:
    """Encode up to 256 uint32 values into a self-describing payload."""
    arr = _to_u32(values)
    return kernels.encode_block(arr, 0, len(arr))


def decode_block(payload, block_size: int = DEFAULT_BLOCK_SIZE) -> np.ndarray:
    """Decode a payload produced by :func:`encode_block`.

    ``block_size`` bounds the acceptable element count; anything larger is
    treated as corruption.
    """
    out = np.empty(block_size, dtype=np.uint32)
    count = kernels.decode_block(bytes(payload), 0, len(payload), out)
    if count > block_size:
        raise CorruptSegmentError(f"block count {count} exceeds block size {block_size}")
    return out[:count].copy()


def gap_encode(sorted_values) -> np.ndarray:
    """Gaps of a strictly increasing run; the first element stays absolute."""
    arr = _to_u32(sorted_values)
    if len(arr) == 0:
        raise InvariantViolationError("cannot gap-encode an empty run")
    wide = arr.astype(np.int64)
    gaps = np.diff(wide, prepend=np.int64(0))
    gaps[0] = wide[0]
    if len(arr) > 1 and gaps[1:].min() < 1:
        raise InvariantViolationError("docids must be strictly increasing")
    return gaps.astype(np.uint32)


def gap_decode(gaps) -> np.ndarray:
    """Inverse of :func:`gap_encode`; rejects zero gaps past the first slot."""
    arr = _to_u32(gaps)
    if len(arr) == 0:
        raise CorruptSegmentError("empty gap run")
    if len(arr) > 1 and arr[1:].min() < 1:
        raise CorruptSegmentError("zero docid gap")
    values = np.cumsum(arr, dtype=np.uint64)
    if values[-1] > 0xFFFFFFFF:
        raise CorruptSegmentError("docid overflow while decoding gaps")
    return values.astype(np.uint32)


def position_gap_encode(per_doc_positions: Sequence[Sequence[int]]) -> np.ndarray:
    """Flatten per-document position runs, gapping within each document.

    Each document's first position stays absolute; later positions are coded
    relative to the previous position in the same document.
    """
    out: list[np.ndarray] = []
    for positions in per_doc_positions:
        arr = _to_u32(positions)
        if len(arr) == 0:
            raise InvariantViolationError("a document must carry at least one position")
        wide = arr.astype(np.int64)
        gaps = np.diff(wide, prepend=np.int64(0))
        gaps[0] = wide[0]
        if len(arr) > 1 and gaps[1:].min() < 1:
            raise InvariantViolationError("positions must be strictly increasing per document")
        out.append(gaps.astype(np.uint32))
    if not out:
        return np.empty(0, dtype=np.uint32)
    return np.concatenate(out)


def position_gap_decode(flat_gaps, tfs) -> list[np.ndarray]:
    """Rebuild per-document positions; tfs provide the document boundaries."""
    gaps = _to_u32(flat_gaps)
    tf_arr = np.asarray(tfs, dtype=np.int64)
    if len(tf_arr) and tf_arr.min() < 1:
        raise CorruptSegmentError("term frequency below one")
    if int(tf_arr.sum()) != len(gaps):
        raise CorruptSegmentError("position payload length disagrees with term frequencies")
    out: list[np.ndarray] = []
    start = 0
    for tf in tf_arr:
        run = gaps[start : start + int(tf)]
        out.append(np.cumsum(run, dtype=np.uint64).astype(np.uint32))
        start += int(tf)
    return out


def position_gaps_flat(positions, tfs) -> np.ndarray:
    """Gap-transform an already-flat position array given per-doc tfs.

    Equivalent to ``position_gap_encode`` on the unflattened runs; used on the
    flush path where positions arrive flat.
    """
    pos = _to_u32(positions).astype(np.int64)
    tf_arr = np.asarray(tfs, dtype=np.int64)
    if int(tf_arr.sum()) != len(pos):
        raise InvariantViolationError("position count disagrees with term frequencies")
    gaps = np.diff(pos, prepend=np.int64(0))
    starts = np.zeros(len(tf_arr), dtype=np.int64)
    np.cumsum(tf_arr[:-1], out=starts[1:])
    gaps[starts] = pos[starts]
    if len(pos) and gaps.min() < 1:
        raise InvariantViolationError("positions must be >= 1 and strictly increasing per document")
    return gaps.astype(np.uint32)


def encode_docid_block(docids) -> bytes:
    """Fused gap-transform + encode for one docid run (first absolute)."""
    arr = _to_u32(docids)
    return kernels.encode_docid_block(arr, 0, len(arr))

"""Codec: exact round-trips, wire format details, gap and position transforms."""

import numpy as np
import pytest

from memdex import codec
from memdex.errors import CorruptSegmentError, InvariantViolationError


def test_all_zero_block_uses_width_zero():
    payload = codec.encode_block([0] * 128)
    assert payload[0] == 0  # bit width
    assert payload[1] == 0  # exceptions
    assert len(payload) == 4  # header only
    assert codec.decode_block(payload).tolist() == [0] * 128


def test_uniform_sevens_pack_at_three_bits():
    payload = codec.encode_block([7] * 128)
    assert payload[0] == 3
    assert payload[1] == 0
    assert codec.decode_block(payload).tolist() == [7] * 128


def test_randomized_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        n = int(rng.integers(1, 129))
        values = rng.integers(0, 2**32, size=n, dtype=np.uint32)
        assert np.array_equal(codec.decode_block(codec.encode_block(values)), values)


def test_exception_path_round_trip():
    # 13 large outliers among 128 values: too many to fit the chosen width,
    # few enough that most land in the exception list.
    rng = np.random.default_rng(2)
    values = rng.integers(0, 100, size=128, dtype=np.uint32)
    values[rng.choice(128, size=13, replace=False)] = rng.integers(
        2**20, 2**32, size=13, dtype=np.uint32
    )
    payload = codec.encode_block(values)
    assert payload[1] > 0  # exceptions present
    assert np.array_equal(codec.decode_block(payload), values)


def test_encode_is_deterministic():
    rng = np.random.default_rng(3)
    values = rng.integers(0, 2**16, size=100, dtype=np.uint32)
    assert codec.encode_block(values) == codec.encode_block(values)


def test_compression_sanity_bound():
    # A full block of values below 2^w must never exceed header + packed
    # payload + slack, whatever width the encoder picks.
    rng = np.random.default_rng(4)
    for w in range(1, 33):
        hi = 1 << w if w < 32 else 2**32
        values = rng.integers(0, hi, size=128, dtype=np.uint32)
        assert len(codec.encode_block(values)) <= 4 + 16 * w + 4
    # Adversarial case: mostly zeros plus a few small outliers.
    values = np.zeros(128, dtype=np.uint32)
    values[:12] = 1
    assert len(codec.encode_block(values)) <= 4 + 16 * 1 + 4


def test_decode_rejects_zero_count():
    payload = bytearray(codec.encode_block([1, 2, 3]))
    payload[2] = payload[3] = 0
    with pytest.raises(CorruptSegmentError):
        codec.decode_block(bytes(payload))


def test_decode_rejects_oversized_count():
    payload = codec.encode_block(list(range(1, 129)))
    with pytest.raises(CorruptSegmentError):
        codec.decode_block(payload, block_size=64)


def test_decode_rejects_inconsistent_length():
    payload = codec.encode_block([5, 6, 7])
    with pytest.raises(CorruptSegmentError):
        codec.decode_block(payload[:-1])


def test_encode_rejects_empty_block():
    with pytest.raises(InvariantViolationError):
        codec.encode_block([])


def test_gap_encode_examples():
    assert codec.gap_encode([5]).tolist() == [5]
    assert codec.gap_encode([3, 7, 10]).tolist() == [3, 4, 3]
    with pytest.raises(InvariantViolationError):
        codec.gap_encode([3, 3])


def test_gap_decode_examples():
    assert codec.gap_decode([3, 4, 3]).tolist() == [3, 7, 10]
    assert codec.gap_decode([5]).tolist() == [5]
    with pytest.raises(CorruptSegmentError):
        codec.gap_decode([3, 0, 2])


def test_gap_round_trip_random():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        values = np.cumsum(rng.integers(1, 10_000, size=n, dtype=np.uint64))
        values = values[values <= 0xFFFFFFFF].astype(np.uint32)
        if not len(values):
            continue
        decoded = codec.gap_decode(codec.gap_encode(values))
        assert np.array_equal(decoded, values)
        assert np.all(np.diff(decoded.astype(np.int64)) > 0)


def test_position_gap_worked_example():
    flat = codec.position_gap_encode([[1, 5, 9], [3, 16]])
    assert flat.tolist() == [1, 4, 4, 3, 13]
    rebuilt = codec.position_gap_decode([1, 4, 4, 3, 13], [3, 2])
    assert [r.tolist() for r in rebuilt] == [[1, 5, 9], [3, 16]]


def test_position_gap_single_occurrence():
    assert codec.position_gap_encode([[7]]).tolist() == [7]
    assert [r.tolist() for r in codec.position_gap_decode([7], [1])] == [[7]]


def test_position_gap_round_trip_random(rng):
    for _ in range(300):
        docs = []
        for _ in range(rng.randint(1, 20)):
            tf = rng.randint(1, 12)
            positions = sorted(rng.sample(range(1, 500), tf))
            docs.append(positions)
        flat = codec.position_gap_encode(docs)
        tfs = [len(d) for d in docs]
        rebuilt = codec.position_gap_decode(flat, tfs)
        assert [r.tolist() for r in rebuilt] == docs


def test_position_gap_rejects_empty_document():
    with pytest.raises(InvariantViolationError):
        codec.position_gap_encode([[1, 2], []])


def test_position_gap_decode_rejects_length_mismatch():
    with pytest.raises(CorruptSegmentError):
        codec.position_gap_decode([1, 2, 3], [2, 2])


def test_position_gaps_flat_matches_nested():
    rng = np.random.default_rng(6)
    for _ in range(200):
        docs = []
        for _ in range(int(rng.integers(1, 15))):
            tf = int(rng.integers(1, 9))
            docs.append(np.sort(rng.choice(np.arange(1, 300), size=tf, replace=False)))
        flat_positions = np.concatenate(docs).astype(np.uint32)
        tfs = np.array([len(d) for d in docs], dtype=np.uint32)
        fused = codec.position_gaps_flat(flat_positions, tfs)
        nested = codec.position_gap_encode([d.tolist() for d in docs])
        assert np.array_equal(fused, nested)


def test_fused_docid_block_matches_composition():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 129))
        docids = np.cumsum(rng.integers(1, 500, size=n, dtype=np.uint64)).astype(np.uint32)
        assert codec.encode_docid_block(docids) == codec.encode_block(codec.gap_encode(docids))

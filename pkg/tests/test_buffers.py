"""Buffer maps: prebuffering, growth schedule, drain, memory accounting."""

import random

import pytest

from memdex.buffers import BufferMaps, grow_schedule
from memdex.config import Config
from memdex.errors import InvariantViolationError


def _insert_n(maps, term_id, n, tf=1, start_docid=0):
    flushes = []
    for i in range(n):
        docid = start_docid + i
        out = maps.insert(term_id, docid, tf, list(range(1, tf + 1)))
        if out:
            flushes.extend(out)
    return flushes


def test_grow_schedule_examples():
    assert grow_schedule(0, 5) == 128
    assert grow_schedule(3, 5) == 1024  # 8b
    assert grow_schedule(9, 5) == 4096  # capped at 32b
    assert grow_schedule(2, 0) == 128  # m=0 never grows


def test_prebuffer_holds_until_threshold():
    maps = BufferMaps(Config(df_threshold=10))
    for docid in range(9):
        assert maps.insert(0, docid, 1, [1]) is None
    # The tenth document activates the term (no flush yet at B=128).
    assert maps.insert(0, 9, 1, [1]) is None


def test_first_flush_and_capacity_doubling():
    cfg = Config(df_threshold=10, cap_exponent=5)
    maps = BufferMaps(cfg)
    flushes = _insert_n(maps, 0, 128)
    assert len(flushes) == 1
    req = flushes[0]
    assert req.count == req.capacity == 128
    assert req.ordinal == 0
    assert list(req.docids) == list(range(128))
    # Next flush happens after 256 more postings, at double capacity.
    flushes = _insert_n(maps, 0, 256, start_docid=128)
    assert len(flushes) == 1
    assert flushes[0].capacity == 256
    assert flushes[0].ordinal == 1


def test_cap_zero_never_grows():
    cfg = Config(df_threshold=1, cap_exponent=0)
    maps = BufferMaps(cfg)
    flushes = _insert_n(maps, 0, 128 * 4)
    assert len(flushes) == 4
    assert all(f.capacity == 128 and f.count == 128 for f in flushes)


def test_flushes_follow_schedule_until_cap():
    cfg = Config(df_threshold=1, cap_exponent=2)
    maps = BufferMaps(cfg)
    flushes = _insert_n(maps, 0, 128 * (1 + 2 + 4 + 4 + 4))
    capacities = [f.capacity for f in flushes]
    assert capacities == [128, 256, 512, 512, 512]
    assert [f.ordinal for f in flushes] == list(range(5))
    for f in flushes:
        assert f.capacity == grow_schedule(f.ordinal, cfg.cap_exponent, cfg.block_size)


def test_non_increasing_docid_rejected():
    maps = BufferMaps(Config(df_threshold=1))
    maps.insert(0, 5, 1, [1])
    with pytest.raises(InvariantViolationError):
        maps.insert(0, 5, 1, [1])


def test_tf_must_match_positions_when_positional():
    maps = BufferMaps(Config(df_threshold=1))
    with pytest.raises(InvariantViolationError):
        maps.insert(0, 1, 2, [1])


def test_drain_keeps_threshold_boundary_terms():
    cfg = Config(df_threshold=10)
    maps = BufferMaps(cfg)
    _insert_n(maps, 0, 10)  # exactly at threshold: retained
    _insert_n(maps, 1, 9)  # one below: dropped
    drained = maps.drain_all()
    assert [r.term_id for r in drained] == [0]
    assert drained[0].count == 10
    assert drained[0].capacity == 128
    assert maps.discarded_terms == 1


def test_drain_empty_maps():
    maps = BufferMaps(Config())
    assert maps.drain_all() == []
    assert maps.discarded_terms == 0


def test_no_posting_loss_random(rng):
    cfg = Config(df_threshold=3, cap_exponent=1, block_size=4)
    maps = BufferMaps(cfg)
    inserted: dict[int, list[tuple[int, int, tuple[int, ...]]]] = {}
    for term_id in range(20):
        docid = 0
        for _ in range(rng.randint(0, 40)):
            docid += rng.randint(1, 3)
            tf = rng.randint(1, 4)
            positions = tuple(sorted(rng.sample(range(1, 50), tf)))
            inserted.setdefault(term_id, []).append((docid, tf, positions))
    emitted: dict[int, list[tuple[int, int, tuple[int, ...]]]] = {}

    def record(req):
        pos = list(req.positions) if req.positions is not None else []
        at = 0
        for i in range(req.count):
            tf = req.tfs[i]
            emitted.setdefault(req.term_id, []).append(
                (req.docids[i], tf, tuple(pos[at : at + tf]))
            )
            at += tf

    for term_id, postings in inserted.items():
        for docid, tf, positions in postings:
            out = maps.insert(term_id, docid, tf, list(positions))
            if out:
                for req in out:
                    record(req)
    for req in maps.drain_all():
        record(req)

    for term_id, postings in inserted.items():
        if len(postings) >= cfg.df_threshold:
            assert emitted[term_id] == postings, term_id
        else:
            assert term_id not in emitted


def test_peak_memory_zero_when_idle():
    maps = BufferMaps(Config())
    assert maps.peak_memory_report() == {
        "docid_bytes": 0, "tf_bytes": 0, "position_bytes": 0,
    }


def test_peak_memory_single_term_floor():
    cfg = Config(df_threshold=1, cap_exponent=0)
    maps = BufferMaps(cfg)
    _insert_n(maps, 0, 128)
    peaks = maps.peak_memory_report()
    assert peaks["docid_bytes"] >= 512
    assert peaks["tf_bytes"] >= 512
    assert peaks["position_bytes"] >= 512


def test_peak_memory_monotone_in_cap(rng):
    docs = []
    docid = 0
    for _ in range(400):
        docid += 1
        docs.append((docid, rng.randint(1, 2), [1, 2]))
    peaks = []
    for m in (0, 3, 7):
        maps = BufferMaps(Config(df_threshold=1, cap_exponent=m, block_size=8))
        for docid, tf, _ in docs:
            maps.insert(0, docid, tf, list(range(1, tf + 1)))
        maps.drain_all()
        peaks.append(sum(maps.peak_memory_report().values()))
    assert peaks == sorted(peaks)


def test_level_histogram_tracks_max_capacity():
    cfg = Config(df_threshold=1, cap_exponent=3, block_size=4)
    maps = BufferMaps(cfg)
    _insert_n(maps, 0, 3)  # never flushed: level 0
    _insert_n(maps, 1, 4)  # one flush: buffer grew to level 1
    _insert_n(maps, 2, 4 + 8 + 16 + 32 + 32)  # hits the cap (level 3) twice
    maps.drain_all()
    assert maps.level_counts == [1, 1, 0, 1]

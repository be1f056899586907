"""Dictionary: dense id assignment, move-to-front behavior, hash quality."""

import random
import string

import numpy as np
import pytest

from memdex.dictionary import TermDictionary, bitwise_hash
from memdex.errors import InvariantViolationError


def test_sequential_id_assignment():
    d = TermDictionary()
    assert d.lookup_or_insert("apple") == 0
    assert d.lookup_or_insert("banana") == 1
    assert d.lookup("apple") == 0


def test_insert_is_idempotent():
    d = TermDictionary()
    assert d.lookup_or_insert("same") == d.lookup_or_insert("same")
    assert len(d) == 1


def test_dense_ids_over_many_terms():
    rng = random.Random(42)
    d = TermDictionary(initial_buckets=256)  # force multiple rehashes
    terms = {f"{rng.random():.12f}-{i}" for i in range(10_000)}
    ids = {d.lookup_or_insert(t) for t in terms}
    assert ids == set(range(len(terms)))
    for t in terms:
        assert d.lookup(t) is not None


def test_lookup_without_insert():
    d = TermDictionary()
    assert d.lookup("missing") is None
    d.lookup_or_insert("x")
    assert d.lookup("x") == 0
    assert len(d) == 1


def test_move_to_front_on_hit():
    d = TermDictionary(initial_buckets=4)
    # Three terms that collide under the 4-bucket mask share one chain.
    a, b, c = [t for t in (f"t{i}" for i in range(100))
               if bitwise_hash(t) & 3 == 0][:3]
    for t in (a, b, c):
        d.lookup_or_insert(t)
    assert [e.term for e in d.chain_for(a)] == [a, b, c]  # inserts append
    d.lookup(c)
    assert [e.term for e in d.chain_for(a)] == [c, a, b]
    for _ in range(3):
        d.lookup(b)
    assert d.chain_for(b)[0].term == b
    d.lookup_or_insert(a)  # hits also reorder through lookup_or_insert
    assert d.chain_for(a)[0].term == a


def test_empty_term_rejected():
    with pytest.raises(InvariantViolationError):
        TermDictionary().lookup_or_insert("")


def test_hash_is_deterministic_and_masked():
    size = 1 << 12
    mask = size - 1
    assert bitwise_hash("") == 0
    for t in ("a", "zz", "longer-term-value"):
        assert bitwise_hash(t) == bitwise_hash(t)
        assert 0 <= (bitwise_hash(t) & mask) < size


def test_hash_bucket_occupancy_is_roughly_uniform():
    # Chi-squared over 4096 buckets with 100k random terms: the statistic has
    # mean df and variance 2*df under uniformity; accept within 3 sigma.
    rng = random.Random(7)
    n_buckets = 1 << 12
    terms = set()
    while len(terms) < 100_000:
        terms.add("".join(rng.choices(string.ascii_lowercase + string.digits,
                                      k=rng.randint(3, 12))))
    buckets = np.zeros(n_buckets, dtype=np.int64)
    for t in terms:
        buckets[bitwise_hash(t) & (n_buckets - 1)] += 1
    expected = len(terms) / n_buckets
    chi2 = float(((buckets - expected) ** 2 / expected).sum())
    df = n_buckets - 1
    assert abs(chi2 - df) < 3 * (2 * df) ** 0.5

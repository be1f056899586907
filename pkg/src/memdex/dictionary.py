"""Term dictionary: strings to dense term ids via a move-to-front hash table.

Each entry also tracks the term's document frequency and the head/tail byte
offsets of its segment chain in the pool. Lookups move the hit entry to the
front of its bucket chain, so even reads mutate state: the table is
single-writer until the index is finalized, at which point a plain immutable
mapping is snapshotted for query threads.
"""

from __future__ import annotations

from . import _kernels as kernels
from .errors import InvariantViolationError

NO_SEGMENT = kernels.NONE_OFFSET

_INITIAL_BUCKETS = 1 << 16
_MAX_LOAD = 2.0


class TermEntry:
    """Dictionary record for one term."""

    __slots__ = ("term", "term_id", "df", "head", "tail")

    def __init__(self, term: str, term_id: int):
        self.term = term
        self.term_id = term_id
        self.df = 0
        self.head = NO_SEGMENT
        self.tail = NO_SEGMENT

    @property
    def has_segments(self) -> bool:
        return self.head != NO_SEGMENT

    def __repr__(self):
        return f"TermEntry({self.term!r}, id={self.term_id}, df={self.df})"


def bitwise_hash(term: str) -> int:
    """32-bit shift-add-xor hash of the term's UTF-8 bytes."""
    return kernels.bitwise_hash(term.encode("utf-8"))


class TermDictionary:
    """Chained hash table with move-to-front buckets and dense id assignment."""

    def __init__(self, initial_buckets: int = _INITIAL_BUCKETS):
        if initial_buckets & (initial_buckets - 1):
            raise InvariantViolationError("bucket count must be a power of two")
        self._buckets: list[list[TermEntry] | None] = [None] * initial_buckets
        self._mask = initial_buckets - 1
        self._by_id: list[TermEntry] = []

    def __len__(self) -> int:
        return len(self._by_id)

    def bucket_index(self, term: str) -> int:
        return bitwise_hash(term) & self._mask

    def lookup_or_insert(self, term: str) -> int:
        """Return the term's id, inserting it with the next dense id if new."""
        if not term:
            raise InvariantViolationError("empty term")
        chain = self._buckets[self.bucket_index(term)]
        if chain is not None:
            for i, entry in enumerate(chain):
                if entry.term == term:
                    if i:
                        chain.insert(0, chain.pop(i))
                    return entry.term_id
        entry = TermEntry(term, len(self._by_id))
        self._by_id.append(entry)
        self._insert_entry(entry)
        if len(self._by_id) > _MAX_LOAD * (self._mask + 1):
            self._grow()
        return entry.term_id

    def lookup(self, term: str) -> int | None:
        """Return the term's id without inserting; None when absent."""
        entry = self.entry(term)
        return None if entry is None else entry.term_id

    def entry(self, term: str) -> TermEntry | None:
        chain = self._buckets[self.bucket_index(term)]
        if chain is None:
            return None
        for i, entry in enumerate(chain):
            if entry.term == term:
                if i:
                    chain.insert(0, chain.pop(i))
                return entry
        return None

    def entry_by_id(self, term_id: int) -> TermEntry:
        return self._by_id[term_id]

    def entries_in_id_order(self) -> list[TermEntry]:
        return self._by_id

    def chain_for(self, term: str) -> list[TermEntry]:
        """Bucket chain holding the term, front first (for inspection)."""
        return list(self._buckets[self.bucket_index(term)] or ())

    def _insert_entry(self, entry: TermEntry):
        idx = bitwise_hash(entry.term) & self._mask
        chain = self._buckets[idx]
        if chain is None:
            self._buckets[idx] = [entry]
        else:
            chain.append(entry)

    def _grow(self):
        old = self._buckets
        size = (self._mask + 1) * 2
        self._buckets = [None] * size
        self._mask = size - 1
        for chain in old:
            if chain:
                for entry in chain:
                    self._insert_entry(entry)

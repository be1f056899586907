"""Shared fixtures and oracle helpers for the test suite."""

from __future__ import annotations

import random
from collections import Counter

import pytest

from memdex import Config, Indexer


def naive_inverted_map(docs):
    """Brute-force oracle: term -> list of (docid, tf, positions).

    ``docs`` is a list of (docid, tokens). Positions are 1-based.
    """
    out: dict[str, list[tuple[int, int, list[int]]]] = {}
    for docid, tokens in docs:
        positions: dict[str, list[int]] = {}
        for i, tok in enumerate(tokens, 1):
            positions.setdefault(tok, []).append(i)
        for term, plist in positions.items():
            out.setdefault(term, []).append((docid, len(plist), plist))
    return out


def random_docs(rng: random.Random, n_docs: int, vocab: int, avg_len: int = 8,
                docid_gaps: bool = False):
    """Small synthetic corpus as (docid, tokens) pairs."""
    docs = []
    docid = 0
    for _ in range(n_docs):
        docid += rng.randint(1, 5) if docid_gaps else 1
        length = max(1, int(rng.gauss(avg_len, avg_len / 3)))
        tokens = [f"w{rng.randint(0, vocab - 1)}" for _ in range(length)]
        docs.append((docid, tokens))
    return docs


def build(docs, **config_kwargs):
    """Index (docid, tokens) pairs and finalize."""
    config_kwargs.setdefault("pool_block_bytes", 1024 * 1024)
    indexer = Indexer(Config(**config_kwargs))
    for docid, tokens in docs:
        indexer.index_document(docid, tokens)
    return indexer.finalize()


def docs_to_lines(docs):
    return [f"{docid}\t" + " ".join(tokens) + "\n" for docid, tokens in docs]


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)

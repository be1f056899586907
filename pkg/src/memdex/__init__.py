"""memdex: in-memory incremental inverted indexing with compressed segments.

Postings accumulate per term in uncompressed buffers and are flushed as
compressed segments into an append-only pool; a doubling-with-cap buffer
growth policy controls how contiguously a term's segments land. Queries run
over the finalized pool via conjunctive intersection (SvS with galloping
search) or disjunctive top-k (WAND with BM25).
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .config import Config, parse_cap
from .indexer import Index, Indexer, build_index

__all__ = ["Config", "Index", "Indexer", "KERNEL_BACKEND", "build_index", "parse_cap"]

__version__ = "0.1.0"

"""Kernel backend selection.

Prefers the compiled extension, falling back to the numpy implementation when
the extension is missing (no compiler at install time) or when the
``MEMDEX_PURE_PYTHON`` environment variable is set. Both backends stay
importable side by side so the benchmark suite can compare them directly.
"""

import os

from . import pykernels

if os.environ.get("MEMDEX_PURE_PYTHON"):
    impl = pykernels
else:
    try:
        from . import _native as impl  # type: ignore[no-redef]
    except ImportError:
        impl = pykernels

BACKEND = impl.BACKEND
NONE_OFFSET = impl.NONE_OFFSET

bitwise_hash = impl.bitwise_hash
encode_block = impl.encode_block
encode_docid_block = impl.encode_docid_block
decode_block = impl.decode_block
decode_block_at = impl.decode_block_at
decode_docid_block_at = impl.decode_docid_block_at
read_segment_header = impl.read_segment_header
decode_segment_docids = impl.decode_segment_docids
gallop = impl.gallop
intersect_chain = impl.intersect_chain
decode_chain_docids = impl.decode_chain_docids

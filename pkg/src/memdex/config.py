"""Index configuration: block size, contiguity cap, df threshold, positions."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvariantViolationError

# Largest cap exponent accepted anywhere ("128b" buffers).
MAX_CAP_EXPONENT = 7

# The exception slot in an encoded block stores a 1-byte element position,
# so blocks can never hold more than 256 values.
MAX_BLOCK_SIZE = 256

_CAP_LABELS = {1 << m: m for m in range(MAX_CAP_EXPONENT + 1)}


@dataclass(frozen=True)
class Config:
    """Knobs shared by the indexing pipeline.

    block_size:    values per compression block (b).
    cap_exponent:  buffer cap is block_size * 2**cap_exponent docids (m);
                   0 is the fully-discontiguous baseline.
    df_threshold:  terms seen in fewer documents than this are dropped.
    positional:    record term positions alongside docids and tfs.
    """

    block_size: int = 128
    cap_exponent: int = 5
    df_threshold: int = 10
    positional: bool = True
    pool_block_bytes: int = 256 * 1024 * 1024
    memory_budget: int | None = None

    def __post_init__(self):
        if not 1 <= self.block_size <= MAX_BLOCK_SIZE:
            raise InvariantViolationError(
                f"block_size must be in [1, {MAX_BLOCK_SIZE}], got {self.block_size}"
            )
        if not 0 <= self.cap_exponent <= MAX_CAP_EXPONENT:
            raise InvariantViolationError(
                f"cap_exponent must be in [0, {MAX_CAP_EXPONENT}], got {self.cap_exponent}"
            )
        if self.df_threshold < 1:
            raise InvariantViolationError("df_threshold must be >= 1")
        if self.pool_block_bytes < 1024 * 1024:
            raise InvariantViolationError("pool_block_bytes must be >= 1 MiB")

    @property
    def cap_postings(self) -> int:
        """Maximum docid/tf buffer capacity in postings (2^m * b)."""
        return self.block_size << self.cap_exponent

    @property
    def cap_label(self) -> str:
        return f"{1 << self.cap_exponent}b"


def parse_cap(text: str) -> int:
    """Parse a contiguity cap given as '1b'..'128b' or a bare exponent 0..7."""
    s = text.strip().lower()
    if s.endswith("b"):
        try:
            blocks = int(s[:-1])
        except ValueError:
            blocks = -1
        if blocks in _CAP_LABELS:
            return _CAP_LABELS[blocks]
        raise InvariantViolationError(
            f"cap {text!r} not one of " + ", ".join(f"{1 << m}b" for m in range(8))
        )
    try:
        m = int(s)
    except ValueError:
        raise InvariantViolationError(f"cap {text!r} is not an exponent or 'Nb' label")
    if not 0 <= m <= MAX_CAP_EXPONENT:
        raise InvariantViolationError(f"cap exponent must be in [0, {MAX_CAP_EXPONENT}]")
    return m

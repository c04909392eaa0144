"""Stable hashing helpers: content ids, prompt digests, derived seeds.

Everything here must stay deterministic across processes and platforms, since
corpus ids and reproducibility guarantees are built on these functions.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable

_SEP = b"\x1f"


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _digest(parts: Iterable[object]) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(_SEP)
    return h.digest()


def derive_seed(*parts: object) -> int:
    """Fold arbitrary parts into a 63-bit seed. Same parts, same seed."""
    return int.from_bytes(_digest(parts)[:8], "big") >> 1


def content_id(*parts: object) -> str:
    """Short content-addressed identifier (16 hex chars)."""
    return _digest(parts).hex()[:16]

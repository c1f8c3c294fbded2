"""Deterministic seed derivation.

Everything random in this package flows from one user seed through
`stable_seed`, which hashes a tuple of parts into a 64-bit integer.
Unlike `hash()`, the result does not depend on PYTHONHASHSEED, the
platform, or the process, so runs are reproducible byte for byte.
"""

from __future__ import annotations

import hashlib


def stable_seed(*parts: object) -> int:
    """Derive a 64-bit seed from an arbitrary tuple of printable parts."""
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")

"""Deterministic seed derivation for independent RNG streams.

Child seeds are hashes of (master seed, purpose string, index), so adding a
new consumer or more workers never perturbs existing streams.
"""

from __future__ import annotations

import hashlib

_SEED_BYTES = 8


def derive_seed(master: int, purpose: str, index: int = 0) -> int:
    """Derive a child seed from a master seed, a purpose label and an index."""
    payload = f"{master}|{purpose}|{index}".encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:_SEED_BYTES], "big")

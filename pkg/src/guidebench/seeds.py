"""Deterministic seed derivation: root seed -> stage -> item, via hashing."""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *parts: object) -> int:
    """64-bit seed obtained by hashing the root seed with labeled parts."""
    payload = "\x1f".join([str(root), *(str(p) for p in parts)])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")

"""Deterministic derivation of named random substreams from one master seed."""

from __future__ import annotations

import hashlib


def substream_seed(master_seed: int, *labels) -> int:
    """Derive a child seed from a master seed and a label path.

    Uses SHA-256 so the mapping is stable across processes and platforms
    (the builtin hash() is salted per process and must not be used here).
    """
    key = ":".join([str(int(master_seed))] + [str(label) for label in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")

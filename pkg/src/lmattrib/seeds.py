"""Stable seed derivation and content hashing.

Python's builtin ``hash`` is salted per process, so every derived RNG stream
in this package goes through :func:`derive_seed` instead.
"""

from __future__ import annotations

import hashlib
import json


def derive_seed(*parts: object) -> int:
    """Fold arbitrary labels into a stable 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def canonical_json_bytes(obj: object) -> bytes:
    """Serialize with sorted keys and fixed separators for byte-stable output."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def content_hash(obj: object) -> str:
    """Hex SHA-256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json_bytes(obj)).hexdigest()

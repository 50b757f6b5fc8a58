"""Deterministic seed derivation for multi-stage runs.

Every randomized stage (splits, shuffles, client sampling) draws from a
seed derived from the master seed plus integer context parts, so whole
runs replay bit-for-bit from a single seed while stages stay decoupled.
"""

import hashlib

_DOMAIN = b"fedsmell.seed.v1:"

# Context slot used when sampling the per-round client subset; client ids
# are non-negative so this can never collide with a client slot.
SAMPLING_SLOT = -1


def derive_seed(master: int, *parts: int) -> int:
    """Mix a master seed with context parts into a 32-bit seed.

    Stable across processes and platforms (pure SHA-256, no salted
    hashing), so equal inputs always yield the same stream.
    """
    payload = _DOMAIN + repr((int(master),) + tuple(int(p) for p in parts)).encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:4], "little")

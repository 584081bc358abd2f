"""Deterministic per-task random streams.

Every stochastic operation derives its generator from a root seed plus a tuple
of context tokens (case id, dose fraction, ...). Streams therefore depend only
on their context, never on scheduling order or thread count.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def _token_to_int(token: int | float | str) -> int:
    if isinstance(token, bool):
        raise TypeError("bool is not a valid seed token")
    if isinstance(token, int):
        return token & _MASK64
    if isinstance(token, float):
        # exact bit pattern, so 0.125 and 0.1250000001 derive distinct streams
        return struct.unpack("<Q", struct.pack("<d", token))[0]
    if isinstance(token, str):
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"unsupported seed token type: {type(token).__name__}")


def seed_sequence(seed: int, *tokens: int | float | str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & _MASK64] + [_token_to_int(t) for t in tokens])


def derive_rng(seed: int, *tokens: int | float | str) -> np.random.Generator:
    """Generator keyed by (seed, tokens); identical inputs give identical streams."""
    return np.random.default_rng(seed_sequence(seed, *tokens))


def derive_seed(seed: int, *tokens: int | float | str) -> int:
    """A 64-bit child seed keyed by (seed, tokens)."""
    return int(seed_sequence(seed, *tokens).generate_state(1, np.uint64)[0])

"""Deterministic random streams for reproducible, schedule-independent runs.

Every trial gets its own counter-based Philox generator keyed by
(master seed, context tokens).  Results are therefore a pure function of the
seed and the task description, regardless of worker count or the order in
which trials execute.
"""

import hashlib

import numpy as np


def _encode(master_seed: int, context: tuple) -> bytes:
    parts = [repr(int(master_seed))]
    for tok in context:
        if isinstance(tok, float):
            parts.append(format(tok, ".17g"))
        else:
            parts.append(repr(tok))
    return "\x1f".join(parts).encode("utf-8")


def stream_key(master_seed: int, *context) -> np.ndarray:
    """128-bit Philox key derived by hashing the seed and context tokens."""
    digest = hashlib.blake2b(_encode(master_seed, context), digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


def substream(master_seed: int, *context) -> np.random.Generator:
    """Independent generator for one (command, parameters, trial) context."""
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, *context)))

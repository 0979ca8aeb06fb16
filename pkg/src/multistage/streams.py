"""Deterministic random-stream splitting.

A stream is keyed by ``(master_seed, experiment_id, replication)``. The key
is serialized as ``"<seed>\\x1f<experiment_id>\\x1f<replication>"`` (UTF-8),
hashed with SHA-256, and the 256-bit digest seeds a ``SeedSequence`` that
drives a PCG64 generator. Both steps are platform independent, so the same
triple yields the same draws everywhere.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stream_key(master_seed: int, experiment_id: str, replication: int) -> int:
    text = f"{int(master_seed) & MASK64}\x1f{experiment_id}\x1f{int(replication)}"
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest(), "little")


def derive_stream(master_seed: int, experiment_id: str, replication: int) -> np.random.Generator:
    """Independent, reproducible generator for one replication."""
    seq = np.random.SeedSequence(stream_key(master_seed, experiment_id, replication))
    return np.random.Generator(np.random.PCG64(seq))

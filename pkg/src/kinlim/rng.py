"""Reproducible random streams.

Streams are counter-based (Philox) and keyed by (seed, replica_id), so replicas
can be generated in any order, on any number of workers, and still produce
identical draws.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError


def stream(seed: int, replica_id: int = 0) -> np.random.Generator:
    """Return an independent generator for the given (seed, replica_id) pair."""
    if seed < 0 or replica_id < 0:
        raise InvalidParameterError("seed and replica_id must be nonnegative")
    key = np.array([seed, replica_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def streams(seed: int, n_replicas: int, first_replica: int = 0) -> list[np.random.Generator]:
    """Independent generators for replicas first_replica .. first_replica+n_replicas-1."""
    return [stream(seed, first_replica + i) for i in range(n_replicas)]

"""Deterministic random-stream derivation.

A single run seed fans out into named sub-streams (sampler, init, dropout,
forge, ...) so that every stochastic component is reproducible independently
of the others.  Stream keys are derived by hashing, so the mapping is stable
across processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *labels: object) -> int:
    """Derive a 128-bit integer key for the sub-stream named by `labels`."""
    material = repr((int(seed),) + tuple(str(x) for x in labels)).encode()
    digest = hashlib.blake2b(material, digest_size=16).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *labels: object) -> np.random.Generator:
    """A numpy Generator seeded from (seed, *labels), independent per label path."""
    return np.random.default_rng(stream_key(seed, *labels))

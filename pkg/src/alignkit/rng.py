"""Deterministic hierarchical random streams.

A single experiment seed is split into named substreams (data generation,
parameter init, batch shuffling, reparameterization noise, ...) so toggling
one stochastic source never perturbs the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label) -> list[int]:
    if isinstance(label, (int, np.integer)):
        return [int(label) & 0xFFFFFFFF]
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 8, 4)]


def substream(seed: int, *labels) -> np.random.Generator:
    """Generator for the substream of ``seed`` addressed by ``labels``.

    The same (seed, labels) pair always yields an identical stream, and
    distinct label paths are statistically independent.
    """
    key: list[int] = []
    for label in labels:
        key.extend(_label_words(label))
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))
    return np.random.default_rng(seq)

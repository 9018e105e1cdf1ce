"""Deterministic, splittable random streams.

Every stochastic routine takes a seed (int or numpy Generator). The dataset
harness derives one counter-based Philox stream per (master_seed, sample
index, stage tag), so sample content is a pure function of those keys and
adding or removing a stage never perturbs any other stage's draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key parts must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream key parts must be int or str, got {type(part).__name__}")


def stream(*key) -> np.random.Generator:
    """A Philox-backed Generator keyed by the given ints/strings.

    Strings hash via crc32 (stable across processes and platforms, unlike
    the interpreter's salted ``hash``).
    """
    entropy = [_key_part(p) for p in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(*key) -> int:
    """A stable 32-bit seed derived from the given key parts."""
    entropy = [_key_part(p) for p in key]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def seed_sequence(*key) -> np.random.SeedSequence:
    """The SeedSequence behind ``stream`` with the same key encoding."""
    return np.random.SeedSequence([_key_part(p) for p in key])


def as_generator(seed) -> np.random.Generator:
    """Coerce an int seed or existing Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_key_part(seed))))

"""Seed fan-out: one run seed, independent named substreams."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Deterministic, platform-stable generator for a named substream.

    Distinct names yield statistically independent streams; the same
    (seed, name) pair always yields the same stream.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]))

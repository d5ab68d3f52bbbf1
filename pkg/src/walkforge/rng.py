"""Deterministic random substreams.

Every random quantity in the package flows from a single master seed
through named substreams. A substream is a counter-based Philox generator
keyed by (master_seed, stream_index), so draws depend only on the key,
never on global state or on the order in which streams are consumed.
Stream indices are namespaced by domain in the high byte so offsets,
walkers, and test resampling can never collide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = (1 << 64) - 1

# domain tags occupy bits 56..63 of the stream index
DOMAIN_OFFSETS = 1 << 56
DOMAIN_WALKERS = 2 << 56
DOMAIN_TESTS = 3 << 56


@dataclass(frozen=True)
class RngStream:
    """Key for one reproducible substream."""

    master_seed: int
    stream_index: int

    def generator(self) -> np.random.Generator:
        key = [self.master_seed & _U64, self.stream_index & _U64]
        return np.random.Generator(np.random.Philox(key=key))


def offsets_stream(master_seed: int) -> np.random.Generator:
    return RngStream(master_seed, DOMAIN_OFFSETS).generator()


def walker_stream(master_seed: int, walker: int) -> np.random.Generator:
    if walker < 0 or walker >= DOMAIN_OFFSETS:
        raise ValueError("walker index out of range")
    return RngStream(master_seed, DOMAIN_WALKERS | walker).generator()


def test_stream(master_seed: int, which: int = 0) -> np.random.Generator:
    return RngStream(master_seed, DOMAIN_TESTS | which).generator()

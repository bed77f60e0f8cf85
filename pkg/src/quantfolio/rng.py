"""Counter-based Gaussian streams.

Each block of draws is addressed by ``(seed, stream, chunk, step, column)``
and produced by a Philox generator whose counter encodes the address, so a
block never depends on which thread produced it or in which order.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def block_normals(seed, chunk, step, column, size, stream=0):
    """``size`` standard normals for one (chunk, step, column) block."""
    key = np.array([int(seed) & MASK64, int(stream) & MASK64], dtype=np.uint64)
    counter = np.array([0, int(column), int(step), int(chunk)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return gen.standard_normal(size)


def chunk_normals(seed, chunk, step, column, size, antithetic=False, stream=0):
    """Block normals, optionally as antithetic pairs ``(z, -z)`` stacked in halves."""
    if not antithetic:
        return block_normals(seed, chunk, step, column, size, stream)
    half = (size + 1) // 2
    z = block_normals(seed, chunk, step, column, half, stream)
    return np.concatenate([z, -z])[:size]


def fresh_seed():
    """A random 63-bit seed for runs where none was given."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

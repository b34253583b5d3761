"""Deterministic random stream derivation.

Every source of randomness in the package is a PCG64 generator keyed by a
small tuple of non-negative integers (seed, domain, step, ...). Distinct key
tuples give statistically independent streams, and the same key always
reproduces the same stream, so any consumer of randomness can be replayed in
isolation.
"""

from __future__ import annotations

import numpy as np


def substream(*keys: int) -> np.random.Generator:
    """Return the generator for a key tuple.

    Keys must be non-negative integers. The mapping from keys to streams is
    fixed; callers are expected to document their key layout. One numpy
    caveat to keep in mind when designing a layout: SeedSequence entropy
    lists that differ only in trailing zeros alias to the same stream
    ((s, d) and (s, d, 0) collide), so key families of different lengths
    must already differ in a shared position, as the (seed, domain, ...)
    layout used here does.
    """
    if not keys:
        raise ValueError("substream requires at least one key")
    for k in keys:
        if int(k) != k or k < 0:
            raise ValueError(f"substream keys must be non-negative integers, got {k!r}")
    seq = np.random.SeedSequence([int(k) for k in keys])
    return np.random.Generator(np.random.PCG64(seq))

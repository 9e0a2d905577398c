"""Seeded random streams.

Every random draw in the package goes through :func:`make_rng`.  A stream is
identified by a 64-bit seed plus a path of names, e.g. ``(seed, "sampler")``
or ``(seed, "mc")``.  The path is hashed into the ``spawn_key`` of a
:class:`numpy.random.SeedSequence`, and the resulting entropy feeds a Philox
counter-based bit generator.  Two different paths never share a stream, so
the sampler, the stopping index and the Monte-Carlo probes of one run are
independent, and runs with different seeds never collide.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(part: str | int) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"stream index must be non-negative, got {part}")
    return int(part)


def make_rng(seed: int, *stream: str | int) -> np.random.Generator:
    """Return an independent generator for ``seed`` and the named ``stream``."""
    seq = np.random.SeedSequence(
        entropy=int(seed) & _MASK64, spawn_key=tuple(_key(p) for p in stream)
    )
    return np.random.Generator(np.random.Philox(seq))

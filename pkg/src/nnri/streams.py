"""Keyed random substreams.

Every random draw in the package comes from a generator keyed by
``(seed, *keys)``, so a replicate or a stage can be regenerated on its own
without replaying anything that ran before it.
"""

import zlib

import numpy as np

_PURPOSES = (
    "population",
    "size",
    "count",
    "details",
    "sample",
    "response",
    "noise",
)


def purpose_key(name):
    """Stable integer key for a named purpose."""
    if name in _PURPOSES:
        return _PURPOSES.index(name)
    return zlib.crc32(name.encode("utf-8")) + len(_PURPOSES)


def substream(seed, *keys):
    """Return a Philox generator for ``(seed, *keys)``.

    String keys are mapped through :func:`purpose_key`.
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(purpose_key(k) if isinstance(k, str) else int(k))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def derive_seed(seed, *keys) -> int:
    """64-bit integer seed for ``(seed, *keys)``, for APIs that take an int."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(purpose_key(k) if isinstance(k, str) else int(k))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])

"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, stream label, stream index). Streams are independent of each other
and of the order in which they are created, so chunked Monte Carlo loops can
be split or reordered without changing results.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a(label: str) -> int:
    h = _FNV_OFFSET
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def stream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Generator for the (seed, label, index) stream.

    `index` distinguishes chunks of one logical stream (e.g. per-time-slice
    estimates keyed by the slice index).
    """
    key = np.array([seed & _MASK64, (_fnv1a(label) + index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

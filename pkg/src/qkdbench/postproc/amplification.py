"""Toeplitz-matrix privacy amplification over GF(2).

Row ``i``, column ``j`` of the matrix is ``S[i + j]``, so the output bit
``i`` is the parity of ``S[i:i + len(key)] & key``. The product is computed
as a cross-correlation (FFT-based for long keys) and reduced mod 2.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import correlate

from ..errors import SeedLengthMismatch


def output_length(key_length: int, seed_length: int) -> int:
    return seed_length - key_length + 1


def privacy_amplify(key, seed) -> np.ndarray:
    """Compress ``key`` to ``len(seed) - len(key) + 1`` bits."""
    key = np.asarray(key, dtype=np.uint8)
    seed = np.asarray(seed, dtype=np.uint8)
    n_out = output_length(len(key), len(seed))
    if len(key) == 0 or n_out < 1:
        raise SeedLengthMismatch(f"seed of {len(seed)} bits cannot hash a {len(key)}-bit key to >= 1 bit")
    counts = correlate(seed.astype(np.float64), key.astype(np.float64), mode="valid")
    return (np.rint(counts).astype(np.int64) & 1).astype(np.uint8)


def toeplitz_seed(rng: np.random.Generator, key_length: int, out_length: int) -> np.ndarray:
    return rng.integers(0, 2, key_length + out_length - 1, dtype=np.uint8)

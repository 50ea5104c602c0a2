"""Polynomial hashing modulo a 50-bit prime and key verification.

The key is read as big-endian 49-bit words after padding with a single 1
bit and then zeros up to a whole word. One more word holding the key's bit
length is appended, and the word sequence is evaluated as a polynomial at
the secret point ``k`` with Horner's rule modulo ``Q``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .reconciliation import ReconciliationOutcome

Q = 2**50 - 27
WORD_BITS = Q.bit_length() - 1  # floor(log2 q) = 49
_WEIGHTS = (np.uint64(1) << np.arange(WORD_BITS - 1, -1, -1, dtype=np.uint64))


def words(key) -> list[int]:
    """Padded 49-bit words of ``key`` followed by the length word."""
    bits = np.asarray(key, dtype=np.uint64)
    n = len(bits)
    pad = (-(n + 1)) % WORD_BITS
    padded = np.concatenate([bits, np.ones(1, np.uint64), np.zeros(pad, np.uint64)])
    w = padded.reshape(-1, WORD_BITS) @ _WEIGHTS
    return [int(x) for x in w] + [n]


def polyhash(k: int, key) -> int:
    """50-bit tag of a bit array under hash key ``k`` (0 <= k < Q)."""
    if not 0 <= k < Q:
        raise ValueError("hash key must lie in [0, q)")
    h = 0
    for m in words(key):
        h = (h * k + m) % Q
    return h


def epsilon_collision(key_length: int) -> float:
    """Collision probability bound for two distinct keys of ``key_length`` bits.

    >>> f"{epsilon_collision(1_360_000):.3e}"
    '2.469e-11'
    """
    return (math.ceil(key_length / WORD_BITS) - 1) / Q


@dataclass
class VerificationOutcome:
    alice: np.ndarray
    bob: np.ndarray
    verified: np.ndarray  # bool per subblock
    n_ver: int
    l_ver: int
    eps_ver: float
    e_mu: float
    xi: int
    leak: int
    first_pass: bool


def _draw_key(rng):
    return int(rng.integers(0, Q, dtype=np.int64))


def verify(outcome: ReconciliationOutcome, rng: np.random.Generator) -> VerificationOutcome:
    """Compare hash tags of the corrected key; fall back to per-subblock tags.

    If the whole-key tags agree every corrected subblock is kept and
    ``xi = 1``; otherwise each corrected subblock is hashed separately,
    mismatching ones are dropped and ``xi = n_cor + 1``.
    """
    L = outcome.subblock_length
    cor = np.flatnonzero(outcome.corrected)
    verified = np.zeros(outcome.n_subblocks, bool)
    if len(cor) == 0:
        return _outcome(outcome, verified, 0, 1.0, False)
    k = _draw_key(rng)
    first = polyhash(k, outcome.alice[cor].ravel()) == polyhash(k, outcome.bob[cor].ravel())
    if first:
        verified[cor] = True
        return _outcome(outcome, verified, 1, epsilon_collision(outcome.l_cor), True)
    for i in cor:
        ki = _draw_key(rng)
        verified[i] = polyhash(ki, outcome.alice[i]) == polyhash(ki, outcome.bob[i])
    n_ver = int(verified.sum())
    eps = -math.expm1(n_ver * math.log1p(-epsilon_collision(L))) if n_ver else 1.0
    return _outcome(outcome, verified, len(cor) + 1, eps, False)


def _outcome(rec, verified, xi, eps, first):
    n_ver = int(verified.sum())
    e_mu = float(np.mean(rec.qber[verified])) if n_ver else float("nan")
    return VerificationOutcome(
        alice=rec.alice[verified].ravel(),
        bob=rec.bob[verified].ravel(),
        verified=verified,
        n_ver=n_ver,
        l_ver=n_ver * rec.subblock_length,
        eps_ver=eps,
        e_mu=e_mu,
        xi=xi,
        leak=rec.leak_for(verified, xi),
        first_pass=first,
    )

"""Subblock error correction with exact leak bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import LengthMismatch
from . import ldpc

HASH_BITS = 50


@dataclass
class ReconciliationOutcome:
    """Bob's corrected subblocks and what reconciliation disclosed.

    ``leak`` is the provisional total assuming verification passes at the
    first attempt (xi = 1); :func:`~qkdbench.postproc.hashing.verify`
    recomputes it over the verified subblocks.
    """

    alice: np.ndarray  # (n_sub, l_sub) Alice's key
    bob: np.ndarray  # (n_sub, l_sub) Bob's key after correction
    corrected: np.ndarray  # bool per subblock
    qber: np.ndarray  # E_mu^(i) per subblock (nan when not corrected)
    disclosed: np.ndarray  # d_i per subblock
    rate: float
    syndrome_bits: int
    punctured: int = 0
    hash_bits: int = HASH_BITS
    mode: str = "ldpc"
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    @property
    def subblock_length(self) -> int:
        return self.alice.shape[1]

    @property
    def n_subblocks(self) -> int:
        return self.alice.shape[0]

    @property
    def n_cor(self) -> int:
        return int(self.corrected.sum())

    @property
    def l_cor(self) -> int:
        return self.n_cor * self.subblock_length

    def leak_for(self, subblocks, xi: int) -> int:
        """Syndrome, disclosed-bit and hash leak charged for ``subblocks``."""
        subblocks = np.asarray(subblocks, dtype=bool)
        per = self.syndrome_bits - self.punctured + self.disclosed[subblocks]
        return int(per.sum()) + xi * self.hash_bits

    @property
    def leak(self) -> int:
        return self.leak_for(self.corrected, 1 if self.n_cor else 0)


def split_subblocks(alice, bob, subblock_length):
    alice = np.asarray(alice, dtype=np.uint8)
    bob = np.asarray(bob, dtype=np.uint8)
    if alice.shape != bob.shape or alice.ndim != 1:
        raise LengthMismatch(f"keys differ in shape: {alice.shape} vs {bob.shape}")
    if subblock_length < 1 or len(alice) % subblock_length:
        raise LengthMismatch(f"key length {len(alice)} is not a multiple of the subblock length {subblock_length}")
    n = len(alice) // subblock_length
    return alice.reshape(n, subblock_length), bob.reshape(n, subblock_length)


def _ldpc_subblock(a, b, code, apriori_qber, rng, max_rounds, disclose_step, max_iter):
    n = len(a)
    s_a, s_b = code.syndrome(a), code.syndrome(b)
    target = s_a ^ s_b
    q = min(max(apriori_qber, 1e-6), 0.5 - 1e-6)
    prior = np.full(n, np.log((1 - q) / q))
    known = np.zeros(n, bool)
    disclosed = 0
    iters = 0
    for round_ in range(max_rounds + 1):
        e, ok, it = ldpc.decode(code, target, prior, max_iter)
        iters += it
        if ok:
            return b ^ e, True, disclosed, iters
        if round_ == max_rounds:
            break
        # Alice reveals bits at fresh random positions chosen by Bob
        free = np.flatnonzero(~known)
        pick = rng.choice(free, size=min(disclose_step, len(free)), replace=False)
        known[pick] = True
        disclosed += len(pick)
        prior[pick] = np.where(a[pick] == b[pick], ldpc._LLR_CLIP, -ldpc._LLR_CLIP)
    return b, False, disclosed, iters


def reconcile(
    alice,
    bob,
    mode: str = "ldpc",
    apriori_qber: float = 0.03,
    subblock_length: int = 27200,
    rate: float | None = None,
    rates=ldpc.DEFAULT_RATES,
    punctured: int = 0,
    rng: np.random.Generator | None = None,
    max_disclosure_rounds: int = 2,
    disclosure_fraction: float = 0.02,
    max_iter: int = 60,
    code_seed: int = 2024,
) -> ReconciliationOutcome:
    """Correct Bob's key subblock by subblock.

    In ``ldpc`` mode Alice sends each subblock's syndrome and Bob decodes
    the error pattern; when decoding fails Alice may reveal extra random bits
    (counted as d_i) before the subblock is given up. ``oracle`` mode copies
    Alice's bits but charges the same syndrome length for the chosen rate.
    """
    if mode not in ("ldpc", "oracle"):
        raise ValueError(f"mode must be 'ldpc' or 'oracle', got {mode!r}")
    if punctured and mode == "ldpc":
        raise ValueError("the shipped codes are not punctured; p > 0 is only accepted in oracle mode")
    A, B = split_subblocks(alice, bob, subblock_length)
    n_sub, L = A.shape
    R = rate if rate is not None else ldpc.select_rate(apriori_qber, rates)
    synd = int(round(L * (1 - R)))
    if not 0 <= punctured <= synd:
        raise ValueError("punctured bits must lie in [0, syndrome length]")
    rng = rng if rng is not None else np.random.default_rng(0)
    out = B.copy()
    ok = np.zeros(n_sub, bool)
    qber = np.full(n_sub, np.nan)
    disc = np.zeros(n_sub, np.int64)
    iters = np.zeros(n_sub, np.int64)
    if mode == "oracle":
        qber[:] = (A != B).mean(axis=1)
        out[:] = A
        ok[:] = True
    else:
        code = ldpc.make_code(L, R, code_seed)
        step = max(1, int(np.ceil(disclosure_fraction * L)))
        for i in range(n_sub):
            fixed, good, d, it = _ldpc_subblock(A[i], B[i], code, apriori_qber, rng, max_disclosure_rounds, step, max_iter)
            out[i], ok[i], disc[i], iters[i] = fixed, good, d, it
            if good:
                qber[i] = float(np.count_nonzero(fixed != B[i])) / L
    return ReconciliationOutcome(
        alice=A, bob=out, corrected=ok, qber=qber, disclosed=disc, rate=R,
        syndrome_bits=synd, punctured=punctured, mode=mode, iterations=iters,
    )

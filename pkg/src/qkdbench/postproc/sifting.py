"""Sifting, decoy statistics and block assembly."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..linksim import SessionLog


@dataclass(frozen=True)
class DecoyStats:
    """Pulses sent (N) and detected (M) per intensity class mu, nu1, nu2.

    Detections include double and dark clicks and are counted before sifting.
    """

    sent: tuple[int, int, int]
    detected: tuple[int, int, int]

    def __post_init__(self):
        sent = tuple(int(x) for x in self.sent)
        det = tuple(int(x) for x in self.detected)
        if len(sent) != 3 or len(det) != 3:
            raise ValueError("need counts for exactly three intensities")
        if any(m < 0 or m > n for m, n in zip(det, sent)):
            raise ValueError(f"need 0 <= M <= N per intensity, got N={sent} M={det}")
        object.__setattr__(self, "sent", sent)
        object.__setattr__(self, "detected", det)

    @property
    def gains(self) -> np.ndarray:
        n = np.asarray(self.sent, float)
        m = np.asarray(self.detected, float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, m / np.where(n > 0, n, 1), 0.0)

    def __add__(self, other: "DecoyStats") -> "DecoyStats":
        return DecoyStats(
            tuple(a + b for a, b in zip(self.sent, other.sent)),
            tuple(a + b for a, b in zip(self.detected, other.detected)),
        )

    def as_record(self) -> dict:
        return {"N": list(self.sent), "M": list(self.detected), "Q_hat": self.gains.tolist()}


@dataclass
class SiftResult:
    alice: np.ndarray
    bob: np.ndarray
    stats: DecoyStats
    slots: np.ndarray
    photons: np.ndarray


def _click_intensity(log):
    idx = log.pulse_index(log.clicks.slot)
    return idx, log.intensity[idx]


def sift_detailed(log: SessionLog) -> SiftResult:
    """Matched-basis signal clicks, with their slots and true photon numbers."""
    c = log.clicks
    idx, it = _click_intensity(log)
    keep = (it == 0) & (log.alice_basis[idx] == c.bob_basis)
    detected = np.bincount(it, minlength=3)[:3]
    stats = DecoyStats(tuple(log.sent_counts()), tuple(detected))
    return SiftResult(
        alice=log.alice_bit[idx[keep]].astype(np.uint8),
        bob=c.bob_bit[keep].astype(np.uint8),
        stats=stats,
        slots=c.slot[keep],
        photons=log.pulse_photons[idx[keep]],
    )


def sift(log: SessionLog):
    """Return ``(alice_sifted, bob_sifted, DecoyStats)``.

    Bob's bits are already decoded with his secret swap bits when four-state
    Bob is on, so sifting compares them with Alice's bits directly.
    """
    r = sift_detailed(log)
    return r.alice, r.bob, r.stats


@dataclass
class Block:
    alice: np.ndarray
    bob: np.ndarray
    stats: DecoyStats
    photons: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.alice)


def _range_stats(log, c_int, c_slot, lo, hi):
    """Counts over pulses with lo <= slot < hi of a dense log."""
    sent = np.bincount(log.intensity[lo:hi], minlength=3)[:3]
    a, b = np.searchsorted(c_slot, [lo, hi])
    det = np.bincount(c_int[a:b], minlength=3)[:3]
    return sent.astype(np.int64), det.astype(np.int64)


class BlockAssembler:
    """Cut a stream of sessions into blocks of exactly ``block_length`` sifted bits.

    Decoy statistics of a block cover the pulses from the end of the previous
    block up to and including the slot of the block's last sifted bit. Bits
    and counts after the last complete block wait for the next session.
    Only dense logs (every pulse recorded) can be split this way.
    """

    def __init__(self, block_length: int):
        if block_length < 1:
            raise ValueError("block length must be >= 1")
        self.block_length = block_length
        self._bits: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._pending = 0
        self._sent = np.zeros(3, np.int64)
        self._det = np.zeros(3, np.int64)

    @property
    def pending_bits(self) -> int:
        return self._pending

    def add(self, log: SessionLog) -> list[Block]:
        if log.pulse_slot is not None:
            raise ValueError("block assembly needs a dense pulse log")
        r = sift_detailed(log)
        _, c_int = _click_intensity(log)
        c_slot = log.clicks.slot
        blocks = []
        pos, lo = 0, 0
        n = len(r.alice)
        while self._pending + (n - pos) >= self.block_length:
            take = self.block_length - self._pending
            end = pos + take
            hi = int(r.slots[end - 1]) + 1
            s, d = _range_stats(log, c_int, c_slot, lo, hi)
            parts = self._bits + [(r.alice[pos:end], r.bob[pos:end], r.photons[pos:end])]
            blocks.append(Block(
                alice=np.concatenate([p[0] for p in parts]),
                bob=np.concatenate([p[1] for p in parts]),
                stats=DecoyStats(tuple(self._sent + s), tuple(self._det + d)),
                photons=np.concatenate([p[2] for p in parts]),
            ))
            self._bits, self._pending = [], 0
            self._sent[:] = 0
            self._det[:] = 0
            pos, lo = end, hi
        s, d = _range_stats(log, c_int, c_slot, lo, len(log.pulse_code))
        self._sent += s
        self._det += d
        if pos < n:
            self._bits.append((r.alice[pos:], r.bob[pos:], r.photons[pos:]))
            self._pending += n - pos
        return blocks


def session_block(log: SessionLog, subblock_length: int, max_subblocks: int | None = None) -> Block:
    """One block made of as many whole subblocks as the session yields.

    For dense logs the statistics stop at the last used sifted bit; sparse
    (attack) logs use the whole session.
    """
    r = sift_detailed(log)
    n_sub = len(r.alice) // subblock_length
    if max_subblocks is not None:
        n_sub = min(n_sub, max_subblocks)
    n = n_sub * subblock_length
    stats = r.stats
    if log.pulse_slot is None and n > 0:
        _, c_int = _click_intensity(log)
        s, d = _range_stats(log, c_int, log.clicks.slot, 0, int(r.slots[n - 1]) + 1)
        stats = DecoyStats(tuple(s), tuple(d))
    return Block(r.alice[:n], r.bob[:n], stats, r.photons[:n], meta={"available_sifted": len(r.alice)})

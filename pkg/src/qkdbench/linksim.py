"""Gate-slot Monte-Carlo model of a decoy-state BB84 link.

Every gate slot carries one weak coherent pulse from Alice. Photon numbers
are Poisson, channel loss thins them binomially, and each photon that reaches
Bob is routed to the detector for its bit value (matched basis, up to a
misalignment flip) or to either detector at random (mismatched basis).
Bob's two gated threshold detectors click with probability
``1 - (1 - eta)**n`` OR-ed with a dark count.

Generation is vectorised per train; hardware deadtime is then applied as a
sequential pass over candidate detection events so that it can suppress
clicks and cross-couple the two detectors.

A session log stores, for every pulse, one packed byte of Alice's choices
(``intensity << 2 | basis << 1 | bit``) plus the true photon number, and a
row per accepted click. Attack logs may store pulses sparsely (only the
slots that ever reached Bob) with the remaining sent pulses tallied in
``extra_sent``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigInvalid, NotBlinded

INTENSITY_NAMES = ("mu", "nu1", "nu2")
FLAG_NAMES = ("single", "double", "dark")
KIND_PHOTON, KIND_DARK, KIND_BRIGHT = 0, 1, 2
FLAG_SINGLE, FLAG_DOUBLE, FLAG_DARK = 0, 1, 2


# --- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class SourceConfig:
    """Decoy-state source: three intensities chosen at random per pulse."""

    mu: float = 0.5
    nu1: float = 0.1
    nu2: float = 0.01
    p_mu: float = 0.5
    p_nu1: float = 0.25
    p_nu2: float = 0.25
    f_p_hz: float = 312.5e6
    train_length: int = 1_000_000

    def __post_init__(self):
        if min(self.mu, self.nu1, self.nu2) < 0:
            raise ValueError("intensities must be >= 0")
        if not (self.nu2 < self.nu1 and self.nu1 + self.nu2 < self.mu):
            raise ValueError(f"need nu2 < nu1 and nu1 + nu2 < mu, got {self.mu}, {self.nu1}, {self.nu2}")
        probs = (self.p_mu, self.p_nu1, self.p_nu2)
        if min(probs) < 0 or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise ValueError(f"intensity probabilities must be >= 0 and sum to 1, got {probs}")
        if self.train_length < 1:
            raise ValueError("train_length must be >= 1")
        if not self.f_p_hz > 0:
            raise ValueError("f_p must be positive")

    @property
    def intensities(self) -> np.ndarray:
        return np.array([self.mu, self.nu1, self.nu2])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([self.p_mu, self.p_nu1, self.p_nu2])


@dataclass(frozen=True)
class ChannelConfig:
    loss_db: float = 0.0
    misalignment: float = 0.0

    def __post_init__(self):
        if not self.loss_db >= 0:
            raise ValueError("channel loss must be >= 0 dB")
        if not 0.0 <= self.misalignment <= 0.5:
            raise ValueError("misalignment must lie in [0, 0.5]")

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)


@dataclass(frozen=True)
class DetectorModel:
    """Gated threshold detector with deadtime and a blinded linear regime.

    After its own click a detector is fully dead for ``deadtime_s`` and then
    recovers along ``recovery_profile`` (relative efficiency per gate, ending
    at 1). When ``recovery_profile`` is None the profile is a linear ramp
    that reaches 1 at ``recovery_end_s`` after the click. The partner
    detector enters the same cycle ``crosslink_delay`` gates later.
    """

    efficiency: float = 0.1
    dark_prob: float = 1e-6
    gate_period_s: float = 3.2e-9
    deadtime_s: float = 3.4e-6
    recovery_end_s: float = 6e-6
    crosslink_delay: int = 2
    recovery_profile: tuple[float, ...] | None = None
    e_never_j: float = 12e-15
    e_always_j: float = 22e-15
    blinding_power_w: float = 3e-6
    ramp: str = "linear"

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_prob <= 1.0:
            raise ValueError("dark_prob must lie in [0, 1]")
        if not self.gate_period_s > 0:
            raise ValueError("gate period must be positive")
        if self.deadtime_s < 0 or self.recovery_end_s < 0:
            raise ValueError("deadtime must be >= 0")
        if self.crosslink_delay < 0:
            raise ValueError("crosslink_delay must be >= 0")
        if not self.e_never_j < self.e_always_j:
            raise ValueError("need E_never < E_always")
        if self.ramp not in _RAMPS:
            raise ValueError(f"unknown ramp {self.ramp!r}; choose from {sorted(_RAMPS)}")
        if self.recovery_profile is not None:
            prof = tuple(float(x) for x in self.recovery_profile)
            if any(not 0.0 <= x <= 1.0 for x in prof):
                raise ValueError("recovery profile values must lie in [0, 1]")
            if prof and prof[-1] != 1.0:
                raise ValueError("recovery profile must end at 1")
            object.__setattr__(self, "recovery_profile", prof)

    @property
    def dead_gates(self) -> int:
        return _gates(self.deadtime_s, self.gate_period_s)

    def profile(self) -> np.ndarray:
        if self.recovery_profile is not None:
            return np.asarray(self.recovery_profile, dtype=float)
        n = _gates(self.recovery_end_s, self.gate_period_s) - self.dead_gates
        if n <= 0:
            return np.zeros(0)
        return np.arange(1, n + 1) / n

    @property
    def recovery_gates(self) -> int:
        """Gates after the dead period starts until efficiency is back to 1."""
        return self.dead_gates + len(self.profile())

    @property
    def has_deadtime(self) -> bool:
        return self.recovery_gates > 0

    def ideal(self) -> "DetectorModel":
        """Same detector without any deadtime effects."""
        return replace(self, deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0, recovery_profile=())


def _gates(seconds, period):
    # tolerate float noise such as 6e-6 / 3.2e-9 = 1875.0000000000002
    return int(math.ceil(seconds / period - 1e-9)) if seconds > 0 else 0


def _linear_ramp(e, lo, hi):
    return np.clip((e - lo) / (hi - lo), 0.0, 1.0)


def _step_ramp(e, lo, hi):
    return (e >= 0.5 * (lo + hi)).astype(float)


_RAMPS = {"linear": _linear_ramp, "step": _step_ramp}


# --- elementary physics --------------------------------------------------------


def sample_photon_number(intensity, rng: np.random.Generator, size=None):
    """Poisson photon number of a phase-randomised coherent pulse."""
    if np.any(np.asarray(intensity) < 0):
        raise ValueError("intensity must be >= 0")
    return rng.poisson(intensity, size=size)


def thin(n, transmittance: float, rng: np.random.Generator):
    """Photons surviving independent loss: Binomial(n, t)."""
    if not 0.0 <= transmittance <= 1.0:
        raise ValueError("transmittance must lie in [0, 1]")
    return rng.binomial(n, transmittance)


def click_probability(n, d: DetectorModel):
    return 1.0 - (1.0 - d.dark_prob) * (1.0 - d.efficiency) ** np.asarray(n)


def detect_single_photon(n, d: DetectorModel, rng: np.random.Generator):
    """Threshold detection of ``n`` photons by a live, unblinded detector."""
    p = click_probability(n, d)
    return rng.random(np.shape(p)) < p


def detect_bright(energy_j, d: DetectorModel, incident_power_w: float | None = None):
    """Click probability of a blinded detector for trigger energy ``energy_j``.

    ``incident_power_w`` is the cw blinding power on the detector; the
    detector's own threshold is assumed when omitted.
    """
    power = d.blinding_power_w if incident_power_w is None else incident_power_w
    if power < d.blinding_power_w:
        raise NotBlinded(f"{power:g} W is below the blinding threshold {d.blinding_power_w:g} W")
    p = _RAMPS[d.ramp](np.asarray(energy_j, dtype=float), d.e_never_j, d.e_always_j)
    return float(p) if np.ndim(p) == 0 else p


# --- log containers ------------------------------------------------------------


@dataclass
class EventTable:
    """Candidate or accepted detector firings, sorted by (slot, detector)."""

    slot: np.ndarray
    detector: np.ndarray
    kind: np.ndarray
    rec_u: np.ndarray
    bob_basis: np.ndarray
    swap: np.ndarray
    coin: np.ndarray

    _fields = ("slot", "detector", "kind", "rec_u", "bob_basis", "swap", "coin")

    @classmethod
    def empty(cls):
        return cls(
            np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, np.int8), np.zeros(0),
            np.zeros(0, np.int8), np.zeros(0, np.int8), np.zeros(0, np.int8),
        )

    def __len__(self):
        return len(self.slot)

    def take(self, idx) -> "EventTable":
        return EventTable(*(getattr(self, f)[idx] for f in self._fields))

    @classmethod
    def concat(cls, tables: Sequence["EventTable"]) -> "EventTable":
        if not tables:
            return cls.empty()
        return cls(*(np.concatenate([getattr(t, f) for t in tables]) for f in cls._fields))

    def sorted(self) -> "EventTable":
        order = np.lexsort((self.detector, self.slot))
        return self.take(order)


@dataclass
class ClickTable:
    """One row per gate slot in which Bob registered a click."""

    slot: np.ndarray
    detector: np.ndarray
    bob_basis: np.ndarray
    swap: np.ndarray
    bob_bit: np.ndarray
    flag: np.ndarray
    kind: np.ndarray

    _fields = ("slot", "detector", "bob_basis", "swap", "bob_bit", "flag", "kind")

    def __len__(self):
        return len(self.slot)

    def take(self, idx) -> "ClickTable":
        return ClickTable(*(getattr(self, f)[idx] for f in self._fields))


@dataclass
class SessionLog:
    train_length: int
    n_slots: int
    pulse_code: np.ndarray
    pulse_photons: np.ndarray
    events: EventTable
    clicks: ClickTable
    pulse_slot: np.ndarray | None = None
    extra_sent: np.ndarray = field(default_factory=lambda: np.zeros(3, np.int64))
    four_state_bob: bool = False
    meta: dict = field(default_factory=dict)

    # Alice's side -------------------------------------------------------------
    @property
    def pulse_slots(self) -> np.ndarray:
        if self.pulse_slot is None:
            return np.arange(len(self.pulse_code), dtype=np.int64)
        return self.pulse_slot

    @property
    def intensity(self) -> np.ndarray:
        return self.pulse_code >> 2

    @property
    def alice_basis(self) -> np.ndarray:
        return (self.pulse_code >> 1) & 1

    @property
    def alice_bit(self) -> np.ndarray:
        return self.pulse_code & 1

    def pulse_index(self, slots) -> np.ndarray:
        slots = np.asarray(slots, dtype=np.int64)
        if self.pulse_slot is None:
            return slots
        idx = np.searchsorted(self.pulse_slot, slots)
        if len(slots) and (np.any(idx >= len(self.pulse_slot)) or np.any(self.pulse_slot[np.minimum(idx, len(self.pulse_slot) - 1)] != slots)):
            raise KeyError("click at a slot without a recorded pulse")
        return idx

    def sent_counts(self) -> np.ndarray:
        return np.bincount(self.intensity, minlength=3)[:3].astype(np.int64) + self.extra_sent

    @property
    def n_trains(self) -> int:
        return -(-self.n_slots // self.train_length)

    def with_clicks(self, clicks: ClickTable, **meta) -> "SessionLog":
        return replace(self, clicks=clicks, meta={**self.meta, **meta})


# --- session generation --------------------------------------------------------


def _as_pair(detectors):
    if isinstance(detectors, DetectorModel):
        return (detectors, detectors)
    pair = tuple(detectors)
    if len(pair) != 2:
        raise ConfigInvalid("Bob has exactly two detectors")
    return pair


def _train_rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def choose_intensity(source: SourceConfig, rng, size):
    cum = np.cumsum(source.probabilities)
    return np.minimum(np.searchsorted(cum, rng.random(size), side="right"), 2).astype(np.uint8)


def _dark_events(length, d, rng):
    k = rng.binomial(length, d.dark_prob) if d.dark_prob > 0 else 0
    if k == 0:
        return np.zeros(0, np.int64)
    return np.sort(rng.choice(length, size=k, replace=False)).astype(np.int64)


def route_photons(m, matched, alice_bit, swap, misalignment, rng):
    """Split ``m`` arriving photons between detectors 0 and 1."""
    p_wrong = np.where(matched, misalignment, 0.5)
    n_wrong = rng.binomial(m, p_wrong)
    n_right = m - n_wrong
    right_det = (alice_bit ^ swap).astype(bool)
    n0 = np.where(right_det, n_wrong, n_right)
    n1 = np.where(right_det, n_right, n_wrong)
    return n0, n1


def _simulate_train(source, channel, dets, four_state_bob, rng, offset, length):
    intensity = choose_intensity(source, rng, length)
    basis = rng.integers(0, 2, length, dtype=np.uint8)
    bit = rng.integers(0, 2, length, dtype=np.uint8)
    photons = rng.poisson(source.intensities[intensity])
    bob_basis = rng.integers(0, 2, length, dtype=np.int8)
    swap = rng.integers(0, 2, length, dtype=np.int8) if four_state_bob else np.zeros(length, np.int8)

    t = channel.transmittance
    sent = np.flatnonzero(photons)
    m = rng.binomial(photons[sent], t)
    arrived = sent[m > 0]
    m = m[m > 0]
    matched = basis[arrived] == bob_basis[arrived]
    n0, n1 = route_photons(m, matched, bit[arrived], swap[arrived], channel.misalignment, rng)

    slots, dets_idx, kinds = [], [], []
    for d, n_d in ((0, n0), (1, n1)):
        model = dets[d]
        p = 1.0 - (1.0 - model.efficiency) ** n_d
        fired = rng.random(len(n_d)) < p
        ph_slots = arrived[fired]
        dk_slots = np.setdiff1d(_dark_events(length, model, rng), ph_slots, assume_unique=True)
        slots += [ph_slots, dk_slots]
        dets_idx += [np.full(len(ph_slots), d, np.int8), np.full(len(dk_slots), d, np.int8)]
        kinds += [np.full(len(ph_slots), KIND_PHOTON, np.int8), np.full(len(dk_slots), KIND_DARK, np.int8)]
    ev_slot = np.concatenate(slots)
    ev = EventTable(
        ev_slot, np.concatenate(dets_idx), np.concatenate(kinds), rng.random(len(ev_slot)),
        bob_basis[ev_slot], swap[ev_slot], rng.integers(0, 2, len(ev_slot), dtype=np.int8),
    ).sorted()
    ev.slot = ev.slot + offset
    code = (intensity << 2) | (basis << 1) | bit
    return code.astype(np.uint8), np.minimum(photons, 255).astype(np.uint8), ev


def run_session(
    source: SourceConfig,
    channel: ChannelConfig,
    detectors,
    n_trains: int,
    seed: int,
    four_state_bob: bool = False,
) -> SessionLog:
    """Simulate ``n_trains`` trains of pulses and Bob's accepted clicks.

    Deterministic in ``seed``: train ``k`` draws from the ``k``-th child of
    ``SeedSequence(seed)``, so results do not depend on how trains are batched.
    """
    dets = _as_pair(detectors)
    if n_trains < 0:
        raise ValueError("n_trains must be >= 0")
    L = source.train_length
    codes, phots, events = [], [], []
    for k, rng in enumerate(_train_rngs(seed, n_trains)):
        c, p, ev = _simulate_train(source, channel, dets, four_state_bob, rng, k * L, L)
        codes.append(c)
        phots.append(p)
        events.append(ev)
    log = SessionLog(
        train_length=L,
        n_slots=n_trains * L,
        pulse_code=np.concatenate(codes) if codes else np.zeros(0, np.uint8),
        pulse_photons=np.concatenate(phots) if phots else np.zeros(0, np.uint8),
        events=EventTable.concat(events),
        clicks=None,
        four_state_bob=four_state_bob,
        meta={"seed": seed, "intensities": source.intensities.tolist()},
    )
    return apply_hardware_deadtime(log, dets)


# --- detector timing -----------------------------------------------------------


def _relative_efficiency(k, dead, prof):
    if k < 0:
        return 1.0
    if k < dead:
        return 0.0
    k -= dead
    return prof[k] if k < len(prof) else 1.0


def deadtime_filter_events(events: EventTable, dets) -> np.ndarray:
    """Boolean mask of candidate events that survive hardware deadtime."""
    n = len(events)
    keep = np.ones(n, bool)
    if n == 0 or not any(d.has_deadtime for d in dets):
        return keep
    dead = [d.dead_gates for d in dets]
    prof = [d.profile().tolist() for d in dets]
    cross = [d.crosslink_delay for d in dets]
    big = [d.recovery_gates for d in dets]
    start = [-(1 << 62), -(1 << 62)]
    slot = events.slot.tolist()
    det = events.detector.tolist()
    u = events.rec_u.tolist()
    i = 0
    while i < n:
        g = slot[i]
        j = i
        while j < n and slot[j] == g:
            j += 1
        fired = []
        for e in range(i, j):
            d = det[e]
            k = g - start[d]
            r = 1.0 if k >= big[d] else _relative_efficiency(k, dead[d], prof[d])
            if u[e] < r:
                fired.append(d)
            else:
                keep[e] = False
        if fired:
            for d in (0, 1):
                if d in fired:
                    start[d] = g + 1
                else:
                    start[d] = g + cross[d] + 1
        i = j
    return keep


def build_clicks(events: EventTable) -> ClickTable:
    """Collapse accepted events to one click row per slot."""
    if len(events) == 0:
        z8 = np.zeros(0, np.int8)
        return ClickTable(np.zeros(0, np.int64), z8, z8, z8, z8, z8, z8)
    slots, first, counts = np.unique(events.slot, return_index=True, return_counts=True)
    double = counts > 1
    det = events.detector[first].copy()
    swap = events.swap[first]
    coin = events.coin[first]
    bob_bit = (det ^ swap).astype(np.int8)
    bob_bit[double] = coin[double]
    det[double] = bob_bit[double] ^ swap[double]
    kind = events.kind[first].copy()
    if double.any():
        # a double click counts as dark only if both firings were dark
        second_kind = events.kind[first[double] + 1]
        kind[double] = np.where(second_kind == KIND_DARK, kind[double], second_kind)
    flag = np.where(double, FLAG_DOUBLE, np.where(kind == KIND_DARK, FLAG_DARK, FLAG_SINGLE)).astype(np.int8)
    return ClickTable(slots, det, events.bob_basis[first], swap, bob_bit, flag, kind)


def apply_hardware_deadtime(log: SessionLog, detectors) -> SessionLog:
    """Drop candidate events that fall into a detector's dead or recovering period.

    A click at gate ``g`` makes its own detector dead from ``g + 1`` and the
    partner from ``g + crosslink_delay + 1``; relative efficiency then follows
    the recovery profile. Events are compared with a stored uniform, so the
    result is deterministic.
    """
    dets = _as_pair(detectors)
    keep = deadtime_filter_events(log.events, dets)
    events = log.events.take(keep)
    return replace(log, events=events, clicks=build_clicks(events))


def software_deadtime_filter(log: SessionLog, n_gates: int) -> SessionLog:
    """Discard clicks fewer than ``n_gates`` after the previous click.

    The previous click counts whether it was kept or discarded, so a burst of
    clicks keeps renewing the discard window.
    """
    if n_gates < 0:
        raise ValueError("window must be >= 0 gates")
    keep = software_filter_mask(log.clicks.slot, n_gates)
    return log.with_clicks(log.clicks.take(keep), software_filter_gates=int(n_gates))


def software_filter_mask(slots, n_gates) -> np.ndarray:
    slots = np.asarray(slots, dtype=np.int64)
    keep = np.ones(len(slots), bool)
    if len(slots) > 1:
        keep[1:] = np.diff(slots) >= n_gates
    return keep


# --- closed forms --------------------------------------------------------------


def expected_rates(source: SourceConfig, channel: ChannelConfig, detectors, four_state_bob=False) -> dict:
    """Exact per-pulse probabilities for a link without deadtime.

    Returns arrays over the three intensities: ``gain`` (any click),
    ``sifted`` (click with matching bases) and ``sifted_error`` (matching
    bases and Bob's bit differs from Alice's), plus ``single_photon_gain``
    (a one-photon pulse that clicks).
    """
    d0, d1 = _as_pair(detectors)
    t, e = channel.transmittance, channel.misalignment
    swaps = (0, 1) if four_state_bob else (0,)
    out = {k: np.zeros(3) for k in ("gain", "sifted", "sifted_error", "single_photon_gain")}
    for i, a in enumerate(source.intensities):
        for matched in (True, False):
            pi_right, pi_wrong = (1 - e, e) if matched else (0.5, 0.5)
            for s in swaps:
                for b in (0, 1):
                    w = 0.5 * 0.5 / len(swaps)
                    right = b ^ s
                    lam = {right: a * t * pi_right, 1 - right: a * t * pi_wrong}
                    dets = (d0, d1)
                    c = [1 - (1 - dets[d].dark_prob) * math.exp(-lam[d] * dets[d].efficiency) for d in (0, 1)]
                    cr, cw = c[right], c[1 - right]
                    any_click = 1 - (1 - cr) * (1 - cw)
                    out["gain"][i] += w * any_click
                    if matched:
                        out["sifted"][i] += w * any_click
                        out["sifted_error"][i] += w * (cw * (1 - cr) + 0.5 * cr * cw)
                    # single photon: exactly one photon emitted, P(n=1) = a e^-a
                    p1 = a * math.exp(-a)
                    q = [dets[d].efficiency * t * (pi_right if d == right else pi_wrong) for d in (0, 1)]
                    nd = [(1 - dets[d].dark_prob) for d in (0, 1)]
                    no_click_1 = nd[0] * nd[1] * (1 - q[0] - q[1])
                    out["single_photon_gain"][i] += w * p1 * (1 - no_click_1)
    return out


# --- import / export -----------------------------------------------------------

_CLICK_COLUMNS = ("train", "slot", "detector", "basis", "bit", "flag", "swap")
_PULSE_COLUMNS = ("train", "slot", "basis", "bit", "intensity", "photons")


def export_csv(log: SessionLog, directory: str | Path) -> tuple[Path, Path]:
    """Write ``clicks.csv`` and ``pulses.csv``; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    L = log.train_length
    c = log.clicks
    cpath = directory / "clicks.csv"
    with cpath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CLICK_COLUMNS)
        for s, d, bb, bit, fl, sw in zip(c.slot.tolist(), c.detector.tolist(), c.bob_basis.tolist(),
                                        c.bob_bit.tolist(), c.flag.tolist(), c.swap.tolist()):
            w.writerow((s // L, s % L, d, bb, bit, FLAG_NAMES[fl], sw))
    ppath = directory / "pulses.csv"
    slots = log.pulse_slots
    with ppath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_PULSE_COLUMNS)
        for s, b, bit, it, ph in zip(slots.tolist(), log.alice_basis.tolist(), log.alice_bit.tolist(),
                                      log.intensity.tolist(), log.pulse_photons.tolist()):
            w.writerow((s // L, s % L, b, bit, INTENSITY_NAMES[it], ph))
    return cpath, ppath


def read_csv(directory: str | Path, train_length: int, extra_sent=(0, 0, 0), four_state_bob=False) -> SessionLog:
    """Rebuild a log from ``export_csv`` output.

    CSV logs keep only accepted clicks, so the candidate-event table is
    reconstructed from them.
    """
    directory = Path(directory)
    try:
        pulses = np.genfromtxt(directory / "pulses.csv", delimiter=",", names=True, dtype=None, encoding="utf-8")
        clicks = np.genfromtxt(directory / "clicks.csv", delimiter=",", names=True, dtype=None, encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(str(exc)) from exc
    pulses, clicks = np.atleast_1d(pulses), np.atleast_1d(clicks)
    pslot = pulses["train"].astype(np.int64) * train_length + pulses["slot"]
    it = np.array([INTENSITY_NAMES.index(x) for x in pulses["intensity"]], np.uint8)
    code = (it << 2) | (pulses["basis"].astype(np.uint8) << 1) | pulses["bit"].astype(np.uint8)
    dense = len(pslot) == 0 or (pslot[0] == 0 and np.all(np.diff(pslot) == 1))
    n_slots = int(pslot[-1]) + 1 if len(pslot) else 0
    if len(clicks):
        cslot = clicks["train"].astype(np.int64) * train_length + clicks["slot"]
        flag = np.array([FLAG_NAMES.index(x) for x in clicks["flag"]], np.int8)
        kind = np.where(flag == FLAG_DARK, KIND_DARK, KIND_PHOTON).astype(np.int8)
        table = ClickTable(cslot, clicks["detector"].astype(np.int8), clicks["basis"].astype(np.int8),
                           clicks["swap"].astype(np.int8), clicks["bit"].astype(np.int8), flag, kind)
    else:
        table = build_clicks(EventTable.empty())
    events = EventTable(table.slot, table.detector, table.kind, np.zeros(len(table)), table.bob_basis,
                        table.swap, table.bob_bit)
    return SessionLog(
        train_length=train_length, n_slots=max(n_slots, train_length * -(-n_slots // train_length)),
        pulse_code=code.astype(np.uint8), pulse_photons=pulses["photons"].astype(np.uint8),
        events=events, clicks=table, pulse_slot=None if dense else pslot,
        extra_sent=np.asarray(extra_sent, np.int64), four_state_bob=four_state_bob,
    )


def save_log(log: SessionLog, path: str | Path) -> Path:
    """Compact binary form (numpy ``.npz``) preserving every field."""
    path = Path(path)
    arrays = {f"ev_{f}": getattr(log.events, f) for f in EventTable._fields}
    arrays.update({f"ck_{f}": getattr(log.clicks, f) for f in ClickTable._fields})
    arrays.update(
        pulse_code=log.pulse_code, pulse_photons=log.pulse_photons, extra_sent=log.extra_sent,
        header=np.array([log.train_length, log.n_slots, int(log.four_state_bob), int(log.pulse_slot is not None)]),
    )
    if log.pulse_slot is not None:
        arrays["pulse_slot"] = log.pulse_slot
    with path.open("wb") as fh:
        np.savez_compressed(fh, **arrays)
    return path


def load_log(path: str | Path) -> SessionLog:
    try:
        z = np.load(Path(path))
    except (OSError, ValueError) as exc:
        raise ConfigInvalid(f"cannot read session log {path}: {exc}") from exc
    with z:
        L, n_slots, fsb, sparse = (int(x) for x in z["header"])
        return SessionLog(
            train_length=L, n_slots=n_slots, pulse_code=z["pulse_code"], pulse_photons=z["pulse_photons"],
            events=EventTable(*(z[f"ev_{f}"] for f in EventTable._fields)),
            clicks=ClickTable(*(z[f"ck_{f}"] for f in ClickTable._fields)),
            pulse_slot=z["pulse_slot"] if sparse else None, extra_sent=z["extra_sent"], four_state_bob=bool(fsb),
        )

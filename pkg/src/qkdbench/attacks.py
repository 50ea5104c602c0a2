"""Detector-side attacks on the simulated link.

Two strategies are modelled:

* faked-state: Eve blinds Bob's detectors, measures Alice's pulses at
  Alice's doorstep in a random basis and resends bright trigger pulses that
  can only click the detector matching her result;
* deadtime exploit: Eve fires one detector with a bright pulse and lets
  Alice's pulses through only while the partner is still live, so every
  click in that window reveals Alice's bit.

Each attack returns the attacked :class:`~qkdbench.linksim.SessionLog` and
an :class:`AttackMetrics` record. Eve's agreement is scored against Alice's
sifted signal bits, the reference raw key of the session.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid
from .linksim import (
    KIND_BRIGHT,
    KIND_DARK,
    KIND_PHOTON,
    ChannelConfig,
    EventTable,
    SessionLog,
    SourceConfig,
    _as_pair,
    _train_rngs,
    apply_hardware_deadtime,
    choose_intensity,
    detect_bright,
    expected_rates,
    route_photons,
    run_session,
    software_deadtime_filter,
)

ATTACK_KINDS = ("none", "faked_state", "deadtime_exploit")


@dataclass(frozen=True)
class AttackConfig:
    """Parameters of one attack run.

    ``trigger_energy_j`` defaults to twice the detector's E_never.
    ``eve_efficiency`` is Eve's intercept detection efficiency; with
    ``rate_compensation`` it is solved for so that Bob's signal gain matches
    the honest link. ``window_gates`` defaults to the crosslink delay and
    ``cycle_gates`` to the time both detectors need to recover fully.
    """

    kind: str = "none"
    eve_position_loss_db: float = 0.0
    blinding_power_w: float = 250e-6
    trigger_energy_j: float | None = None
    eve_efficiency: float = 1.0
    rate_compensation: bool = False
    window_gates: int | None = None
    cycle_gates: int | None = None
    software_filter_gates: int | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigInvalid(f"attack kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.eve_position_loss_db < 0:
            raise ConfigInvalid("eve_position_loss_db must be >= 0")
        if not 0.0 <= self.eve_efficiency <= 1.0:
            raise ConfigInvalid("eve_efficiency must lie in [0, 1]")
        if self.trigger_energy_j is not None and self.trigger_energy_j < 0:
            raise ConfigInvalid("trigger energy must be >= 0")
        if self.kind != "faked_state" and self.rate_compensation:
            raise ConfigInvalid("rate_compensation applies to the faked-state attack only")
        for name in ("window_gates", "cycle_gates", "software_filter_gates"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigInvalid(f"{name} must be >= 0")


@dataclass(frozen=True)
class AttackMetrics:
    eve_bit_agreement: float
    induced_qber: float
    detection_rate_ratio: float
    dark_rate_under_attack: float
    n_key_bits: int
    detection_per_intercept: float | None = None
    eve_efficiency: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def agreement_sigma(self) -> float:
        """Standard error of the agreement under the no-information hypothesis."""
        return 0.5 / math.sqrt(self.n_key_bits) if self.n_key_bits else math.inf

    @property
    def agreement_excess_sigmas(self) -> float:
        return (self.eve_bit_agreement - 0.5) / self.agreement_sigma if self.n_key_bits else 0.0

    def as_record(self) -> dict:
        rec = {
            "eve_bit_agreement": self.eve_bit_agreement,
            "induced_qber": self.induced_qber,
            "detection_rate_ratio": self.detection_rate_ratio,
            "dark_rate_under_attack": self.dark_rate_under_attack,
            "n_key_bits": self.n_key_bits,
            "agreement_sigma": self.agreement_sigma,
            "detection_per_intercept": self.detection_per_intercept,
            "eve_efficiency": self.eve_efficiency,
        }
        rec.update(self.extras)
        return rec


def _honest_gain(source, channel, dets, four_state_bob):
    return float(np.dot(source.probabilities, expected_rates(source, channel, dets, four_state_bob)["gain"]))


def sifted_signal(log: SessionLog):
    """Slots, Alice bits and Bob bits of matched-basis signal clicks."""
    c = log.clicks
    idx = log.pulse_index(c.slot)
    keep = (log.intensity[idx] == 0) & (log.alice_basis[idx] == c.bob_basis)
    return c.slot[keep], log.alice_bit[idx[keep]], c.bob_bit[keep]


def score(log: SessionLog, eve_slot, eve_bit, honest_gain, **kw) -> AttackMetrics:
    """Agreement of Eve's per-slot guesses with Alice's sifted signal bits.

    Slots where Eve has no guess count as a guess of 0, which is uninformative
    against Alice's uniform bits.
    """
    slots, a_bits, b_bits = sifted_signal(log)
    guess = np.zeros(len(slots), np.int8)
    if len(eve_slot):
        pos = np.searchsorted(eve_slot, slots)
        pos_c = np.minimum(pos, len(eve_slot) - 1)
        hit = eve_slot[pos_c] == slots
        guess[hit] = eve_bit[pos_c[hit]]
    n = len(slots)
    n_pulses = int(log.sent_counts().sum())
    gain = len(log.clicks) / n_pulses if n_pulses else 0.0
    return AttackMetrics(
        eve_bit_agreement=float(np.mean(guess == a_bits)) if n else 0.5,
        induced_qber=float(np.mean(a_bits != b_bits)) if n else 0.0,
        detection_rate_ratio=gain / honest_gain if honest_gain > 0 else math.inf,
        dark_rate_under_attack=float(np.count_nonzero(log.clicks.kind == KIND_DARK)) / max(log.n_slots, 1),
        n_key_bits=n,
        **kw,
    )


# --- faked-state ---------------------------------------------------------------


def resend_click_probability(dets, energy_j, blinding_power_w) -> float:
    """Probability that one resent trigger pulse produces a click at Bob.

    Averaged over Bob's basis matching Eve's (full energy on one detector) or
    not (half the energy on each).
    """
    d0, d1 = dets
    full = 0.5 * (detect_bright(energy_j, d0, blinding_power_w) + detect_bright(energy_j, d1, blinding_power_w))
    h0 = detect_bright(energy_j / 2, d0, blinding_power_w)
    h1 = detect_bright(energy_j / 2, d1, blinding_power_w)
    half = 1 - (1 - h0) * (1 - h1)
    return 0.5 * full + 0.5 * half


def compensating_efficiency(source, channel, detectors, cfg: AttackConfig, four_state_bob=False) -> float:
    """Eve's intercept efficiency that reproduces the honest signal gain.

    Solves ``(1 - exp(-mu * eta_E * t_E)) * c = Q_mu`` where ``c`` is the
    click probability per resent pulse. Returns 1 when Eve cannot reach the
    honest gain even with a perfect detector.
    """
    dets = _as_pair(detectors)
    energy = cfg.trigger_energy_j if cfg.trigger_energy_j is not None else 2 * dets[0].e_never_j
    c = resend_click_probability(dets, energy, cfg.blinding_power_w)
    target = expected_rates(source, channel, tuple(d.ideal() for d in dets), four_state_bob)["gain"][0]
    t_e = 10 ** (-cfg.eve_position_loss_db / 10)
    if c <= target or t_e == 0:
        return 1.0
    eta = -math.log(1 - target / c) / (source.mu * t_e)
    return min(eta, 1.0)


def _faked_state_train(source, dets, cfg, energy, eta_e, four_state_bob, rng, offset, L):
    intensity = choose_intensity(source, rng, L)
    basis = rng.integers(0, 2, L, dtype=np.uint8)
    bit = rng.integers(0, 2, L, dtype=np.uint8)
    photons = rng.poisson(source.intensities[intensity])
    t_e = 10 ** (-cfg.eve_position_loss_db / 10)
    # ideal threshold measurement by Eve: detects iff at least one photon registers
    seen = rng.binomial(photons, eta_e * t_e) > 0
    eve_basis = rng.integers(0, 2, L, dtype=np.uint8)
    coin = rng.integers(0, 2, L, dtype=np.uint8)
    eve_bit = np.where(eve_basis == basis, bit, coin).astype(np.int8)
    bob_basis = rng.integers(0, 2, L, dtype=np.int8)
    swap = rng.integers(0, 2, L, dtype=np.int8) if four_state_bob else np.zeros(L, np.int8)

    idx = np.flatnonzero(seen)
    matched = bob_basis[idx] == eve_basis[idx]
    target_det = eve_bit[idx] ^ swap[idx]
    slots, detn = [], []
    for d in (0, 1):
        e_d = np.where(matched, np.where(target_det == d, energy, 0.0), energy / 2)
        p = detect_bright(e_d, dets[d], cfg.blinding_power_w)
        fired = rng.random(len(idx)) < p
        slots.append(idx[fired])
        detn.append(np.full(int(fired.sum()), d, np.int8))
    ev_slot = np.concatenate(slots)
    ev = EventTable(
        ev_slot, np.concatenate(detn), np.full(len(ev_slot), KIND_BRIGHT, np.int8), rng.random(len(ev_slot)),
        bob_basis[ev_slot], swap[ev_slot], rng.integers(0, 2, len(ev_slot), dtype=np.int8),
    ).sorted()
    ev.slot = ev.slot + offset
    code = ((intensity << 2) | (basis << 1) | bit).astype(np.uint8)
    return code, np.minimum(photons, 255).astype(np.uint8), ev, idx + offset, eve_bit[idx]


def faked_state_attack(
    source: SourceConfig,
    channel: ChannelConfig,
    detectors,
    cfg: AttackConfig,
    n_trains: int,
    seed: int,
    four_state_bob: bool = False,
) -> tuple[SessionLog, AttackMetrics]:
    """Intercept-resend with bright trigger pulses on blinded detectors.

    Blinded detectors have no dark counts. Eve's resent energy ``E`` lands
    entirely on one detector when Bob's basis matches hers and splits in
    half otherwise; click probabilities follow :func:`detect_bright`.
    """
    dets = _as_pair(detectors)
    for d in dets:
        detect_bright(0.0, d, cfg.blinding_power_w)  # raises NotBlinded
    energy = cfg.trigger_energy_j if cfg.trigger_energy_j is not None else 2 * dets[0].e_never_j
    eta_e = compensating_efficiency(source, channel, dets, cfg, four_state_bob) if cfg.rate_compensation else cfg.eve_efficiency
    L = source.train_length
    codes, phots, events, eslots, ebits = [], [], [], [], []
    for k, rng in enumerate(_train_rngs(seed, n_trains)):
        c, p, ev, es, eb = _faked_state_train(source, dets, cfg, energy, eta_e, four_state_bob, rng, k * L, L)
        codes.append(c)
        phots.append(p)
        events.append(ev)
        eslots.append(es)
        ebits.append(eb)
    log = SessionLog(
        train_length=L, n_slots=n_trains * L,
        pulse_code=np.concatenate(codes), pulse_photons=np.concatenate(phots),
        events=EventTable.concat(events), clicks=None, four_state_bob=four_state_bob,
        meta={"seed": seed, "attack": "faked_state"},
    )
    log = apply_hardware_deadtime(log, dets)
    if cfg.software_filter_gates is not None:
        log = software_deadtime_filter(log, cfg.software_filter_gates)
    eve_slot = np.concatenate(eslots)
    n_int = len(eve_slot)
    metrics = score(
        log, eve_slot, np.concatenate(ebits), _honest_gain(source, channel, tuple(d.ideal() for d in dets), four_state_bob),
        detection_per_intercept=len(log.clicks) / n_int if n_int else 0.0,
        eve_efficiency=eta_e,
    )
    return log, metrics


# --- deadtime exploit ----------------------------------------------------------


def vulnerable_window(detectors) -> int:
    """Gates after a click during which only the partner detector is live."""
    return max(d.crosslink_delay for d in _as_pair(detectors))


def _deadtime_chunk(source, channel, dets, four_state_bob, rng, c0, n, P, W):
    g0 = (c0 + np.arange(n, dtype=np.int64)) * P
    forced = rng.integers(0, 2, n, dtype=np.int8)
    window = (g0[:, None] + 1 + np.arange(W, dtype=np.int64)).ravel()
    win_cycle = np.repeat(np.arange(n), W)
    span0, span = g0[0], n * P
    darks = []
    for d in dets:
        k = rng.binomial(span, d.dark_prob) if d.dark_prob > 0 else 0
        darks.append(span0 + np.sort(rng.choice(span, size=k, replace=False)).astype(np.int64) if k else np.zeros(0, np.int64))
    rec = np.unique(np.concatenate([g0, window, *darks]))
    m = len(rec)
    intensity = choose_intensity(source, rng, m)
    basis = rng.integers(0, 2, m, dtype=np.uint8)
    bit = rng.integers(0, 2, m, dtype=np.uint8)
    photons = rng.poisson(source.intensities[intensity])
    bob_basis = rng.integers(0, 2, m, dtype=np.int8)
    swap = rng.integers(0, 2, m, dtype=np.int8) if four_state_bob else np.zeros(m, np.int8)

    # Alice's pulses inside the window reach Bob untouched
    wi = np.searchsorted(rec, window)
    arrive = rng.binomial(photons[wi], channel.transmittance)
    matched = basis[wi] == bob_basis[wi]
    n0, n1 = route_photons(arrive, matched, bit[wi], swap[wi], channel.misalignment, rng)
    ev_slots, ev_det, ev_kind = [g0], [forced], [np.full(n, KIND_BRIGHT, np.int8)]
    for d, n_d in ((0, n0), (1, n1)):
        fired = rng.random(len(n_d)) < 1 - (1 - dets[d].efficiency) ** n_d
        ph = window[fired]
        dk = np.setdiff1d(darks[d], np.concatenate([ph, g0[forced == d]]))
        ev_slots += [ph, dk]
        ev_det += [np.full(len(ph), d, np.int8), np.full(len(dk), d, np.int8)]
        ev_kind += [np.full(len(ph), KIND_PHOTON, np.int8), np.full(len(dk), KIND_DARK, np.int8)]
    es = np.concatenate(ev_slots)
    ri = np.searchsorted(rec, es)
    ev = EventTable(
        es, np.concatenate(ev_det), np.concatenate(ev_kind), rng.random(len(es)),
        bob_basis[ri], swap[ri], rng.integers(0, 2, len(es), dtype=np.int8),
    ).sorted()
    blocked = span - m
    extra = rng.multinomial(blocked, source.probabilities) if blocked > 0 else np.zeros(3, np.int64)
    # Eve's guess: the forced detector for the forcing click, its partner in the window
    guess_slot = np.concatenate([g0, window])
    guess_bit = np.concatenate([forced, 1 - forced[win_cycle]]).astype(np.int8)
    code = ((intensity << 2) | (basis << 1) | bit).astype(np.uint8)
    return rec, code, np.minimum(photons, 255).astype(np.uint8), ev, extra, guess_slot, guess_bit


def deadtime_attack(
    source: SourceConfig,
    channel: ChannelConfig,
    detectors,
    cfg: AttackConfig,
    n_cycles: int,
    seed: int,
    four_state_bob: bool = False,
    chunk_cycles: int = 20000,
) -> tuple[SessionLog, AttackMetrics]:
    """Force one detector into deadtime and harvest the partner's clicks.

    Each cycle Eve fires a random detector ``a`` at gate ``g0`` with a bright
    pulse, passes Alice's pulses at gates ``g0+1 .. g0+W`` and blocks the
    rest until both detectors have recovered. A matched-basis click from the
    partner means Alice sent bit ``1 - a`` (without four-state Bob), which
    is Eve's guess; for the forcing click she guesses ``a``.
    """
    dets = _as_pair(detectors)
    W = cfg.window_gates if cfg.window_gates is not None else vulnerable_window(dets)
    P = cfg.cycle_gates if cfg.cycle_gates is not None else max(d.recovery_gates for d in dets) + W + 1
    if P < W + 1:
        raise ConfigInvalid("cycle must be longer than the window")
    parts = []
    seeds = np.random.SeedSequence(seed).spawn(-(-n_cycles // chunk_cycles) if n_cycles else 0)
    for j, ss in enumerate(seeds):
        c0 = j * chunk_cycles
        n = min(chunk_cycles, n_cycles - c0)
        parts.append(_deadtime_chunk(source, channel, dets, four_state_bob, np.random.default_rng(ss), c0, n, P, W))
    cat = lambda i, dt: np.concatenate([p[i] for p in parts]) if parts else np.zeros(0, dt)  # noqa: E731
    log = SessionLog(
        train_length=source.train_length,
        n_slots=n_cycles * P,
        pulse_code=cat(1, np.uint8),
        pulse_photons=cat(2, np.uint8),
        events=EventTable.concat([p[3] for p in parts]),
        clicks=None,
        pulse_slot=cat(0, np.int64),
        extra_sent=sum((p[4] for p in parts), np.zeros(3, np.int64)),
        four_state_bob=four_state_bob,
        meta={"seed": seed, "attack": "deadtime_exploit", "cycle_gates": P, "window_gates": W},
    )
    log = apply_hardware_deadtime(log, dets)
    if cfg.software_filter_gates is not None:
        log = software_deadtime_filter(log, cfg.software_filter_gates)
    gs, gb = cat(5, np.int64), cat(6, np.int8)
    order = np.argsort(gs, kind="stable")
    honest = _honest_gain(source, channel, tuple(d.ideal() for d in dets), four_state_bob)
    metrics = score(log, gs[order], gb[order], honest, extras={"window_gates": W, "cycle_gates": P})
    return log, metrics


def run_attack(source, channel, detectors, cfg: AttackConfig, n_trains: int, seed: int, four_state_bob=False):
    """Dispatch on ``cfg.kind``; ``none`` runs the honest link.

    For the deadtime exploit ``n_trains`` counts attack cycles.
    """
    dets = _as_pair(detectors)
    if cfg.kind == "faked_state":
        return faked_state_attack(source, channel, dets, cfg, n_trains, seed, four_state_bob)
    if cfg.kind == "deadtime_exploit":
        return deadtime_attack(source, channel, dets, cfg, n_trains, seed, four_state_bob)
    log = run_session(source, channel, dets, n_trains, seed, four_state_bob)
    if cfg.software_filter_gates is not None:
        log = software_deadtime_filter(log, cfg.software_filter_gates)
    honest = _honest_gain(source, channel, tuple(d.ideal() for d in dets), four_state_bob)
    return log, score(log, np.zeros(0, np.int64), np.zeros(0, np.int8), honest)

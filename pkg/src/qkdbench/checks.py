"""Golden-number and property checks behind ``qkdbench --check``.

Each criterion returns a :class:`CheckResult`. Tolerances are module
constants so the suite and the test-suite share one pinned set. Oracles
here are written independently of the library routes they check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import risk
from .attacks import AttackConfig, deadtime_attack, faked_state_attack, sifted_signal
from .lossbudget import InjectionScenario, evaluate, load_catalog, photons_per_pulse
from .linksim import (
    ChannelConfig,
    DetectorModel,
    SourceConfig,
    detect_bright,
    expected_rates,
    run_session,
)
from .postproc import ProtocolConfig, process_block, session_block
from .postproc.amplification import privacy_amplify
from .postproc.budget import epsilon_budget
from .postproc.estimation import (
    decoy_bounds,
    quantile,
    single_photon_bits_lower,
    vacuum_errors_lower,
)
from .postproc.hashing import Q as HASH_PRIME
from .postproc.hashing import epsilon_collision, polyhash
from .postproc.sifting import BlockAssembler

REL_TOL_BUDGET = 0.10
REL_TOL_PHOTONS_IN = 0.05
ABS_TOL_LOSS_DB = 0.01
EPS_COL_RANGE = (2.4e-11, 2.5e-11)
EPS_TOTAL_MAX = 3e-11
RATIO_TOL_PP = 1.0
MIN_CLICKS_MISMATCH = 100_000
FAKED_QBER_MAX = 0.005
FAKED_DETECTION = (0.5, 0.01)
FAKED_RATE_TOL = 0.05
DEADTIME_MIN_SIGMAS = 10.0
DEADTIME_MIN_BITS = 100_000
DEADTIME_NULL_SIGMAS = 3.0
COVERAGE_EPS_DECOY = 0.07
COVERAGE_MIN_BLOCKS = 10_000
E2E_SEEDS = 100
ORACLE_INSTANCES = 1000


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>2} {self.name}: {self.detail}"


def _close(value, target, rel):
    return abs(value - target) <= rel * abs(target)


def _budget_rows(catalog_name, rows):
    cat = load_catalog(catalog_name)
    out, ok = [], True
    for path, target_db, field, target, tol in rows:
        res = evaluate(InjectionScenario(cat.paths[path], cat.wavelength_nm))
        value = res.mean_photons_out if field == "I" else res.delivered_power_w
        good = True
        if target_db is not None:
            good &= _close(res.total_loss_db, target_db, REL_TOL_BUDGET)
        good &= _close(value, target, tol)
        ok &= good
        out.append(f"{path} {res.total_loss_db:.2f} dB {field}={value:.3g}{'' if good else ' (want ' + format(target, '.3g') + ')'}")
    return ok, "; ".join(out)


def check_loss_budget() -> CheckResult:
    cat = load_catalog("table2")
    alpha = evaluate(InjectionScenario(cat.paths["trojan_alice"], cat.wavelength_nm)).total_loss_db
    i_in = photons_per_pulse(100.0, 312.5e6, 1548.51)
    ok = abs(alpha - 172.15) <= ABS_TOL_LOSS_DB and _close(i_in, 2.5e12, REL_TOL_PHOTONS_IN)
    rows_ok, detail = _budget_rows("table2", [
        ("trojan_alice", 172.15, "I", 1.5e-5, REL_TOL_BUDGET),
        ("seeding_l1", 123.7, "W", 40e-12, REL_TOL_BUDGET),
        ("power_meter", 98.5, "W", 14e-9, REL_TOL_BUDGET),
        ("photorefraction_pm1", 118.5, "W", 141e-12, REL_TOL_BUDGET),
        ("photorefraction_im", 121.0, "W", 79e-12, REL_TOL_BUDGET),
    ])
    return CheckResult(1, "loss-budget golden numbers", ok and rows_ok, f"I_in={i_in:.3g}; {detail}")


def check_broadband() -> CheckResult:
    ok, detail = _budget_rows("broadband_worstcase", [
        ("trojan_alice", 243.0, "I", 1.25e-12, REL_TOL_BUDGET),
        ("seeding_l1", None, "W", 0.63e-12, REL_TOL_BUDGET),
        ("power_meter", None, "W", 0.2e-9, REL_TOL_BUDGET),
        ("photorefraction_pm1", None, "W", 1.8e-12, REL_TOL_BUDGET),
        ("photorefraction_im", None, "W", 1.0e-12, REL_TOL_BUDGET),
    ])
    return CheckResult(2, "alternate-wavelength loss budget", ok, detail)


def check_risk_grades() -> CheckResult:
    want = risk.published_grades()
    got = {r.id: r.grade for r in risk.seed_records()}
    bad = sorted(k for k in want if got.get(k) != want[k])
    ok = len(want) == 15 and set(got) == set(want) and not bad
    return CheckResult(3, "risk grades", ok, f"{len(want) - len(bad)}/{len(want)} grades match" + (f"; mismatched {bad}" if bad else ""))


def check_epsilon() -> CheckResult:
    e_col = epsilon_collision(1_360_000)
    total = epsilon_budget(1e-12, e_col, 1e-12).eps
    ok = EPS_COL_RANGE[0] <= e_col <= EPS_COL_RANGE[1] and total < EPS_TOTAL_MAX
    return CheckResult(4, "epsilon accounting", ok, f"eps_col={e_col:.4g}, eps={total:.4g}")


def _mismatch_dets():
    base = dict(dark_prob=1e-6, deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)
    return DetectorModel(efficiency=0.09, **base), DetectorModel(efficiency=0.11, **base)


def check_static_mismatch(n_trains=4, seed=5) -> CheckResult:
    src, ch = SourceConfig(), ChannelConfig(0.0, 0.0)
    parts, ok = [], True
    for four in (False, True):
        log = run_session(src, ch, _mismatch_dets(), n_trains, seed, four_state_bob=four)
        det = log.clicks.detector
        # share of detector 0 among clicks; with four-state Bob the bit value
        # replaces the physical detector
        ref = log.clicks.bob_bit if four else det
        share = 100.0 * np.count_nonzero(ref == 0) / len(ref)
        target = 50.0 if four else 45.0
        good = abs(share - target) <= RATIO_TOL_PP and len(ref) >= MIN_CLICKS_MISMATCH
        ok &= good
        label = "bit 0 share (four-state)" if four else "detector 0 share"
        parts.append(f"{label} {share:.2f}% over {len(ref)} clicks")
    return CheckResult(5, "static efficiency mismatch", ok, "; ".join(parts))


def check_faked_state(n_trains=10, seed=7) -> CheckResult:
    src, ch = SourceConfig(), ChannelConfig(10.0, 0.01)
    d = DetectorModel(deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)
    _, m = faked_state_attack(src, ch, (d, d), AttackConfig("faked_state"), n_trains, seed)
    log_c, mc = faked_state_attack(src, ch, (d, d), AttackConfig("faked_state", rate_compensation=True), n_trains, seed + 1)
    honest_sifted = src.p_mu * expected_rates(src, ch, (d.ideal(), d.ideal()))["sifted"][0] * log_c.n_slots
    rate = len(sifted_signal(log_c)[0]) / honest_sifted
    ok = (
        m.induced_qber <= FAKED_QBER_MAX
        and abs(m.detection_per_intercept - FAKED_DETECTION[0]) <= FAKED_DETECTION[1]
        and m.dark_rate_under_attack == 0.0
        and mc.induced_qber <= FAKED_QBER_MAX
        and abs(rate - 1) <= FAKED_RATE_TOL
    )
    return CheckResult(6, "faked-state attack", ok,
                       f"QBER={m.induced_qber:.4f}, clicks/intercept={m.detection_per_intercept:.4f}, dark={m.dark_rate_under_attack:g}, "
                       f"compensated sifted/honest={rate:.3f}")


def min_retained_gap(slots) -> float:
    """Smallest gap between consecutive clicks, hence between any two."""
    s = np.sort(np.asarray(slots, dtype=np.int64))
    return float(np.min(s[1:] - s[:-1])) if len(s) > 1 else math.inf


def check_deadtime(n_cycles=500_000, seed=11, filter_gates=None) -> CheckResult:
    src, ch = SourceConfig(), ChannelConfig(0.0, 0.01)
    d = DetectorModel()
    n_filter = filter_gates if filter_gates is not None else d.recovery_gates
    _, off = deadtime_attack(src, ch, (d, d), AttackConfig("deadtime_exploit"), n_cycles, seed)
    log_on, on = deadtime_attack(src, ch, (d, d), AttackConfig("deadtime_exploit", software_filter_gates=n_filter), n_cycles, seed)
    # exhaustive gap scan over every retained click
    gap = min_retained_gap(log_on.clicks.slot)
    ok = (
        off.n_key_bits >= DEADTIME_MIN_BITS
        and off.agreement_excess_sigmas >= DEADTIME_MIN_SIGMAS
        and abs(on.agreement_excess_sigmas) <= DEADTIME_NULL_SIGMAS
        and gap >= n_filter
    )
    return CheckResult(7, "deadtime attack and software filter", ok,
                       f"off: agreement={off.eve_bit_agreement:.4f} ({off.agreement_excess_sigmas:.1f} sigma, n={off.n_key_bits}); "
                       f"N={n_filter}: agreement={on.eve_bit_agreement:.4f} ({on.agreement_excess_sigmas:+.2f} sigma), min gap={gap:g}")


def coverage_run(n_blocks, block_length=1000, eps_decoy=COVERAGE_EPS_DECOY, seed=8, train_length=1_000_000):
    """Simulate blocks and count bound violations against simulator truth.

    Returns (blocks, m1 violations, E1 violations, either).
    """
    src = SourceConfig(train_length=train_length)
    ch = ChannelConfig(0.0, 0.02)
    d = DetectorModel(efficiency=0.5, dark_prob=1e-3, deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)
    z = quantile(eps_decoy)
    asm = BlockAssembler(block_length)
    n = v_m1 = v_e1 = v_any = 0
    chunk = 0
    while n < n_blocks:
        log = run_session(src, ch, (d, d), 1, [seed, chunk])
        chunk += 1
        for blk in asm.add(log):
            if n >= n_blocks:
                break
            n += 1
            b = decoy_bounds(blk.stats, z, src.mu, src.nu1, src.nu2)
            L = len(blk.alice)
            err = blk.alice != blk.bob
            one = blk.photons == 1
            m1_true = int(one.sum())
            e1_true = float(err[one].mean()) if m1_true else 0.0
            m1_l = single_photon_bits_lower(b.Q1_lower, b.Q_upper[0], L, z)
            m0_l = vacuum_errors_lower(blk.stats.sent[0], src.mu, b.Y0_lower, z)
            e1_u = max((L * err.mean() - m0_l) / m1_l, 0.0) if m1_l > 0 else math.inf
            bad_m1 = m1_true < m1_l
            bad_e1 = e1_true > e1_u
            v_m1 += bad_m1
            v_e1 += bad_e1
            v_any += bad_m1 or bad_e1
    return n, v_m1, v_e1, v_any


def check_coverage(n_blocks=COVERAGE_MIN_BLOCKS, block_length=1000, seed=8) -> CheckResult:
    n, v_m1, v_e1, v_any = coverage_run(n_blocks, block_length, seed=seed)
    eps = COVERAGE_EPS_DECOY
    limit = eps + 3 * math.sqrt(eps * (1 - eps) / n)
    frac = v_any / n
    ok = n >= min(n_blocks, COVERAGE_MIN_BLOCKS) and frac <= limit
    return CheckResult(8, "finite-key coverage", ok,
                       f"{n} blocks of {block_length}: m1 below bound {v_m1}, E1 above bound {v_e1}, "
                       f"either {frac:.4f} <= {limit:.4f}")


def dense_toeplitz(key, seed):
    """Explicit matrix route: T[i, j] = seed[i + j]."""
    key = np.asarray(key, dtype=np.int64)
    n, m = len(key), len(seed) - len(key) + 1
    T = np.array([[seed[i + j] for j in range(n)] for i in range(m)], dtype=np.int64)
    return (T @ key) % 2


def polyhash_oracle(k, bits) -> int:
    """Arbitrary-precision route: the padded bit string read as an integer."""
    s = "".join("1" if b else "0" for b in bits) + "1"
    s += "0" * ((-len(s)) % 49)
    acc = 0
    for i in range(0, len(s), 49):
        acc = (acc * k + int(s[i:i + 49], 2)) % HASH_PRIME
    return (acc * k + len(bits)) % HASH_PRIME


def check_end_to_end(n_seeds=E2E_SEEDS, n_oracle=ORACLE_INSTANCES, seed=9) -> CheckResult:
    src = SourceConfig(train_length=600_000)
    ch = ChannelConfig(0.0, 0.0)
    d = DetectorModel(efficiency=0.5, dark_prob=0.0, deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)
    cfg = ProtocolConfig(n_subblocks=1, apriori_qber=0.01)
    same = positive = 0
    for s in range(n_seeds):
        log = run_session(src, ch, (d, d), 1, [seed, s])
        res = process_block(session_block(log, cfg.subblock_length, 1), cfg, np.random.default_rng([seed, s]))
        positive += res.ok and res.l_sec > 0
        same += res.ok and np.array_equal(res.key_alice, res.key_bob)
    rng = np.random.default_rng(seed)
    pa_ok = hash_ok = 0
    for _ in range(n_oracle):
        n = int(rng.integers(1, 80))
        m = int(rng.integers(1, 40))
        key = rng.integers(0, 2, n, dtype=np.uint8)
        s = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
        pa_ok += np.array_equal(privacy_amplify(key, s), dense_toeplitz(key, s))
        bits = rng.integers(0, 2, int(rng.integers(0, 400)), dtype=np.uint8)
        k = int(rng.integers(0, HASH_PRIME))
        hash_ok += polyhash(k, bits) == polyhash_oracle(k, bits.tolist())
    ok = same == positive == n_seeds and pa_ok == hash_ok == n_oracle
    return CheckResult(9, "end-to-end correctness", ok,
                       f"identical keys {same}/{n_seeds} (l_sec>0 in {positive}); Toeplitz {pa_ok}/{n_oracle}; PolyHash {hash_ok}/{n_oracle}")


def check_monotone_sweep() -> CheckResult:
    from .scenario import load_scenario, sweep_lsec_vs_loss

    scn = load_scenario("honest_10db")
    s = sweep_lsec_vs_loss(scn, scn.sweeps.get("lsec_vs_loss", {}))
    y = s["y"]
    mono = all(b <= a for a, b in zip(y, y[1:]))
    ok = mono and bool(y) and y[-1] <= 0 and math.isfinite(s["x"][-1])
    return CheckResult(10, "l_sec against loss sweep", ok,
                       f"{len(y)} points, non-increasing={mono}, abort at {s['abort_loss_db']} dB, l_sec(0 dB)={y[0] if y else None}")


def blinding_sweep_monotone(d: DetectorModel | None = None, points=61) -> bool:
    d = d or DetectorModel()
    e = np.linspace(0, 2 * d.e_always_j, points)
    p = np.asarray(detect_bright(e, d, 250e-6))
    return bool(np.all(np.diff(p) >= 0) and p[0] == 0 and p[-1] == 1)


CRITERIA = {
    1: check_loss_budget,
    2: check_broadband,
    3: check_risk_grades,
    4: check_epsilon,
    5: check_static_mismatch,
    6: check_faked_state,
    7: check_deadtime,
    8: check_coverage,
    9: check_end_to_end,
    10: check_monotone_sweep,
}

_QUICK = {
    8: dict(n_blocks=1000),
    9: dict(n_seeds=10, n_oracle=100),
}


def run_all(quick: bool = False) -> list[CheckResult]:
    """Run every criterion; ``quick`` shrinks the sampled ones (thresholds unchanged)."""
    return [fn(**(_QUICK.get(i, {}) if quick else {})) for i, fn in CRITERIA.items()]


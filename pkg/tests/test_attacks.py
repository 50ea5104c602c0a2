import numpy as np
import pytest

from qkdbench.attacks import (
    AttackConfig,
    compensating_efficiency,
    deadtime_attack,
    faked_state_attack,
    resend_click_probability,
    run_attack,
    vulnerable_window,
)
from qkdbench.errors import ConfigInvalid, NotBlinded
from qkdbench.linksim import ChannelConfig, DetectorModel, SourceConfig, detect_bright, run_session
from qkdbench.postproc import ProtocolConfig, process_block, session_block

SRC = SourceConfig()
NODEAD = DetectorModel(deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)


def test_faked_state_full_control():
    _, m = faked_state_attack(SRC, ChannelConfig(10.0, 0.01), (NODEAD, NODEAD), AttackConfig("faked_state"), 4, 1)
    assert m.detection_per_intercept == pytest.approx(0.5, abs=0.01)
    assert m.induced_qber <= 0.005
    assert m.dark_rate_under_attack == 0.0
    assert m.eve_bit_agreement == 1.0


def test_faked_state_weak_trigger_matches_ramp():
    # E_always above 2 E_never: the mismatched-basis halves never fire and the
    # matched-basis pulse fires with the ramp value at 2 E_never
    d = DetectorModel(deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0, e_never_j=12e-15, e_always_j=30e-15)
    _, m = faked_state_attack(SRC, ChannelConfig(0.0), (d, d), AttackConfig("faked_state"), 2, 2)
    closed = 0.5 * detect_bright(24e-15, d, 250e-6)
    assert closed == pytest.approx(resend_click_probability((d, d), 24e-15, 250e-6))
    assert closed < 0.5
    assert m.detection_per_intercept == pytest.approx(closed, abs=0.005)


def test_faked_state_requires_blinding():
    with pytest.raises(NotBlinded):
        faked_state_attack(SRC, ChannelConfig(), (NODEAD, NODEAD), AttackConfig("faked_state", blinding_power_w=1e-6), 1, 0)


def test_rate_compensation_matches_honest_gain():
    ch = ChannelConfig(10.0, 0.01)
    eta = compensating_efficiency(SRC, ch, (NODEAD, NODEAD), AttackConfig("faked_state", rate_compensation=True))
    assert 0 < eta < 1
    _, m = faked_state_attack(SRC, ch, (NODEAD, NODEAD), AttackConfig("faked_state", rate_compensation=True), 10, 3)
    assert m.eve_efficiency == pytest.approx(eta)
    assert m.detection_rate_ratio == pytest.approx(1.0, abs=0.05)


def test_attacked_key_passes_estimation_yet_eve_knows_it():
    ch = ChannelConfig(10.0, 0.01)
    cfg = AttackConfig("faked_state", rate_compensation=True)
    log, m = faked_state_attack(SRC, ch, (NODEAD, NODEAD), cfg, 20, 4)
    prot = ProtocolConfig(subblock_length=8000, n_subblocks=1, reconciliation="oracle", apriori_qber=0.015)
    res = process_block(session_block(log, 8000, 1), prot, np.random.default_rng(0))
    # either the block aborts, or a key is issued while Eve agrees on every bit
    assert res.status == "aborted" or (res.l_sec > 0 and m.eve_bit_agreement > 0.99)


def test_vulnerable_window_is_crosslink_delay():
    assert vulnerable_window((DetectorModel(), DetectorModel())) == 2


def test_deadtime_exploit_without_and_with_filter():
    d = DetectorModel()
    ch = ChannelConfig(0.0, 0.01)
    _, off = deadtime_attack(SRC, ch, (d, d), AttackConfig("deadtime_exploit"), 500_000, 21)
    assert off.n_key_bits >= 100_000
    assert off.agreement_excess_sigmas >= 10
    # the filter must reach past the last vulnerable gate: N = W + 1 and above
    for n in (vulnerable_window((d, d)) + 1, d.recovery_gates):
        log, on = deadtime_attack(SRC, ch, (d, d), AttackConfig("deadtime_exploit", software_filter_gates=n), 500_000, 21)
        assert abs(on.agreement_excess_sigmas) <= 3
        assert np.all(np.diff(log.clicks.slot) >= n)


def test_no_window_no_one_detector_clicks():
    d = DetectorModel(crosslink_delay=0, recovery_end_s=3.4e-6)
    log, m = deadtime_attack(SRC, ChannelConfig(0.0), (d, d), AttackConfig("deadtime_exploit"), 20_000, 5)
    # every accepted click is a forcing click, none lands in the window after one
    period = m.extras["cycle_gates"]
    assert np.all(log.clicks.slot % period == 0)
    assert m.extras["window_gates"] == 0


def test_attack_is_deterministic_and_none_is_honest():
    ch = ChannelConfig(5.0, 0.01)
    a = run_attack(SRC, ch, (NODEAD, NODEAD), AttackConfig("faked_state"), 2, 9)[1]
    b = run_attack(SRC, ch, (NODEAD, NODEAD), AttackConfig("faked_state"), 2, 9)[1]
    assert a == b
    log, m = run_attack(SourceConfig(train_length=100_000), ch, (NODEAD, NODEAD), AttackConfig("none"), 2, 9)
    honest = run_session(SourceConfig(train_length=100_000), ch, (NODEAD, NODEAD), 2, 9)
    assert np.array_equal(log.clicks.slot, honest.clicks.slot)
    assert m.detection_rate_ratio == pytest.approx(1.0, abs=0.05)


def test_config_checks():
    with pytest.raises(ConfigInvalid):
        AttackConfig("teleport")
    with pytest.raises(ConfigInvalid):
        AttackConfig("deadtime_exploit", rate_compensation=True)

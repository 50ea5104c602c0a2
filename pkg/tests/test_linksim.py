import numpy as np
import pytest

from qkdbench.errors import NotBlinded
from qkdbench.linksim import (
    FLAG_NAMES,
    ChannelConfig,
    DetectorModel,
    EventTable,
    SourceConfig,
    deadtime_filter_events,
    detect_bright,
    detect_single_photon,
    expected_rates,
    export_csv,
    load_log,
    read_csv,
    run_session,
    sample_photon_number,
    save_log,
    software_deadtime_filter,
    software_filter_mask,
    thin,
)

IDEAL = DetectorModel(deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_photon_number_moments():
    assert not sample_photon_number(0.0, rng(), 1000).any()
    assert sample_photon_number(0.5, rng(), 10**6).mean() == pytest.approx(0.5, abs=0.002)


def test_thinning():
    n = np.full(10**6, 2)
    assert np.array_equal(thin(n, 1.0, rng()), n)
    assert not thin(n, 0.0, rng()).any()
    assert thin(n, 0.5, rng()).mean() == pytest.approx(1.0, abs=0.01)


def test_single_photon_detection():
    d = DetectorModel(efficiency=0.1, dark_prob=0.0)
    assert not detect_single_photon(np.zeros(1000, int), d, rng()).any()
    assert detect_single_photon(np.ones(1000, int), DetectorModel(efficiency=1.0), rng()).all()
    # 1 - (1 - 0.1)^2
    assert detect_single_photon(np.full(10**6, 2), d, rng()).mean() == pytest.approx(0.19, abs=0.005)


def test_blinded_response():
    d = DetectorModel()
    assert detect_bright(12e-15, d) == 0.0
    assert detect_bright(22e-15, d) == 1.0
    assert detect_bright(30e-15, d) == 1.0
    assert detect_bright(17e-15, d) == pytest.approx(0.5)
    e = np.linspace(0, 40e-15, 200)
    assert np.all(np.diff(detect_bright(e, d)) >= 0)
    with pytest.raises(NotBlinded):
        detect_bright(20e-15, d, incident_power_w=1e-6)


def test_default_deadtime_shape():
    d = DetectorModel()
    assert d.dead_gates == 1063
    assert d.recovery_gates == 1875
    assert d.profile()[-1] == 1.0 and np.all(np.diff(d.profile()) > 0)
    assert not d.ideal().has_deadtime


def test_config_validation():
    with pytest.raises(ValueError):
        SourceConfig(mu=0.1, nu1=0.1, nu2=0.01)
    with pytest.raises(ValueError):
        SourceConfig(p_mu=0.6)
    with pytest.raises(ValueError):
        ChannelConfig(-1.0)
    with pytest.raises(ValueError):
        DetectorModel(e_never_j=30e-15)
    with pytest.raises(ValueError):
        DetectorModel(recovery_profile=(0.2, 0.5))


def _events(slots, dets, u):
    n = len(slots)
    z = np.zeros(n, np.int8)
    return EventTable(np.asarray(slots, np.int64), np.asarray(dets, np.int8), z, np.asarray(u, float), z, z, z).sorted()


def _stream(n_slots, seed, p=0.02):
    r = rng(seed)
    slots, dets = [], []
    for d in (0, 1):
        s = np.flatnonzero(r.random(n_slots) < p)
        slots.append(s)
        dets.append(np.full(len(s), d))
    slots, dets = np.concatenate(slots), np.concatenate(dets)
    return _events(slots, dets, r.random(len(slots)))


def test_single_click_unchanged():
    ev = _events([100], [0], [0.5])
    assert deadtime_filter_events(ev, (DetectorModel(), DetectorModel())).all()


@pytest.mark.parametrize("seed", range(5))
def test_cross_clicks_only_early_in_deadtime(seed):
    d = DetectorModel()
    ev = _stream(200_000, seed)
    kept = ev.take(deadtime_filter_events(ev, (d, d)))
    s, k = kept.slot, kept.detector
    cross = 0
    for i in range(1, len(s)):
        gap = s[i] - s[i - 1]
        if k[i] != k[i - 1] and gap <= d.recovery_gates:
            # the partner only hears about the click after the cross-link delay
            assert gap <= d.crosslink_delay or gap > d.crosslink_delay + d.dead_gates
            cross += gap <= d.crosslink_delay
        if k[i] == k[i - 1]:
            assert gap > d.dead_gates
    assert cross > 0


def test_no_cross_clicks_without_delay():
    d = DetectorModel(crosslink_delay=0, recovery_end_s=3.4e-6)
    ev = _stream(200_000, 9)
    kept = ev.take(deadtime_filter_events(ev, (d, d)))
    gaps = np.diff(np.unique(kept.slot))
    assert np.all(gaps > d.dead_gates)


def test_software_filter_rule():
    assert software_filter_mask([0, 1000, 2500], 1875).tolist() == [True, False, False]
    assert software_filter_mask([0, 4999], 1875).tolist() == [True, True]


@pytest.mark.parametrize("seed", range(3))
def test_software_filter_gap_exhaustive(seed):
    log = run_session(SourceConfig(train_length=200_000), ChannelConfig(0.0), (IDEAL, IDEAL), 1, seed)
    for n in (1, 50, 1875):
        s = software_deadtime_filter(log, n).clicks.slot
        assert np.all(np.diff(s) >= n)


def test_noiseless_link_has_no_errors():
    src = SourceConfig(train_length=100_000)
    d = DetectorModel(efficiency=1.0, dark_prob=0.0, deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)
    log = run_session(src, ChannelConfig(0.0, 0.0), (d, d), 1, 1)
    idx = log.pulse_index(log.clicks.slot)
    match = (log.alice_basis[idx] == log.clicks.bob_basis) & (log.clicks.flag != 1)
    assert match.sum() > 10_000
    assert np.array_equal(log.alice_bit[idx][match], log.clicks.bob_bit[match])


def test_session_is_deterministic():
    a = run_session(SourceConfig(train_length=50_000), ChannelConfig(3.0, 0.02), (DetectorModel(), DetectorModel()), 2, 42)
    b = run_session(SourceConfig(train_length=50_000), ChannelConfig(3.0, 0.02), (DetectorModel(), DetectorModel()), 2, 42)
    assert np.array_equal(a.pulse_code, b.pulse_code)
    assert np.array_equal(a.clicks.slot, b.clicks.slot)
    assert np.array_equal(a.clicks.bob_bit, b.clicks.bob_bit)


def test_gains_match_closed_form():
    src = SourceConfig()
    ch = ChannelConfig(5.0, 0.02)
    d = DetectorModel(efficiency=0.2, dark_prob=1e-4, deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)
    log = run_session(src, ch, (d, d), 3, 3)
    exp = expected_rates(src, ch, (d, d))
    idx = log.pulse_index(log.clicks.slot)
    sent = log.sent_counts()
    det = np.bincount(log.intensity[idx], minlength=3)
    for a in range(3):
        sigma = np.sqrt(exp["gain"][a] * (1 - exp["gain"][a]) / sent[a])
        assert abs(det[a] / sent[a] - exp["gain"][a]) < 4 * sigma


def test_bob_basis_uniform_and_double_clicks_random():
    src = SourceConfig(train_length=500_000)
    d = DetectorModel(efficiency=0.5, dark_prob=0.01, deadtime_s=0.0, recovery_end_s=0.0, crosslink_delay=0)
    log = run_session(src, ChannelConfig(0.0, 0.5), (d, d), 1, 4)
    c = log.clicks
    assert abs(c.bob_basis.mean() - 0.5) < 4 * 0.5 / np.sqrt(len(c))
    doubles = c.bob_bit[c.flag == 1]
    assert len(doubles) > 1000
    assert abs(doubles.mean() - 0.5) < 4 * 0.5 / np.sqrt(len(doubles))
    assert FLAG_NAMES[1] == "double"


def test_csv_and_binary_round_trip(tmp_path):
    log = run_session(SourceConfig(train_length=20_000), ChannelConfig(0.0, 0.01), (IDEAL, IDEAL), 2, 8, four_state_bob=True)
    save_log(log, tmp_path / "s.npz")
    back = load_log(tmp_path / "s.npz")
    assert np.array_equal(back.pulse_code, log.pulse_code)
    assert np.array_equal(back.clicks.bob_bit, log.clicks.bob_bit)
    export_csv(log, tmp_path)
    csv_log = read_csv(tmp_path, 20_000, four_state_bob=True)
    assert np.array_equal(csv_log.clicks.slot, log.clicks.slot)
    assert np.array_equal(csv_log.clicks.bob_bit, log.clicks.bob_bit)
    assert np.array_equal(csv_log.sent_counts(), log.sent_counts())
    header = (tmp_path / "clicks.csv").read_text().splitlines()[0]
    assert header.startswith("train,slot,detector")

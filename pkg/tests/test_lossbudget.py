import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qkdbench.errors import ConfigInvalid, InvalidGeometry, MissingSpectralData
from qkdbench.lossbudget import (
    CATALOG_PATH_ENV,
    ComponentSpec,
    InjectionScenario,
    Leg,
    OpticalPath,
    db_to_linear,
    delivered_power,
    evaluate,
    linear_to_db,
    load_catalog,
    path_loss,
    photons_per_pulse,
    trojan_leakage,
)

# frozen from tests/oracles.py (50-digit mpmath)
LINEAR_172_15 = 6.0953689724016836e-18
PHOTONS_1W_1GHZ_1550 = 7.7889447236180905e9

WL = 1548.51


@pytest.fixture(scope="module")
def table2():
    return load_catalog("table2")


@pytest.fixture(scope="module")
def broadband():
    return load_catalog("broadband_worstcase")


def test_db_to_linear_examples():
    assert db_to_linear(0) == 1.0
    assert db_to_linear(10) == pytest.approx(0.1, rel=1e-15)
    assert db_to_linear(172.15) == pytest.approx(LINEAR_172_15, rel=1e-12)
    assert LINEAR_172_15 == pytest.approx(float(oracles.db_to_linear("172.15")), rel=1e-15)


@given(st.floats(min_value=1e-300, max_value=1.0))
def test_linear_db_round_trip(x):
    assert db_to_linear(linear_to_db(x)) == pytest.approx(x, rel=1e-12)


def test_photons_per_pulse():
    assert photons_per_pulse(100, 312.5e6, 1550) == pytest.approx(2.5e12, rel=0.05)
    assert photons_per_pulse(0, 1e9, 1550) == 0
    assert photons_per_pulse(1, 1e9, 1550) == pytest.approx(7.80e9, rel=0.01)
    assert photons_per_pulse(1, 1e9, 1550) == pytest.approx(PHOTONS_1W_1GHZ_1550, rel=1e-12)
    with pytest.raises(ValueError):
        photons_per_pulse(1, 0, 1550)


def test_trojan_chain_table2(table2):
    path = table2.paths["trojan_alice"]
    assert path_loss(path, WL) == pytest.approx(172.15, abs=0.01)
    res = trojan_leakage(InjectionScenario(path, WL))
    assert res.mean_photons_out == pytest.approx(1.5e-5, rel=0.10)
    # oracle: photon number times transmittance
    ref = oracles.photons_per_pulse(100, 312.5e6, WL) * oracles.db_to_linear("172.15")
    assert res.mean_photons_out == pytest.approx(float(ref), rel=1e-9)


@pytest.mark.parametrize("name, loss_db, power_w", [
    ("seeding_l1", 123.7, 40e-12),
    ("power_meter", 98.5, 14e-9),
    ("photorefraction_pm1", 118.5, 141e-12),
    ("photorefraction_im", 121.0, 79e-12),
])
def test_single_pass_paths(table2, name, loss_db, power_w):
    path = table2.paths[name]
    assert path_loss(path, WL) == pytest.approx(loss_db, abs=1e-9)
    assert delivered_power(InjectionScenario(path, WL)) == pytest.approx(power_w, rel=0.10)
    assert delivered_power(InjectionScenario(path, WL)) == pytest.approx(float(100 * oracles.db_to_linear(loss_db)), rel=1e-12)


def test_seeding_computed_value(table2):
    assert delivered_power(InjectionScenario(table2.paths["seeding_l1"], WL)) == pytest.approx(42.7e-12, rel=0.002)


@pytest.mark.parametrize("name, loss_db", [
    ("trojan_alice", 243.15), ("seeding_l1", 142.7), ("power_meter", 117.5),
    ("photorefraction_pm1", 137.5), ("photorefraction_im", 140.0),
])
def test_broadband_chain_losses(broadband, name, loss_db):
    assert path_loss(broadband.paths[name], broadband.wavelength_nm) == pytest.approx(loss_db, abs=1e-9)


def test_broadband_trojan(broadband):
    res = evaluate(InjectionScenario(broadband.paths["trojan_alice"], broadband.wavelength_nm))
    assert res.total_loss_db == pytest.approx(243, rel=0.10)
    assert res.mean_photons_out == pytest.approx(1.25e-12, rel=0.10)


def test_lossless_path_returns_input():
    c = ComponentSpec.symmetric("open", {1500: 0.0, 1600: 0.0})
    path = OpticalPath((Leg(c, "reverse", 2),), reflection=True)
    res = trojan_leakage(InjectionScenario(path, 1550))
    assert res.mean_photons_out == res.mean_photons_in
    assert path_loss(OpticalPath(), 1550) == 0.0


def test_isolator_asymmetry_round_trip():
    iso = ComponentSpec("iso", {1550: 0.35}, {1550: 28})
    one_way = OpticalPath((Leg(iso, "reverse"),))
    both = OpticalPath((Leg(iso, "reverse", 2),), reflection=True)
    assert path_loss(one_way, 1550) == 28
    assert path_loss(both, 1550) == pytest.approx(28.35)


def test_geometry_rules():
    c = ComponentSpec.symmetric("c", {1550: 1.0})
    with pytest.raises(InvalidGeometry):
        OpticalPath((Leg(c, "forward", 2),))
    with pytest.raises(InvalidGeometry):
        OpticalPath((Leg(c, "forward", 1),), reflection=True)
    with pytest.raises(InvalidGeometry):
        delivered_power(InjectionScenario(OpticalPath((Leg(c, "forward", 2),), reflection=True), 1550))
    with pytest.raises(InvalidGeometry):
        trojan_leakage(InjectionScenario(OpticalPath((Leg(c),)), 1550))


def test_missing_spectral_data(table2):
    with pytest.raises(MissingSpectralData):
        path_loss(table2.paths["trojan_alice"], 1310)
    with pytest.raises(ValueError):
        InjectionScenario(table2.paths["trojan_alice"], 3000)


def test_interpolation_linear_in_db():
    c = ComponentSpec.symmetric("c", {1500: 10.0, 1600: 20.0})
    assert c.loss("forward", 1525) == pytest.approx(12.5)
    with pytest.raises(MissingSpectralData):
        c.loss("forward", 1499)


def test_connector_loss_opt_in():
    c = ComponentSpec.symmetric("c", {1550: 1.0})
    assert path_loss(OpticalPath((Leg(c), Leg(c)), connector_loss_db=0.3), 1550) == pytest.approx(2.6)
    assert path_loss(OpticalPath((Leg(c, passes=2),), reflection=True, connector_loss_db=0.3), 1550) == pytest.approx(2.6)


def _random_component(draw, i):
    f = draw(st.floats(0, 60))
    r = draw(st.floats(0, 60))
    return ComponentSpec(f"c{i}", {1500.0: f, 1600.0: f + 1}, {1500.0: r, 1600.0: r + 2})


@st.composite
def paths(draw):
    n = draw(st.integers(0, 6))
    legs = tuple(Leg(_random_component(draw, i), draw(st.sampled_from(["forward", "reverse"]))) for i in range(n))
    return OpticalPath(legs)


@settings(max_examples=60)
@given(paths(), paths(), st.floats(1500, 1600))
def test_path_loss_additive(a, b, wl):
    assert path_loss(a + b, wl) == pytest.approx(path_loss(a, wl) + path_loss(b, wl), abs=1e-9)


@settings(max_examples=40)
@given(paths(), st.floats(0, 30), st.floats(1500, 1600))
def test_power_monotone_in_component_loss(p, extra, wl):
    if not p.legs:
        return
    comp = p.legs[0].component
    worse = ComponentSpec(comp.name, {k: v + extra for k, v in comp.loss_forward.items()},
                          {k: v + extra for k, v in comp.loss_reverse.items()})
    before = delivered_power(InjectionScenario(p, wl))
    after = delivered_power(InjectionScenario(p.replace_component(worse), wl))
    assert after <= before * (1 + 1e-12)


def test_catalog_env_search_path(tmp_path, monkeypatch):
    (tmp_path / "mine.json").write_text(
        '{"name": "mine", "base": "table2", "wavelength_nm": 1548.51, "overrides": {"Att": {"loss": 10}}}'
    )
    monkeypatch.setenv(CATALOG_PATH_ENV, str(tmp_path))
    cat = load_catalog("mine")
    assert path_loss(cat.paths["trojan_alice"], WL) == pytest.approx(172.15 - 20, abs=1e-9)
    with pytest.raises(ConfigInvalid):
        load_catalog("does_not_exist")


def test_leakage_record_units(table2):
    rec = evaluate(InjectionScenario(table2.paths["trojan_alice"], WL)).as_record()
    assert set(rec) == {"total_loss_db", "delivered_power_w", "mean_photons_out", "mean_photons_in"}
    assert math.isfinite(rec["delivered_power_w"])
    assert np.isclose(rec["delivered_power_w"], 100 * LINEAR_172_15, rtol=1e-12, atol=0)

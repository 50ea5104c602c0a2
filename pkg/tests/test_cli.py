import json
import re

import numpy as np
import pytest

from qkdbench import cli
from qkdbench.errors import ConfigInvalid, UnknownMetric
from qkdbench.report import emit_series, read_series
from qkdbench.scenario import bundled_scenarios, load_scenario, report_json, run_scenario

FAST_LINK = {
    "name": "fast_link",
    "seed": 3,
    "stages": ["simulate", "postproc"],
    "source": {"train_length": 600000},
    "channel": {"loss_db": 0.0, "misalignment": 0.0},
    "detectors": {"efficiency": 0.5, "dark_prob": 0.0, "deadtime_s": 0.0, "recovery_end_s": 0.0, "crosslink_delay": 0},
    "link": {"n_trains": 1, "max_subblocks": 1},
    "protocol": {"reconciliation": "ldpc", "apriori_qber": 0.01},
}


@pytest.fixture
def fast_link(tmp_path):
    p = tmp_path / "fast_link.json"
    p.write_text(json.dumps(FAST_LINK))
    return p


@pytest.fixture(scope="module")
def honest():
    return run_scenario("honest_10db")


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert {"honest_10db", "trojan_tableII", "faked_state", "deadtime_exploit"} <= set(names)
    for n in names:
        assert load_scenario(n).name == n


def test_honest_scenario_issues_a_key(honest):
    pp = honest.report["stages"]["postproc"]
    assert pp["status"] == "ok" and pp["l_sec"] > 0 and pp["keys_identical"]
    a, b = honest.keys["postproc"]
    assert len(a) == pp["l_sec"] and np.array_equal(a, b)


def test_trojan_table_scenario():
    rec = run_scenario("trojan_tableII").report["stages"]["budget"]
    assert rec["total_loss_db"] == pytest.approx(172.15, abs=0.01)


def test_report_is_deterministic(fast_link):
    a, b = (report_json(run_scenario(fast_link).report) for _ in range(2))
    assert a == b
    doc = json.loads(a)
    assert doc["tool_version"] and len(doc["config_hash"]) == 64
    assert not re.search(r"\d{4}-\d{2}-\d{2}|timestamp|created", a)


def test_config_hash_tracks_content(tmp_path):
    other = dict(FAST_LINK, seed=4)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    p1.write_text(json.dumps(FAST_LINK))
    p2.write_text(json.dumps(other, indent=4))
    assert load_scenario(p1).config_hash != load_scenario(p2).config_hash
    p2.write_text(json.dumps(FAST_LINK, indent=7))
    assert load_scenario(p1).config_hash == load_scenario(p2).config_hash


@pytest.mark.parametrize("patch", [
    {"budget": {"catalog": "no_such_catalog", "path": "x"}, "stages": ["budget"]},
    {"stages": ["simulate", "warp"]},
    {"seed": "three"},
    {"unknown_key": 1},
    {"channel": {"loss_db": -1}},
])
def test_invalid_configs_rejected_before_output(tmp_path, patch, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({**FAST_LINK, **patch}))
    with pytest.raises(ConfigInvalid):
        load_scenario(p)
    out = tmp_path / "out"
    assert cli.main(["report", str(p), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_unknown_metric_on_empty_report():
    with pytest.raises(UnknownMetric):
        emit_series({"series": {}}, "lsec_vs_loss")


def test_lsec_series_ends_at_abort(honest, tmp_path):
    s = honest.report["series"]["lsec_vs_loss"]
    assert s["y"][-1] <= 0 and all(v > 0 for v in s["y"][:-1])
    assert s["x"][-1] == s["abort_loss_db"]
    text = emit_series(honest.report, "lsec_vs_loss", tmp_path / "s.tsv")
    assert text.startswith("#")
    assert read_series(tmp_path / "s.tsv") == (s["x"], s["y"])


def test_blinding_series_monotone():
    s = run_scenario("faked_state").report["series"]["blinding"]
    y = s["y"]
    assert y[0] == 0.0 and y[-1] == pytest.approx(1.0)
    assert all(b >= a for a, b in zip(y, y[1:]))


# --- command line -----------------------------------------------------------------


def test_budget_command(tmp_path, capsys):
    assert cli.main(["budget", "trojan_tableII", "--out", str(tmp_path / "b.json")]) == 0
    assert json.loads((tmp_path / "b.json").read_text())["total_loss_db"] == pytest.approx(172.15, abs=0.01)
    assert cli.main(["budget", "--catalog", "table2", "--path", "trojan_alice"]) == 0
    assert "mean_photons_in" in capsys.readouterr().out
    assert cli.main(["budget", "--catalog", "table2", "--path", "nowhere"]) == cli.EXIT_CONFIG
    assert cli.main(["budget"]) == cli.EXIT_CONFIG


def test_risk_commands(tmp_path, capsys):
    assert cli.main(["risk", "list", "--layers", "Q7"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 2
    ledger = tmp_path / "ledger.jsonl"
    assert cli.main(["risk", "--ledger", str(ledger), "add", "--seed"]) == 0
    assert cli.main(["risk", "--ledger", str(ledger), "add", "--seed"]) == cli.EXIT_CONFIG
    out = tmp_path / "t.txt"
    assert cli.main(["risk", "--ledger", str(ledger), "export", "--format", "table", "--out", str(out)]) == 0
    assert out.read_text().strip()


def test_simulate_then_postproc(fast_link, tmp_path, capsys):
    sim = tmp_path / "sim"
    assert cli.main(["simulate", str(fast_link), "--out", str(sim), "--csv"]) == 0
    assert (sim / "session.npz").is_file() and (sim / "clicks.csv").is_file()
    proto = tmp_path / "proto.json"
    proto.write_text(json.dumps({"apriori_qber": 0.01, "n_subblocks": 1}))
    for src, extra in ((sim / "session.npz", []), (sim, ["--train-length", "600000"])):
        out = tmp_path / f"pp_{len(extra)}"
        assert cli.main(["postproc", str(src), "--protocol", str(proto), "--out", str(out), *extra]) == 0
        rep = json.loads((out / "block_report.json").read_text())
        assert rep["status"] == "ok" and rep["l_sec"] > 0
        assert (out / "key_alice.bin").read_bytes() == (out / "key_bob.bin").read_bytes()
    assert cli.main(["postproc", str(sim), "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG


def test_postproc_too_few_bits(tmp_path, capsys):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps({**FAST_LINK, "source": {"train_length": 10000}}))
    assert cli.main(["simulate", str(p), "--out", str(tmp_path / "sim")]) == 0
    assert cli.main(["postproc", str(tmp_path / "sim" / "session.npz"), "--out", str(tmp_path / "pp")]) == cli.EXIT_ABORT
    assert "not_enough_sifted_bits" in capsys.readouterr().err


def test_attack_command(tmp_path, capsys):
    out = tmp_path / "att"
    assert cli.main(["attack", "faked_state", "--n", "4", "--out", str(out)]) == 0
    rec = json.loads((out / "attack.json").read_text())
    assert rec["kind"] == "faked_state"
    assert (out / "attacked.npz").is_file()
    assert cli.main(["attack", "honest_10db"]) == cli.EXIT_CONFIG


def test_report_command_writes_series_and_figures(tmp_path, capsys):
    out = tmp_path / "rep"
    assert cli.main(["report", "faked_state", "--out", str(out)]) == 0
    assert {"report.json", "blinding.tsv", "blinding.png"} <= {p.name for p in out.iterdir()}
    assert (out / "blinding.png").read_bytes()[:4] == b"\x89PNG"
    capsys.readouterr()
    assert cli.main(["report", str(out / "report.json"), "--series", "blinding"]) == 0
    assert capsys.readouterr().out == (out / "blinding.tsv").read_text()
    assert cli.main(["report", str(out / "report.json"), "--series", "nope"]) == cli.EXIT_CONFIG


def test_usage_errors(capsys):
    assert cli.main([]) == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2

import itertools
import json

import pytest

from qkdbench.errors import DuplicateId
from qkdbench.risk import (
    IssueRecord,
    RiskFactors,
    RiskLedger,
    format_layers,
    grade,
    ledger_add,
    ledger_export,
    ledger_list,
    published_grades,
    seed_records,
)

# grade column of the reference issue table, transcribed by hand
TABLE_GRADES = [
    "Solved", "H", "H", "H", "L", "Solved", "L", "M", "M", "M", "L", "L", "H", "L", "M",
]
TABLE_LAYERS = [
    "Q5", "Q1-5,7", "Q1-5", "Q1,2,5", "Q1,2", "Q1,2", "Q1-3", "Q1-3", "Q1", "Q1,2", "Q1-3", "Q1-3,5", "Q1-5", "Q5", "All",
]


@pytest.mark.parametrize("factors, expected", [((1, 1, 1), "H"), ((0, 0, 0), "L"), ((1, 1, 0), "M"), ((1, 0, 0), "L")])
def test_grade_examples(factors, expected):
    assert grade(RiskFactors(*factors)) == expected


def test_grade_depends_on_sum_only():
    for bits in itertools.product((0, 1), repeat=3):
        grades = {grade(RiskFactors(*p)) for p in itertools.permutations(bits)}
        assert len(grades) == 1


def test_solved_overrides_factors():
    assert grade(RiskFactors(1, 1, 1, solved=True)) == "Solved"


def test_factor_domain():
    with pytest.raises(ValueError):
        RiskFactors(2, 0, 0)


def test_replay_reference_table():
    recs = seed_records()
    assert [r.grade for r in recs] == TABLE_GRADES
    assert [format_layers(r.layers) for r in recs] == TABLE_LAYERS
    assert {r.id: r.grade for r in recs} == published_grades()


def test_stated_grade_must_match():
    with pytest.raises(ValueError):
        IssueRecord("x", "x", ("Q1",), "c", RiskFactors(1, 1, 1), grade="L")
    with pytest.raises(ValueError):
        IssueRecord("x", "x", (), "c", RiskFactors())


def test_ledger_round_trip(tmp_path):
    path = tmp_path / "ledger.jsonl"
    led = RiskLedger(path)
    assert ledger_export(led) == []
    for r in seed_records():
        ledger_add(led, r)
    with pytest.raises(DuplicateId):
        ledger_add(led, seed_records()[0])
    again = RiskLedger(path)
    assert [r.to_dict() for r in again] == [r.to_dict() for r in seed_records()]
    assert [row["grade"] for row in ledger_export(again)] == TABLE_GRADES
    assert len(path.read_text().splitlines()) == 15
    json.loads(path.read_text().splitlines()[0])


def test_layer_filter():
    led = RiskLedger()
    for r in seed_records():
        led.add(r)
    q7 = ledger_list(led, layers=["Q7"])
    assert {r.id for r in q7} == {"detector-control", "supply-chain"}
    q1 = ledger_list(led, layers=["Q1"])
    assert all("Q1" in r.layers for r in q1) and len(q1) == 13
    assert {r.grade for r in ledger_list(led, grades=["H"])} == {"H"}


def test_table_export_lists_every_issue():
    led = RiskLedger()
    for r in seed_records():
        led.add(r)
    table = ledger_export(led, "table")
    assert len(table.splitlines()) == 16
    assert "Detector deadtime" in table


def test_addenda_recorded():
    by_id = {r.id: r for r in seed_records()}
    assert by_id["power-meter-injection"].addendum
    assert by_id["detector-control"].addendum

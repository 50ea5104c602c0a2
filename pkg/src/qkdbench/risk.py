"""Three-factor risk grading and an append-only issue ledger.

Each issue is scored by three binary factors: whether the loophole is likely
present, whether current technology suffices to exploit it, and whether it
leaks significant key information. The grade follows from their sum alone.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigInvalid, DuplicateId

LAYERS = {
    "Q1": "Optics",
    "Q2": "Analog electronics interface",
    "Q3": "Driver and calibration algorithms",
    "Q4": "Operation cycle",
    "Q5": "Post-processing",
    "Q6": "Application interface",
    "Q7": "Installation and maintenance",
}
GRADES = ("Solved", "L", "M", "H")


@dataclass(frozen=True)
class RiskFactors:
    loophole_likelihood: int = 0
    current_technology: int = 0
    key_leakage: int = 0
    solved: bool = False

    def __post_init__(self):
        for name in ("loophole_likelihood", "current_technology", "key_leakage"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {getattr(self, name)!r}")

    @property
    def total(self) -> int:
        return self.loophole_likelihood + self.current_technology + self.key_leakage


def grade(f: RiskFactors) -> str:
    """Overall risk: Solved, or L/M/H from the factor sum.

    >>> grade(RiskFactors(1, 1, 0))
    'M'
    """
    if f.solved:
        return "Solved"
    return ("L", "L", "M", "H")[f.total]


@dataclass(frozen=True)
class IssueRecord:
    id: str
    title: str
    layers: tuple[str, ...]
    target_component: str
    factors: RiskFactors
    recommendation: str = ""
    addendum: str = ""
    grade: str = field(default="")

    def __post_init__(self):
        layers = tuple(sorted(set(self.layers), key=lambda q: int(q[1:])))
        if not layers:
            raise ValueError(f"{self.id}: at least one layer is required")
        unknown = [q for q in layers if q not in LAYERS]
        if unknown:
            raise ValueError(f"{self.id}: unknown layers {unknown}")
        object.__setattr__(self, "layers", layers)
        g = grade(self.factors)
        if self.grade and self.grade != g:
            raise ValueError(f"{self.id}: stated grade {self.grade} disagrees with factors ({g})")
        object.__setattr__(self, "grade", g)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = list(self.layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IssueRecord":
        try:
            return cls(
                id=d["id"],
                title=d["title"],
                layers=tuple(d["layers"]),
                target_component=d.get("target_component", ""),
                factors=RiskFactors(**d.get("factors", {})),
                recommendation=d.get("recommendation", ""),
                addendum=d.get("addendum", ""),
                grade=d.get("grade", ""),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigInvalid(f"bad issue record: {exc}") from exc


def format_layers(layers: Iterable[str]) -> str:
    """Compact layer list, e.g. ``Q1-5,7``; all seven layers print as ``All``."""
    nums = sorted(int(q[1:]) for q in layers)
    if nums == list(range(1, 8)):
        return "All"
    runs, start, prev = [], None, None
    for n in nums:
        if start is None:
            start = prev = n
        elif n == prev + 1:
            prev = n
        else:
            runs.append((start, prev))
            start = prev = n
    if start is not None:
        runs.append((start, prev))
    parts = [f"{a}" if a == b else f"{a},{b}" if b == a + 1 else f"{a}-{b}" for a, b in runs]
    return "Q" + ",".join(parts)


class RiskLedger:
    """Append-only store of issue records.

    With a ``path`` every accepted record is appended as one JSON line, so
    the file doubles as an audit trail. Without one the ledger lives in memory.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, IssueRecord] = {}
        if self.path is not None and self.path.exists():
            for lineno, line in enumerate(self.path.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    rec = IssueRecord.from_dict(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ConfigInvalid(f"{self.path}:{lineno}: {exc}") from exc
                self._records[rec.id] = rec

    def __len__(self):
        return len(self._records)

    def __iter__(self) -> Iterator[IssueRecord]:
        return iter(list(self._records.values()))

    def add(self, record: IssueRecord) -> IssueRecord:
        if record.id in self._records:
            raise DuplicateId(f"issue {record.id!r} already recorded")
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        self._records[record.id] = record
        return record

    def list(self, layers: Iterable[str] | None = None, grades: Iterable[str] | None = None) -> list[IssueRecord]:
        want_layers = set(layers) if layers else None
        want_grades = set(grades) if grades else None
        out = []
        for rec in self._records.values():
            if want_layers and not want_layers & set(rec.layers):
                continue
            if want_grades and rec.grade not in want_grades:
                continue
            out.append(rec)
        return out

    def export(self, fmt: str = "records", **filters) -> list[dict] | str:
        recs = self.list(**filters)
        if fmt == "records":
            return [
                {
                    "issue": r.title,
                    "layers": format_layers(r.layers),
                    "target": r.target_component,
                    "recommendation": r.recommendation,
                    "grade": r.grade,
                }
                for r in recs
            ]
        if fmt == "table":
            return render_table(recs)
        raise ValueError(f"unknown export format {fmt!r}")


def render_table(recs: Iterable[IssueRecord]) -> str:
    rows = [("Issue", "Q", "Target", "Grade", "Recommendation")]
    rows += [(r.title, format_layers(r.layers), r.target_component, r.grade, r.recommendation) for r in recs]
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for row in rows:
        head = "  ".join(cell.ljust(w) for cell, w in zip(row[:4], widths))
        lines.append(f"{head}  {row[4]}".rstrip())
    return "\n".join(lines) + "\n"


def ledger_add(ledger: RiskLedger, record: IssueRecord) -> IssueRecord:
    return ledger.add(record)


def ledger_list(ledger: RiskLedger, layers=None, grades=None) -> list[IssueRecord]:
    return ledger.list(layers=layers, grades=grades)


def ledger_export(ledger: RiskLedger, fmt="records", layers=None, grades=None):
    return ledger.export(fmt, layers=layers, grades=grades)


def seed_records() -> list[IssueRecord]:
    """The fifteen reference issues with their factor triples."""
    text = (resources.files("qkdbench") / "data" / "issues_seed.json").read_text()
    return [IssueRecord.from_dict(d) for d in json.loads(text)]


def published_grades() -> dict[str, str]:
    text = (resources.files("qkdbench") / "data" / "expected_grades.json").read_text()
    return json.loads(text)


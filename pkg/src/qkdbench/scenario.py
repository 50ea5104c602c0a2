"""Scenario files and the stage chain they drive.

A scenario is a JSON document naming a seed, the link configuration and the
stages to run. Everything is parsed and cross-checked before the first stage
starts, so a bad file fails without producing output.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .attacks import AttackConfig, deadtime_attack, run_attack
from .errors import AbortBlock, ConfigInvalid
from .lossbudget import DEFAULT_W_IN, InjectionScenario, evaluate, load_catalog
from .linksim import (
    ChannelConfig,
    DetectorModel,
    SourceConfig,
    detect_bright,
    expected_rates,
    run_session,
    software_deadtime_filter,
)
from .postproc import ProtocolConfig, process_block, session_block
from .postproc import ldpc
from .postproc.estimation import estimate
from .postproc.sifting import DecoyStats

SCHEMA = "qkdbench.report/1"
STAGES = ("budget", "simulate", "attack", "postproc", "sweep_lsec_vs_loss", "sweep_blinding", "sweep_filter_window")


@dataclass
class Scenario:
    name: str
    seed: int
    stages: tuple[str, ...]
    source: SourceConfig
    channel: ChannelConfig
    detectors: tuple[DetectorModel, DetectorModel]
    n_trains: int
    four_state_bob: bool
    software_filter_gates: int | None
    attack: AttackConfig
    protocol: ProtocolConfig
    max_subblocks: int | None
    budget: dict | None
    sweeps: dict
    raw: dict = field(repr=False, default_factory=dict)
    base_dir: Path = field(default_factory=Path)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def bundled_scenarios() -> list[str]:
    d = resources.files("qkdbench") / "data" / "scenarios"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def resolve_scenario(ref: str | Path) -> Path:
    p = Path(ref)
    if p.is_file():
        return p
    bundled = resources.files("qkdbench") / "data" / "scenarios" / f"{ref}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigInvalid(f"scenario {ref!r} not found (bundled: {', '.join(bundled_scenarios())})")


def _build(cls, d, what):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigInvalid(f"{what} must be an object")
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigInvalid(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{what}: {exc}") from exc


_TOP_KEYS = {"name", "seed", "stages", "source", "channel", "detectors", "link",
             "attack", "protocol", "budget", "sweeps"}


def parse_scenario(doc: dict, base_dir: Path = Path(".")) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigInvalid("scenario must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown scenario keys: {sorted(unknown)}")
    if "seed" not in doc or not isinstance(doc["seed"], int):
        raise ConfigInvalid("scenario needs an explicit integer seed")
    stages = tuple(doc.get("stages", ()))
    bad = [s for s in stages if s not in STAGES]
    if bad or not stages:
        raise ConfigInvalid(f"stages must be a non-empty subset of {STAGES}, got {list(stages)}")
    det_doc = doc.get("detectors")
    if isinstance(det_doc, list):
        if len(det_doc) != 2:
            raise ConfigInvalid("detectors: give one object or a list of two")
        dets = tuple(_build(DetectorModel, d, "detector") for d in det_doc)
    else:
        d = _build(DetectorModel, det_doc, "detector")
        dets = (d, d)
    link = doc.get("link", {})
    unknown = set(link) - {"n_trains", "four_state_bob", "software_filter_gates", "max_subblocks"}
    if unknown:
        raise ConfigInvalid(f"unknown link keys: {sorted(unknown)}")
    budget = doc.get("budget")
    if "budget" in stages:
        if not isinstance(budget, dict) or "catalog" not in budget or "path" not in budget:
            raise ConfigInvalid("budget stage needs budget.catalog and budget.path")
        catalog = load_catalog(budget["catalog"], [base_dir])
        names = [budget["path"], *budget.get("extra_paths", [])]
        missing = [n for n in names if n not in catalog.paths]
        if missing:
            raise ConfigInvalid(f"catalog {catalog.name} has no path(s) {missing}")
    scn = Scenario(
        name=str(doc.get("name", "unnamed")),
        seed=doc["seed"],
        stages=stages,
        source=_build(SourceConfig, doc.get("source"), "source"),
        channel=_build(ChannelConfig, doc.get("channel"), "channel"),
        detectors=dets,
        n_trains=int(link.get("n_trains", 1)),
        four_state_bob=bool(link.get("four_state_bob", False)),
        software_filter_gates=link.get("software_filter_gates"),
        attack=_build(AttackConfig, doc.get("attack"), "attack"),
        protocol=_build(ProtocolConfig, doc.get("protocol"), "protocol"),
        max_subblocks=link.get("max_subblocks"),
        budget=budget,
        sweeps=dict(doc.get("sweeps", {})),
        raw=doc,
        base_dir=base_dir,
    )
    src, prot = scn.source, scn.protocol
    if "postproc" in stages and (src.mu, src.nu1, src.nu2) != (prot.mu, prot.nu1, prot.nu2):
        raise ConfigInvalid("protocol intensities must match the source")
    if "attack" in stages and scn.attack.kind == "none":
        raise ConfigInvalid("attack stage needs attack.kind")
    return scn


def load_scenario(ref: str | Path) -> Scenario:
    path = resolve_scenario(ref)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    return parse_scenario(doc, path.parent)


# --- stages --------------------------------------------------------------------


def stage_budget(scn: Scenario) -> dict:
    b = scn.budget
    catalog = load_catalog(b["catalog"], [scn.base_dir])
    wl = float(b.get("wavelength_nm", catalog.wavelength_nm))
    w_in = float(b.get("w_in_w", DEFAULT_W_IN))
    f_p = float(b.get("f_p_hz", scn.source.f_p_hz))

    def one(name):
        res = evaluate(InjectionScenario(catalog.paths[name], wl, w_in, f_p))
        rec = res.as_record()
        rec["geometry"] = "double_pass" if catalog.paths[name].is_double_pass else "single_pass"
        return rec

    out = one(b["path"])
    out.update(catalog=catalog.name, path=b["path"], wavelength_nm=wl, w_in_w=w_in, f_p_hz=f_p)
    if b.get("extra_paths"):
        out["paths"] = {n: one(n) for n in b["extra_paths"]}
    return out


def _postproc(log, scn: Scenario, seed_offset: int) -> dict:
    block = session_block(log, scn.protocol.subblock_length, scn.max_subblocks or scn.protocol.n_subblocks)
    rng = np.random.default_rng([scn.seed, seed_offset])
    if len(block) == 0:
        return {"status": "aborted", "reason": "not_enough_sifted_bits", "l_sec": 0,
                "available_sifted": block.meta["available_sifted"]}
    res = process_block(block, scn.protocol, rng)
    rec = dict(res.record)
    rec.update(status=res.status, reason=res.reason, available_sifted=block.meta["available_sifted"])
    if res.ok:
        rec["keys_identical"] = bool(np.array_equal(res.key_alice, res.key_bob))
    if scn.four_state_bob:
        rec["note"] = "four-state Bob on: no Trojan-horse term for Bob's detector assignment is included"
    rec["_keys"] = (res.key_alice, res.key_bob)
    return rec


def sweep_lsec_vs_loss(scn: Scenario, spec: dict) -> dict:
    """Secret length from expected (noise-free) statistics at each loss.

    The pulse budget is fixed; all sifted signal bits are used as one
    verified key and charged the syndrome leak of the rate selected for the
    expected QBER. The series ends at the first loss that aborts.
    """
    losses = [float(x) for x in spec.get("loss_db", np.arange(0, 61, 2.0))]
    n_total = float(spec.get("pulses", 1e11))
    prot = scn.protocol
    dets = tuple(d.ideal() for d in scn.detectors)
    xs, ys = [], []
    for loss in losses:
        ch = ChannelConfig(loss, scn.channel.misalignment)
        r = expected_rates(scn.source, ch, dets, scn.four_state_bob)
        sent = [int(n_total * p) for p in scn.source.probabilities]
        det = [int(round(n * g)) for n, g in zip(sent, r["gain"])]
        sifted = int(sent[0] * r["sifted"][0])
        e_mu = float(r["sifted_error"][0] / r["sifted"][0]) if r["sifted"][0] > 0 else 0.5
        rate = prot.code_rate or ldpc.select_rate(e_mu, prot.code_rates)
        leak = round(sifted * (1 - rate)) + prot.hash_bits
        l_sec = 0
        if sifted > 0:
            try:
                est = estimate(DecoyStats(tuple(sent), tuple(det)), sifted, e_mu, leak,
                               prot.eps_decoy, prot.eps_pa, prot.mu, prot.nu1, prot.nu2)
                l_sec = est.l_sec
            except AbortBlock:
                l_sec = 0
        xs.append(loss)
        ys.append(l_sec)
        if l_sec <= 0:
            break
    return {"x_label": "channel_loss_db", "y_label": "l_sec_bits", "x": xs, "y": ys,
            "pulses": n_total, "abort_loss_db": xs[-1] if ys and ys[-1] <= 0 else None}


def sweep_blinding(scn: Scenario, spec: dict) -> dict:
    d = scn.detectors[0]
    lo, hi = spec.get("energy_range_j", [0.0, 2.0 * d.e_always_j])
    xs = np.linspace(lo, hi, int(spec.get("points", 61)))
    ys = detect_bright(xs, d, max(scn.attack.blinding_power_w, d.blinding_power_w))
    return {"x_label": "trigger_energy_j", "y_label": "click_probability", "x": xs.tolist(), "y": np.asarray(ys).tolist()}


def _filter_point(args):
    source, channel, dets, attack, cycles, seed, four_state_bob, w = args
    cfg = AttackConfig(**{**asdict(attack), "software_filter_gates": w or None})
    _, m = deadtime_attack(source, channel, dets, cfg, cycles, seed, four_state_bob)
    return m.eve_bit_agreement, m.agreement_sigma


def sweep_filter_window(scn: Scenario, spec: dict) -> dict:
    """Eve's agreement against the software filter window, one seed per point."""
    windows = [int(w) for w in spec.get("windows", [0, 1, 2, 3, 10, 1875])]
    cycles = int(spec.get("cycles", scn.n_trains))
    jobs = [(scn.source, scn.channel, scn.detectors, scn.attack, cycles, scn.seed + 1000 + i, scn.four_state_bob, w)
            for i, w in enumerate(windows)]
    workers = int(spec.get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_filter_point, jobs))
    else:
        out = [_filter_point(j) for j in jobs]
    return {"x_label": "software_filter_gates", "y_label": "eve_bit_agreement", "x": windows,
            "y": [a for a, _ in out], "sigma": [s for _, s in out]}


_SWEEPS = {
    "sweep_lsec_vs_loss": ("lsec_vs_loss", sweep_lsec_vs_loss),
    "sweep_blinding": ("blinding", sweep_blinding),
    "sweep_filter_window": ("filter_window", sweep_filter_window),
}


@dataclass
class RunResult:
    report: dict
    logs: dict = field(default_factory=dict)
    keys: dict = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        pp = self.report["stages"].get("postproc")
        return bool(pp) and pp.get("status") == "aborted"


def run_scenario(ref: str | Path | Scenario, strict: bool = False) -> RunResult:
    """Execute every declared stage in order and assemble the report.

    With ``strict`` an aborted post-processing block raises
    :class:`AbortBlock` after the report is built.
    """
    scn = ref if isinstance(ref, Scenario) else load_scenario(ref)
    stages: dict[str, Any] = {}
    series: dict[str, Any] = {}
    logs, keys = {}, {}
    for stage in scn.stages:
        if stage == "budget":
            stages["budget"] = stage_budget(scn)
        elif stage == "simulate":
            log = run_session(scn.source, scn.channel, scn.detectors, scn.n_trains, scn.seed, scn.four_state_bob)
            if scn.software_filter_gates is not None:
                log = software_deadtime_filter(log, scn.software_filter_gates)
            logs["session"] = log
            stages["simulate"] = _session_summary(log)
        elif stage == "attack":
            log, metrics = run_attack(scn.source, scn.channel, scn.detectors, scn.attack, scn.n_trains, scn.seed, scn.four_state_bob)
            logs["attacked"] = log
            stages["attack"] = {"kind": scn.attack.kind, **metrics.as_record(),
                                "agreement_excess_sigmas": metrics.agreement_excess_sigmas,
                                **_session_summary(log)}
        elif stage == "postproc":
            log = logs.get("attacked", logs.get("session"))
            if log is None:
                raise ConfigInvalid("postproc stage needs a preceding simulate or attack stage")
            rec = _postproc(log, scn, 1)
            keys["postproc"] = rec.pop("_keys", None)
            stages["postproc"] = rec
        else:
            name, fn = _SWEEPS[stage]
            series[name] = fn(scn, scn.sweeps.get(name, {}))
    report = {
        "schema": SCHEMA,
        "tool_version": __version__,
        "config_hash": scn.config_hash,
        "scenario": _clean(scn.raw),
        "stages": _clean(stages),
        "series": _clean(series),
    }
    result = RunResult(report, logs, keys)
    if strict and result.aborted:
        raise AbortBlock(stages["postproc"].get("reason", "aborted"), partial=stages["postproc"])
    return result


def _session_summary(log) -> dict:
    c = log.clicks
    return {
        "n_slots": int(log.n_slots),
        "n_clicks": len(c),
        "n_double": int(np.count_nonzero(c.flag == 1)),
        "n_dark": int(np.count_nonzero(c.flag == 2)),
        "sent": log.sent_counts().tolist(),
        "detector_clicks": np.bincount(c.detector.astype(np.int64), minlength=2)[:2].tolist(),
        "bit_counts": np.bincount(c.bob_bit.astype(np.int64), minlength=2)[:2].tolist(),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


"""``qkdbench`` command line entry point."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AbortBlock, ConfigInvalid, DuplicateId, MissingSpectralData, QkdBenchError, UnknownMetric
from .lossbudget import DEFAULT_W_IN, InjectionScenario, evaluate, load_catalog

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_ABORT = 4
EXIT_SPECTRAL = 5


def _dump(obj) -> str:
    from .scenario import _clean

    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ---------------------------------------------------------------


def cmd_budget(args) -> int:
    if args.scenario:
        from .scenario import load_scenario, stage_budget

        scn = load_scenario(args.scenario)
        if scn.budget is None:
            raise ConfigInvalid("scenario has no budget section")
        rec = stage_budget(scn)
    else:
        if not (args.catalog and args.path):
            raise ConfigInvalid("give a scenario or both --catalog and --path")
        cat = load_catalog(args.catalog)
        if args.path not in cat.paths:
            raise ConfigInvalid(f"catalog {cat.name} has no path {args.path!r}; known: {sorted(cat.paths)}")
        wl = args.wavelength_nm if args.wavelength_nm is not None else cat.wavelength_nm
        rec = evaluate(InjectionScenario(cat.paths[args.path], wl, args.w_in_w, args.f_p_hz)).as_record()
        rec.update(catalog=cat.name, path=args.path, wavelength_nm=wl)
    _emit(_dump(rec), args.out)
    return EXIT_OK


def cmd_risk(args) -> int:
    from . import risk

    if args.ledger:
        ledger = risk.RiskLedger(args.ledger)
    else:
        ledger = risk.RiskLedger()
        for rec in risk.seed_records():
            ledger.add(rec)
    layers = args.layers.split(",") if getattr(args, "layers", None) else None
    grades = args.grades.split(",") if getattr(args, "grades", None) else None
    if args.risk_cmd == "add":
        if args.seed:
            recs = risk.seed_records()
        else:
            doc = json.loads(Path(args.record).read_text()) if args.record else json.load(sys.stdin)
            try:
                recs = [risk.IssueRecord.from_dict(d) for d in (doc if isinstance(doc, list) else [doc])]
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigInvalid(f"bad issue record: {exc}") from exc
        for rec in recs:
            risk.ledger_add(ledger, rec)
            print(f"{rec.id}\t{rec.grade}")
        return EXIT_OK
    if args.risk_cmd == "list":
        for rec in risk.ledger_list(ledger, layers, grades):
            print(f"{rec.id}\t{risk.format_layers(rec.layers)}\t{rec.grade}\t{rec.title}")
        return EXIT_OK
    out = risk.ledger_export(ledger, args.format, layers, grades)
    _emit(out if isinstance(out, str) else json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .linksim import export_csv, run_session, save_log, software_deadtime_filter
    from .scenario import _session_summary, load_scenario

    scn = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scn.seed
    n = args.n_trains or scn.n_trains
    log = run_session(scn.source, scn.channel, scn.detectors, n, seed, scn.four_state_bob)
    if scn.software_filter_gates is not None:
        log = software_deadtime_filter(log, scn.software_filter_gates)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_log(log, out / "session.npz")
    if args.csv:
        export_csv(log, out)
    summary = {"scenario": scn.name, "seed": seed, "n_trains": n, "train_length": log.train_length, **_session_summary(log)}
    (out / "summary.json").write_text(_dump(summary))
    print(_dump(summary), end="")
    return EXIT_OK


def cmd_attack(args) -> int:
    from .attacks import run_attack
    from .linksim import save_log
    from .scenario import load_scenario

    scn = load_scenario(args.scenario)
    if scn.attack.kind == "none" and not args.kind:
        raise ConfigInvalid("scenario has no attack section; pass --kind")
    cfg = replace(scn.attack, kind=args.kind) if args.kind else scn.attack
    if args.software_filter_gates is not None:
        cfg = replace(cfg, software_filter_gates=args.software_filter_gates)
    seed = args.seed if args.seed is not None else scn.seed
    log, metrics = run_attack(scn.source, scn.channel, scn.detectors, cfg, args.n or scn.n_trains, seed, scn.four_state_bob)
    rec = {"kind": cfg.kind, "seed": seed, **metrics.as_record(), "agreement_excess_sigmas": metrics.agreement_excess_sigmas}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_log(log, out / "attacked.npz")
        (out / "attack.json").write_text(_dump(rec))
    print(_dump(rec), end="")
    return EXIT_OK


def _read_log(src: str, train_length: int | None):
    from .linksim import load_log, read_csv

    p = Path(src)
    if p.is_dir():
        if not train_length:
            raise ConfigInvalid("CSV session logs need --train-length")
        return read_csv(p, train_length)
    if not p.is_file():
        raise ConfigInvalid(f"session log {src} not found")
    return load_log(p)


def cmd_postproc(args) -> int:
    from .postproc import ProtocolConfig, process_block, session_block

    cfg = ProtocolConfig()
    if args.protocol:
        try:
            cfg = ProtocolConfig.from_dict(json.loads(Path(args.protocol).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"protocol config: {exc}") from exc
    log = _read_log(args.log, args.train_length)
    block = session_block(log, cfg.subblock_length, args.max_subblocks or cfg.n_subblocks)
    out = Path(args.out)
    if len(block) == 0:
        raise AbortBlock("not_enough_sifted_bits", f"only {block.meta['available_sifted']} sifted bits; one subblock needs {cfg.subblock_length}")
    res = process_block(block, cfg, np.random.default_rng(args.seed))
    rec = {**res.record, "status": res.status, "reason": res.reason, "protocol": cfg.as_record()}
    out.mkdir(parents=True, exist_ok=True)
    (out / "block_report.json").write_text(_dump(rec))
    if res.ok:
        (out / "key_alice.bin").write_bytes(np.packbits(res.key_alice).tobytes())
        (out / "key_bob.bin").write_bytes(np.packbits(res.key_bob).tobytes())
    print(_dump({k: rec[k] for k in ("status", "reason", "l_block", "l_cor", "l_ver", "leak", "l_sec") if k in rec}), end="")
    return EXIT_OK if res.ok else EXIT_ABORT


def cmd_report(args) -> int:
    from .report import emit_series, write_outputs
    from .scenario import load_scenario, report_json, run_scenario

    if args.series:
        report = json.loads(Path(args.scenario).read_text())
        sys.stdout.write(emit_series(report, args.series))
        return EXIT_OK
    scn = load_scenario(args.scenario)
    result = run_scenario(scn)
    text = report_json(result.report)
    if args.out:
        write_outputs(result.report, text, args.out, figures=not args.no_figures)
        keys = result.keys.get("postproc")
        if keys:
            Path(args.out, "key_alice.bin").write_bytes(np.packbits(keys[0]).tobytes())
            Path(args.out, "key_bob.bin").write_bytes(np.packbits(keys[1]).tobytes())
    else:
        sys.stdout.write(text)
    return EXIT_ABORT if result.aborted else EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_all

    results = run_all(quick=args.quick)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkdbench", description="Hacking-risk workbench for a decoy-state BB84 link.")
    p.add_argument("--version", action="version", version=f"qkdbench {__version__}")
    p.add_argument("--check", action="store_true", help="run the acceptance suite and print one line per criterion")
    p.add_argument("--quick", action="store_true", help="with --check: reduced sample sizes")
    sub = p.add_subparsers(dest="cmd")

    b = sub.add_parser("budget", help="optical loss and Trojan-horse leakage")
    b.add_argument("scenario", nargs="?", help="scenario file or bundled name")
    b.add_argument("--catalog")
    b.add_argument("--path")
    b.add_argument("--wavelength-nm", type=float)
    b.add_argument("--w-in-w", type=float, default=DEFAULT_W_IN)
    b.add_argument("--f-p-hz", type=float, default=312.5e6)
    b.add_argument("--out")
    b.set_defaults(func=cmd_budget)

    r = sub.add_parser("risk", help="hacking-risk ledger")
    r.add_argument("--ledger", help="JSON-lines ledger file (default: the reference issues, in memory)")
    rs = r.add_subparsers(dest="risk_cmd", required=True)
    ra = rs.add_parser("add")
    ra.add_argument("--record", help="JSON file holding one record or a list (default: stdin)")
    ra.add_argument("--seed", action="store_true", help="add the fifteen reference issues")
    for name in ("list", "export"):
        q = rs.add_parser(name)
        q.add_argument("--layers", help="comma-separated, e.g. Q1,Q7")
        q.add_argument("--grades", help="comma-separated, e.g. H,M")
        if name == "export":
            q.add_argument("--format", choices=("records", "table"), default="table")
            q.add_argument("--out")
    r.set_defaults(func=cmd_risk)

    s = sub.add_parser("simulate", help="honest link session")
    s.add_argument("scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--csv", action="store_true", help="also write clicks.csv and pulses.csv")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-trains", type=int)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="attacked link session and Eve's metrics")
    a.add_argument("scenario")
    a.add_argument("--kind", choices=("faked_state", "deadtime_exploit"))
    a.add_argument("--n", type=int, help="trains (faked state) or cycles (deadtime exploit)")
    a.add_argument("--software-filter-gates", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.set_defaults(func=cmd_attack)

    pp = sub.add_parser("postproc", help="one block of post-processing from a session log")
    pp.add_argument("log", help="session .npz file or a directory with clicks.csv and pulses.csv")
    pp.add_argument("--protocol", help="protocol config JSON")
    pp.add_argument("--train-length", type=int)
    pp.add_argument("--max-subblocks", type=int)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_postproc)

    rp = sub.add_parser("report", help="run a scenario's stage chain")
    rp.add_argument("scenario", help="scenario file or bundled name (a report.json with --series)")
    rp.add_argument("--out", help="directory for report.json, series and figures (default: stdout)")
    rp.add_argument("--no-figures", action="store_true")
    rp.add_argument("--series", help="print one series of an existing report as two columns")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.check:
        return cmd_check(args)
    if not args.cmd:
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except AbortBlock as exc:
        print(f"aborted: {exc.reason}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except MissingSpectralData as exc:
        print(f"missing spectral data: {exc}", file=sys.stderr)
        return EXIT_SPECTRAL
    except (ConfigInvalid, DuplicateId, UnknownMetric) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QkdBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

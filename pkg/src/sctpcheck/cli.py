"""Command-line driver.

Subcommands: verify-baseline, matrix, reproduce-cve, ambiguity-demo,
render-trace, explore. Exit codes: 0 expectations met, 1 verification
failure, 2 usage/config error, 3 bound exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .attackers import AttackerModelKind, Phase, build_daisy, vocab_for
from .experiments import (
    PAPER_ATTACK_CELLS,
    CellOutcome,
    ExperimentReport,
    ScheduleInfeasible,
    ambiguity_demo,
    render_trace,
    reproduce_cve,
    run_matrix,
    trace_labels_from_json,
    trace_to_json,
    verify_baseline,
)
from .ltl import PROPERTY_NAMES
from .synthesis import Attack
from .system import BoundExceeded, InvalidConfig, ScenarioConfig, explore

EXIT_OK = 0
EXIT_VERIFICATION_FAILURE = 1
EXIT_USAGE = 2
EXIT_BOUND = 3

_MODEL_NAMES = {m.value: m for m in AttackerModelKind}


def _attack_json(a: Attack) -> list:
    from .experiments import _action_to_json

    return [_action_to_json(act) for act in a.actions]


def _cell_json(c: CellOutcome) -> dict:
    return {
        "model": c.model.value,
        "property": c.property_name,
        "patch": c.patch_enabled,
        "status": c.status,
        "attacks": [_attack_json(a) for a in c.attacks],
        "shrunk": [_attack_json(a) for a in c.shrunk],
        "states_explored": c.states_explored,
        # timings live in their own block so reports stay diffable
        "timing": {"elapsed_seconds": round(c.elapsed_seconds, 3)},
    }


def _write_report(report: ExperimentReport, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": report.config,
        "environment": report.environment,
        "cells": [_cell_json(c) for c in report.cells],
    }
    path = out_dir / "report.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--patch", choices=["on", "off", "both"], default="off")
    p.add_argument("--misinterpret", action="store_true")
    p.add_argument("--tsn", action="store_true")
    p.add_argument("--budget", type=int, default=12)
    p.add_argument("--max-attacks", type=int, default=10)
    p.add_argument("--depth", type=int, default=600_000)
    p.add_argument("--max-depth", type=int, default=2_400_000)
    p.add_argument("--replay-capacity", type=int, default=2)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--config", type=Path, help="JSON file of flag defaults")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sctpcheck")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("verify-baseline", help="ten properties, deadlocks, reachability")
    _add_common(p)

    p = sub.add_parser("matrix", help="attacker-model x property synthesis matrix")
    _add_common(p)
    p.add_argument("--model", action="append", choices=sorted(_MODEL_NAMES),
                   help="restrict to these models (repeatable)")
    p.add_argument("--property", action="append", choices=list(PROPERTY_NAMES),
                   help="restrict to these properties (repeatable)")
    p.add_argument("--check-against-paper", action="store_true",
                   help="grade the patch-off cells against the published table")

    p = sub.add_parser("reproduce-cve", help="Off-Path x phi9 single-packet attack")
    _add_common(p)

    p = sub.add_parser("ambiguity-demo", help="wrong-vtag walkthrough")
    _add_common(p)

    p = sub.add_parser("render-trace", help="render a trace JSON as a chart")
    p.add_argument("trace", type=Path)

    p = sub.add_parser("explore", help="state count / deadlock / reachability")
    _add_common(p)
    p.add_argument("--attacker", choices=sorted(_MODEL_NAMES))
    p.add_argument("--cap", type=int, default=5_000_000)
    return ap


def _apply_config_file(args: argparse.Namespace) -> None:
    if getattr(args, "config", None) is None:
        return
    doc = json.loads(args.config.read_text())
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr):
            setattr(args, attr, value)


def cmd_verify_baseline(args) -> int:
    report = verify_baseline()
    failures = []
    for (config_name, prop), ok in sorted(report.verdicts.items()):
        line = f"{config_name:>12} {prop:<6} {'Holds' if ok else 'VIOLATED'}"
        print(line)
        if not ok:
            failures.append((config_name, prop))
    for name in report.state_count:
        print(
            f"{name:>12} states={report.state_count[name]} "
            f"deadlocks={report.deadlocks[name]} "
            f"unreachable={report.unreachable[name] or 'none'}"
        )
        if report.deadlocks[name] or report.unreachable[name]:
            failures.append((name, "graph"))
    return EXIT_VERIFICATION_FAILURE if failures else EXIT_OK


def cmd_matrix(args) -> int:
    models = [_MODEL_NAMES[m] for m in (args.model or sorted(_MODEL_NAMES))]
    properties = args.property or list(PROPERTY_NAMES)
    report = run_matrix(
        models,
        properties,
        patch=args.patch,
        jobs=args.jobs,
        budget=args.budget,
        max_attacks=args.max_attacks,
        search_depth=args.depth,
        max_depth=args.max_depth,
    )
    path = _write_report(report, args.out)
    bounded = False
    for c in report.cells:
        print(
            f"{c.model.value:<12} {c.property_name:<6} patch={'on' if c.patch_enabled else 'off'} "
            f"{c.status}"
            + (f" ({len(c.attacks)} attacks)" if c.found else "")
        )
        bounded = bounded or c.status == "NoneBounded"
        for i, a in enumerate(c.shrunk):
            stem = (
                f"trace_{c.model.value}_{c.property_name}_"
                f"{'on' if c.patch_enabled else 'off'}_{i}"
            )
            (args.out / f"{stem}.json").write_text(
                json.dumps(trace_to_json(a.witness, report.config), indent=2)
            )
            (args.out / f"{stem}.txt").write_text(
                render_trace(list(a.witness.labels)) + "\n"
            )
    print(f"report written to {path}")
    if args.check_against_paper:
        mismatches = []
        for c in report.cells:
            if c.patch_enabled:
                continue
            expected = (c.model, c.property_name) in PAPER_ATTACK_CELLS
            if c.found != expected:
                mismatches.append(
                    f"{c.model.value} x {c.property_name}: "
                    f"expected {'attack' if expected else 'no attack'}, got {c.status}"
                )
        if mismatches:
            print("MISMATCH against the published attack table:")
            for m in mismatches:
                print("  " + m)
            return EXIT_VERIFICATION_FAILURE
        print("matches the published attack table")
    return EXIT_BOUND if bounded else EXIT_OK


def cmd_reproduce_cve(args) -> int:
    patched = args.patch == "on"
    report = reproduce_cve(
        patch=patched,
        budget=args.budget,
        search_depth=args.depth,
        max_depth=args.max_depth,
    )
    if patched:
        if report.found:
            print("unexpected: an attack exists despite the patch")
            return EXIT_VERIFICATION_FAILURE
        print("certificate: " + report.trace_text)
        return EXIT_OK if report.exhausted_when_patched else EXIT_BOUND
    if not report.found:
        print("regression: no attack found for the unpatched model")
        return EXIT_VERIFICATION_FAILURE
    rendered = "; ".join(
        " ".join(str(part) for part in action) for action in report.shrunk_actions
    )
    print(f"shrunk attack: {rendered}")
    print(report.trace_text)
    return EXIT_OK


def cmd_ambiguity_demo(args) -> int:
    try:
        labels, states = ambiguity_demo(misinterpret=True)
    except ScheduleInfeasible as e:
        print(f"schedule infeasible: {e}")
        return EXIT_VERIFICATION_FAILURE
    print(render_trace(labels, states))
    final = states[-1]
    a, b = final.peers[0].state.value, final.peers[1].state.value
    print(f"final: A={a} B={b}")
    try:
        ambiguity_demo(misinterpret=False)
    except ScheduleInfeasible as e:
        print(f"with the correct interpretation: {e}")
        correct_blocked = True
    else:
        correct_blocked = False
    ok = (a, b) == ("Closed", "Established") and correct_blocked
    return EXIT_OK if ok else EXIT_VERIFICATION_FAILURE


def cmd_render_trace(args) -> int:
    from .experiments import SchemaError

    try:
        doc = json.loads(args.trace.read_text())
        labels, _ = trace_labels_from_json(doc)
    except (OSError, json.JSONDecodeError, SchemaError) as e:
        print(f"cannot read trace: {e}")
        return EXIT_USAGE
    print(render_trace(labels))
    return EXIT_OK


def cmd_explore(args) -> int:
    daisy = None
    if args.attacker:
        kind = _MODEL_NAMES[args.attacker]
        daisy = build_daisy(kind, vocab=vocab_for(kind, Phase.FULL), budget=args.budget)
    config = ScenarioConfig(
        patch_enabled=args.patch == "on",
        misinterpret_521=args.misinterpret,
        tsn_enabled=args.tsn,
        daisy=daisy,
    )
    summary = explore(config, cap=args.cap)
    print(
        f"states={summary.state_count} transitions={summary.transition_count} "
        f"deadlocks={len(summary.deadlocks)} "
        f"unreachable={sorted(s.value for s in summary.unreachable_peer_states) or 'none'}"
    )
    if summary.bound_exceeded:
        return EXIT_BOUND
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        _apply_config_file(args)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        handler = {
            "verify-baseline": cmd_verify_baseline,
            "matrix": cmd_matrix,
            "reproduce-cve": cmd_reproduce_cve,
            "ambiguity-demo": cmd_ambiguity_demo,
            "render-trace": cmd_render_trace,
            "explore": cmd_explore,
        }[args.cmd]
        return handler(args)
    except InvalidConfig as e:
        print(f"configuration error: {e}")
        return EXIT_USAGE
    except BoundExceeded as e:
        print(f"bound exceeded: {e}")
        return EXIT_BOUND


if __name__ == "__main__":
    sys.exit(main())

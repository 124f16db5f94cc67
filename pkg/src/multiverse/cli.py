"""``multiverse`` command line.

Exit status is 0 on success, 1 when the engine denies the request, and 2
for usage and parse errors.  ``--json`` prints one JSON object per command
on stdout; diagnostics always go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from multiverse import commands
from multiverse.audit import LOG_FILENAME, AuditLog, verify_file
from multiverse.commands import EXIT_DENIED, EXIT_USAGE, Outcome
from multiverse.engine import Engine, ManualClock, system_clock
from multiverse.errors import MultiverseError
from multiverse.frame import Frame
from multiverse.scenarios import all_scenarios, find_scenario, run_scenario

FRAME_ENV = "MULTIVERSE_FRAME"
DEFAULT_FRAME = "multiverse.frame.json"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiverse", description=__doc__.splitlines()[0])
    parser.add_argument("--frame", help=f"frame file (default: ${FRAME_ENV} or {DEFAULT_FRAME})")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--now", type=int, help="fixed clock, in seconds since the epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create an empty frame file")
    p.add_argument("path", nargs="?")
    p.add_argument("--force", action="store_true", help="overwrite an existing frame")
    p.set_defaults(handler=None)

    commands.add_engine_commands(sub)

    p = sub.add_parser("audit", help="verify or show the audit log")
    p.add_argument("action", choices=["verify", "tail"])
    p.add_argument("-n", type=int, default=10, help="records to show with tail")
    p.set_defaults(handler=None)

    p = sub.add_parser("scenario", help="run builtin scenarios")
    p.add_argument("action", choices=["run", "list"])
    p.add_argument("name", nargs="?", help="scenario name, or 'all'")
    p.set_defaults(handler=None)
    return parser


def frame_path(ns: argparse.Namespace) -> Path:
    return Path(getattr(ns, "path", None) or ns.frame or os.environ.get(FRAME_ENV) or DEFAULT_FRAME)


def emit(outcome: Outcome, as_json: bool) -> int:
    if as_json:
        print(json.dumps(outcome.to_dict(), sort_keys=True))
    elif outcome.ok:
        for line in outcome.lines:
            print(line)
    if not outcome.ok:
        print(f"multiverse: {outcome.code}: {outcome.message}", file=sys.stderr)
    return outcome.exit_code


def cmd_init(ns) -> Outcome:
    path = frame_path(ns)
    if path.exists() and not ns.force:
        return Outcome(False, "usage", f"{path} already exists (use --force)", exit_code=EXIT_USAGE)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(Frame().dumps(), encoding="utf-8")
    return Outcome(True, data={"frame": str(path)}, lines=[f"created {path}"])


def cmd_audit(ns) -> Outcome:
    path = frame_path(ns).parent / LOG_FILENAME
    if ns.action == "verify":
        if not path.exists():
            return Outcome(True, data={"records": 0, "ok": True}, lines=["no audit log yet"])
        verdict = verify_file(path)
        count = sum(1 for line in path.read_bytes().splitlines() if line.strip())
        data = {"records": count, "ok": verdict.ok, "brokenAt": verdict.broken_at, "reason": verdict.reason}
        if verdict.ok:
            return Outcome(True, data=data, lines=[f"chain intact, {count} record(s)"])
        return Outcome(False, "chain-broken", f"record {verdict.broken_at}: {verdict.reason}", data,
                       exit_code=EXIT_DENIED)
    try:
        records = AuditLog(path).tail(ns.n) if path.exists() else []
    except MultiverseError as exc:
        return Outcome(False, exc.code, str(exc), exit_code=EXIT_DENIED)
    lines = [f"#{r.seq} t={r.timestamp} {r.actor} {r.action} {r.outcome.get('status')}"
             + (f" {r.outcome.get('reason')}" if r.outcome.get("reason") else "")
             + (f" via {r.tunnel}" if r.tunnel else "") for r in records]
    return Outcome(True, data={"records": [r.to_dict() for r in records]}, lines=lines)


def cmd_scenario(ns) -> Outcome:
    scripts = all_scenarios()
    if ns.action == "list":
        return Outcome(True, data={"scenarios": [{"name": s.name, "description": s.description} for s in scripts]},
                       lines=[f"{s.name:<10} {s.description}" for s in scripts])
    if not ns.name:
        return Outcome(False, "usage", "scenario run needs a name or 'all'", exit_code=EXIT_USAGE)
    if ns.name != "all":
        try:
            scripts = [find_scenario(ns.name)]
        except KeyError:
            return Outcome(False, "usage", f"unknown scenario {ns.name!r}", exit_code=EXIT_USAGE)
    results = [run_scenario(s) for s in scripts]
    lines = []
    for r in results:
        lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.name}" + (f" ({r.error})" if r.error else ""))
        for step in r.results:
            mark = "ok " if step.passed else "BAD"
            lines.append(f"  [{mark}] {step.step.command}")
            lines.append(f"        expected {step.step.expect}, got {step.outcome.label}")
    data = {"scenarios": [r.to_dict() for r in results]}
    if all(r.passed for r in results):
        return Outcome(True, data=data, lines=lines)
    failed = ", ".join(r.name for r in results if not r.passed)
    return Outcome(False, "scenario-failed", f"failed: {failed}", data, lines, EXIT_DENIED)


def run_engine_command(ns) -> Outcome:
    path = frame_path(ns)
    if not path.exists():
        return Outcome(False, "usage", f"no frame at {path}; run 'multiverse init' first", exit_code=EXIT_USAGE)
    clock = ManualClock(ns.now) if ns.now is not None else system_clock
    try:
        engine = Engine.open(path, clock=clock)
    except (MultiverseError, ValueError, KeyError) as exc:
        return Outcome(False, "usage", f"cannot load {path}: {exc}", exit_code=EXIT_USAGE)
    before = engine.store.version
    outcome = commands.execute(engine, clock, ns)
    if engine.store.version != before:
        engine.save()
    return outcome


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command == "init":
        outcome = cmd_init(ns)
    elif ns.command == "audit":
        outcome = cmd_audit(ns)
    elif ns.command == "scenario":
        outcome = cmd_scenario(ns)
    else:
        outcome = run_engine_command(ns)
    if not ns.json and not outcome.ok and outcome.lines:
        for line in outcome.lines:
            print(line)
    return emit(outcome, ns.json)


if __name__ == "__main__":
    sys.exit(main())

"""Operator commands shared by the command line and the scenario runner.

Each command takes an :class:`~multiverse.engine.Engine` plus parsed
arguments and returns an :class:`Outcome`; exceptions never escape
:func:`execute`.
"""

from __future__ import annotations

import argparse
import base64
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from multiverse import dsl, templates
from multiverse.access import AccessRequest
from multiverse.engine import Engine, ManualClock
from multiverse.errors import MultiverseError, ParseError, ResolveError
from multiverse.model import StoredResource, coerce_tunnel

EXIT_OK, EXIT_DENIED, EXIT_USAGE = 0, 1, 2


@dataclass
class Outcome:
    ok: bool
    code: str = "ok"
    message: str = ""
    data: dict[str, Any] = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)
    exit_code: int = EXIT_OK

    @property
    def label(self) -> str:
        return "ok" if self.ok else f"denied:{self.code}"

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "code": self.code, "message": self.message, "data": self.data}


class UsageError(Exception):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _resource_dict(res: StoredResource, world: str | None = None) -> dict[str, Any]:
    return {
        "world": world,
        "resourceId": res.resource_id,
        "payload": base64.b64encode(res.data).decode("ascii"),
        "capacity": str(res.capacity) if res.capacity else None,
        "ttl": res.ttl,
        "originWorld": res.origin_world,
        "storedAt": res.stored_at,
    }


def _last_report(engine: Engine) -> dict | None:
    records = engine.audit.records
    return records[-1].report if records else None


def _payload_lines(res: StoredResource) -> list[str]:
    lines = [f"{res.resource_id}: {len(res.data)} bytes"]
    if res.capacity is not None:
        lines.append(f"capacity {res.capacity}, ttl {res.ttl}, from {res.origin_world}")
    return lines


# handlers -------------------------------------------------------------------

def cmd_access(engine: Engine, clock, ns) -> Outcome:
    req = AccessRequest(ns.agent, coerce_tunnel(ns.tunnel), ns.query, ns.resource, ns.purpose, ns.rho, ns.seed)
    if ns.query == "write":
        if ns.data is None:
            raise UsageError("--data is required for the write query")
        res = engine.write_remote(req, base64.b64decode(ns.data))
        world = req.tunnel.data_world
    else:
        res = engine.access_remote(req)
        world = engine.frame.agent_world(ns.agent) if ns.query == "read" else req.tunnel.data_world
    data = {"resource": _resource_dict(res, world), "report": _last_report(engine)}
    return Outcome(True, data=data, lines=_payload_lines(res))


def cmd_read_cached(engine: Engine, clock, ns) -> Outcome:
    res = engine.read_cached(ns.agent, ns.resource, ns.rho, ns.seed)
    data = {"resource": _resource_dict(res, engine.frame.agent_world(ns.agent)), "report": _last_report(engine)}
    return Outcome(True, data=data, lines=_payload_lines(res))


def cmd_third_party_read(engine: Engine, clock, ns) -> Outcome:
    res = engine.third_party_read(ns.agent, ns.world, ns.resource, ns.rho, ns.seed)
    data = {"resource": _resource_dict(res, ns.world), "report": _last_report(engine)}
    return Outcome(True, data=data, lines=_payload_lines(res))


def cmd_tunnels(engine: Engine, clock, ns) -> Outcome:
    found = [str(t) for t in engine.discover_tunnels(ns.agent, ns.target, ns.max_depth)]
    return Outcome(True, data={"tunnels": found}, lines=found or ["(no tunnels)"])


def cmd_access_points(engine: Engine, clock, ns) -> Outcome:
    points = [str(p) for p in engine.access_points(ns.agent, ns.world, ns.resource)]
    return Outcome(True, data={"accessPoints": points}, lines=points or ["(no access points)"])


def cmd_validate(engine: Engine, clock, ns) -> Outcome:
    report = engine.validate_tunnel(ns.tunnel, ns.rho, ns.seed, agent=ns.agent)
    lines = [f"{'valid' if report.valid else 'invalid'}: {report.tunnel}"]
    lines += [f"  level {c.level} {'ran ' if c.performed else 'skip'} {'pass' if c.passed else 'FAIL'} "
              f"{c.subject} {c.detail}".rstrip() for c in report.checks]
    code = "ok" if report.valid else "tunnel-invalid"
    return Outcome(report.valid, code, report.failure[1] if report.failure else "", {"report": report.to_dict()},
                   lines, EXIT_OK if report.valid else EXIT_DENIED)


def cmd_sweep(engine: Engine, clock, ns) -> Outcome:
    world = ns.world or engine.frame.agent_world(ns.agent)
    evicted = engine.sweep_expired(ns.agent, world)
    return Outcome(True, data={"world": world, "evicted": evicted},
                   lines=[f"evicted {len(evicted)} from {world}"] + evicted)


def cmd_check_binding(engine: Engine, clock, ns) -> Outcome:
    if engine.check_binding(ns.world, ns.template):
        return Outcome(True, data={"world": ns.world, "template": ns.template, "active": True},
                       lines=[f"{ns.template} in {ns.world}: active"])
    return Outcome(False, "expired-template", f"{ns.template} in {ns.world} has expired",
                   {"world": ns.world, "template": ns.template, "active": False}, exit_code=EXIT_DENIED)


def _apply(engine: Engine, doc: dsl.PolicyDocument, actor: str, base_dir=None) -> Outcome:
    summary = dsl.apply_policy(doc, actor, engine, base_dir=base_dir)
    return Outcome(True, data={"applied": summary.applied, "created": summary.created},
                   lines=[f"applied {summary.applied} statement(s)"] + summary.created)


def cmd_policy(engine: Engine, clock, ns) -> Outcome:
    return _apply(engine, dsl.parse_policy(ns.text), ns.agent)


def cmd_apply(engine: Engine, clock, ns) -> Outcome:
    path = Path(ns.script)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return _apply(engine, dsl.parse_policy(text), ns.agent, path.parent)


def cmd_advance(engine: Engine, clock, ns) -> Outcome:
    if not isinstance(clock, ManualClock):
        raise UsageError("advance needs a manual clock")
    now = clock.advance(ns.seconds)
    return Outcome(True, data={"now": now}, lines=[f"now {now}"])


def cmd_inspect(engine: Engine, clock, ns) -> Outcome:
    frame = engine.frame
    if ns.kind == "world":
        world = frame.world(ns.id)
        data = world.to_dict()
        data["roles"] = {}
        for other in sorted(frame.worlds):
            names = sorted(engine_roles(engine, other, ns.id))
            if names:
                data["roles"][other] = names
        data["resources"] = sorted(r.resource_id for r in frame.resources_in(ns.id))
        lines = [f"world {world.id} ({world.name})", f"  owners: {', '.join(sorted(world.owners))}",
                 f"  location: {world.location or '-'}"]
        lines += [f"  binds {b.template}" + (f" via {b.capacity} until {b.ttl}" if b.capacity else "")
                  + (" [expired]" if b.expired else "") for b in world.bindings]
        lines += [f"  {who} plays {', '.join(r)}" for who, r in data["roles"].items()]
        lines += [f"  resource {r}" for r in data["resources"]]
    elif ns.kind == "template":
        resolved = templates.resolve_template(frame, ns.id)
        data = resolved.to_dict()
        data["ancestry"] = templates.ancestry(frame, ns.id)
        lines = [f"template {resolved.id} defined in {resolved.defined_in}"
                 + (" (public)" if resolved.public else "")]
        lines += [f"  dap {d.query} role {d.required_role} purposes {sorted(d.allowed_purposes)}"
                  for d in resolved.data_access_points]
        lines += [f"  in {r.role}" for r in resolved.incoming]
        lines += [f"  out {r.name} as {r.counterpart}" for r in resolved.outgoing]
    else:
        world = ns.world
        if world is None:
            holders = [w for (w, rid) in frame.resources if rid == ns.id]
            if len(holders) != 1:
                raise UsageError(f"resource {ns.id!r} is held by {len(holders)} worlds; pass --world")
            world = holders[0]
        res = frame.resource(world, ns.id)
        data = _resource_dict(res, world)
        lines = [f"resource {ns.id} in {world}"] + _payload_lines(res)
    return Outcome(True, data=data, lines=lines)


def engine_roles(engine: Engine, subject: str, world: str) -> set[str]:
    return {a.role for a in engine.roles_of(subject, world)}


# parser ---------------------------------------------------------------------

def _risk_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, default=0.0, help="access risk in [0, 1]")
    p.add_argument("--seed", type=int, default=0, help="seed for the validation draws")


def add_engine_commands(sub, *, scenario: bool = False) -> None:
    """Register the engine commands on an ``add_subparsers`` object."""

    def add(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("access", cmd_access, "fetch a resource through a role tunnel")
    p.add_argument("--as", dest="agent", required=True)
    p.add_argument("--tunnel", required=True)
    p.add_argument("--query", default="read", choices=["read", "write", "delete"])
    p.add_argument("--resource", required=True)
    p.add_argument("--purpose", required=True)
    p.add_argument("--data", help="base64 payload for the write query")
    _risk_args(p)

    p = add("read-cached", cmd_read_cached, "read a resource from the agent's own world")
    p.add_argument("--as", dest="agent", required=True)
    p.add_argument("--resource", required=True)
    _risk_args(p)

    p = add("third-party-read", cmd_third_party_read, "read a resource held in another world")
    p.add_argument("--as", dest="agent", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--resource", required=True)
    _risk_args(p)

    p = add("tunnels", cmd_tunnels, "list role tunnels from an agent to a world")
    p.add_argument("--as", dest="agent", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--max-depth", type=int, default=4)

    p = add("access-points", cmd_access_points, "list legitimate accesses to a resource")
    p.add_argument("--as", dest="agent", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--resource", required=True)

    p = add("validate", cmd_validate, "validate a role tunnel and print the report")
    p.add_argument("--tunnel", required=True)
    p.add_argument("--as", dest="agent")
    _risk_args(p)

    p = add("sweep", cmd_sweep, "evict expired cached resources")
    p.add_argument("--as", dest="agent", required=True)
    p.add_argument("--world", help="defaults to the agent's world")

    p = add("check-binding", cmd_check_binding, "check that a template binding is still usable")
    p.add_argument("--world", required=True)
    p.add_argument("--template", required=True)

    p = add("apply", cmd_apply, "apply a policy script")
    p.add_argument("script")
    p.add_argument("--as", dest="agent", required=True)

    p = add("inspect", cmd_inspect, "show a world, template or resource")
    p.add_argument("kind", choices=["world", "template", "resource"])
    p.add_argument("id")
    p.add_argument("--world", help="world holding the resource")

    if scenario:
        p = add("policy", cmd_policy, "apply inline policy statements")
        p.add_argument("text")
        p.add_argument("--as", dest="agent", default="")
        p = add("advance", cmd_advance, "move the manual clock forward")
        p.add_argument("seconds", type=int)


def step_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="step", add_help=False)
    add_engine_commands(parser.add_subparsers(dest="command", required=True, parser_class=_Parser),
                        scenario=True)
    return parser


def execute(engine: Engine, clock, ns: argparse.Namespace) -> Outcome:
    """Run a parsed command, turning errors into a denied :class:`Outcome`."""
    try:
        return ns.handler(engine, clock, ns)
    except UsageError as exc:
        return Outcome(False, "usage", str(exc), exit_code=EXIT_USAGE)
    except (ParseError, ResolveError) as exc:
        data = {}
        if getattr(exc, "line", None) is not None:
            data = {"line": exc.line, "column": exc.column}
        return Outcome(False, exc.code, str(exc), data, exit_code=EXIT_USAGE)
    except MultiverseError as exc:
        data = {}
        report = getattr(exc, "report", None)
        if report is not None:
            data["report"] = report.to_dict()
        if getattr(exc, "line", None) is not None:
            data.update(line=exc.line, column=exc.column)
        return Outcome(False, exc.code, str(exc), data, exit_code=EXIT_DENIED)


def run_step(engine: Engine, clock, line: str) -> Outcome:
    """Parse and run one scenario step such as ``access --as Ram ...``."""
    try:
        ns = step_parser().parse_args(shlex.split(line))
    except UsageError as exc:
        return Outcome(False, "usage", str(exc), exit_code=EXIT_USAGE)
    return execute(engine, clock, ns)

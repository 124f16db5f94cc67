"""Role-tunnel discovery and validation.

A tunnel ``r_n(w_n):...:r_1(w_1):Owner(w)`` costs n+1 level-0 checks, one
per segment.  Each role is declared by some template binding; when that
binding was imported through its own capacity tunnel, re-validating that
tunnel is a level-1 check, and so on downwards.  A level-k check is
performed with probability ``(1 - rho) ** k``, one Bernoulli draw per
candidate from a Philox stream keyed by the caller's seed, so a report can
be replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from multiverse.errors import ExpiredTemplate, MultiverseError, UnknownRole
from multiverse.frame import Frame
from multiverse.model import (
    ALL_PRIVILEGES,
    OWNER,
    AccessRisk,
    Privilege,
    RoleTunnel,
    Segment,
    TemplateBinding,
)
from multiverse import relationships, templates

DEFAULT_MAX_LEVEL = 8


@dataclass(frozen=True)
class Check:
    level: int
    subject: str
    performed: bool
    passed: bool | None
    detail: str = ""
    segment: int | None = None
    binding: tuple[str, str] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"level": self.level, "subject": self.subject, "performed": self.performed,
                "passed": self.passed, "detail": self.detail, "segment": self.segment,
                "binding": list(self.binding) if self.binding else None}


@dataclass
class ValidationReport:
    tunnel: RoleTunnel
    valid: bool
    checks: list[Check] = field(default_factory=list)
    failure: tuple[int, str] | None = None
    rng_seed: int = 0
    frame_version: int = 0
    rho: float = 0.0

    def performed(self, level: int | None = None) -> list[Check]:
        return [c for c in self.checks if c.performed and (level is None or c.level == level)]

    def candidates(self, level: int) -> list[Check]:
        return [c for c in self.checks if c.level == level]

    def failed_bindings(self) -> list[tuple[str, str]]:
        return [c.binding for c in self.checks
                if c.level > 0 and c.performed and not c.passed and c.binding is not None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "tunnel": str(self.tunnel), "valid": self.valid, "rho": self.rho,
            "checks": [c.to_dict() for c in self.checks],
            "failure": list(self.failure) if self.failure else None,
            "rngSeed": self.rng_seed, "frameVersion": self.frame_version,
        }


@dataclass(frozen=True)
class SegmentResult:
    index: int
    ok: bool
    reason: str
    binding: tuple[str, str] | None
    remote: bool


def _may_traverse(frame: Frame, edges, next_role: str, now: int | None) -> bool:
    for edge in edges:
        found = templates.outgoing_binding(frame, edge.source, edge.out_name, now, active_only=False)
        if found is None or not found[0].active(now):
            continue
        if next_role in found[2].roles:
            return True
    return False


def _check_role_segment(frame: Frame, tunnel: RoleTunnel, i: int, now: int | None) -> SegmentResult:
    role, world = tunnel.segments[i]
    holder, next_role = tunnel.segments[i + 1].world, tunnel.segments[i + 1].role
    if world not in frame.worlds:
        return SegmentResult(i, False, f"world {world!r} is not reachable", None, False)
    if holder not in frame.worlds:
        return SegmentResult(i, False, f"world {holder!r} is not reachable", None, False)
    found = templates.declaring_binding(frame, world, role, now, active_only=False)
    if found is None:
        return SegmentResult(i, False, f"no template in {world!r} declares role {role!r}", None, False)
    binding, _, spec = found
    ref = (world, binding.template)
    if not binding.active(now):
        return SegmentResult(i, False, f"template {binding.template!r} in {world!r} has expired", ref,
                             binding.remote)
    edges = relationships.supporting_edges(frame, holder, world, role, now)
    if not edges:
        return SegmentResult(i, False, f"{holder!r} does not play {role!r} in {world!r}", ref, binding.remote)
    for constraint in spec.constraints:
        try:
            ok = relationships.evaluate_constraint(frame, constraint, holder, world, now)
        except MultiverseError as exc:
            ok, constraint = False, f"{constraint} ({exc})"
        if not ok:
            return SegmentResult(i, False, f"constraint {constraint} no longer holds", ref, binding.remote)
    if not _may_traverse(frame, edges, next_role, now):
        return SegmentResult(i, False, f"role {next_role!r} in {holder!r} may not traverse to "
                                       f"{role!r} in {world!r}", ref, binding.remote)
    return SegmentResult(i, True, "", ref, binding.remote)


def _check_owner_segment(frame: Frame, tunnel: RoleTunnel, agent: str | None,
                         principal_world: str | None) -> SegmentResult:
    i = len(tunnel) - 1
    world = tunnel.segments[i].world
    if world not in frame.worlds:
        return SegmentResult(i, False, f"world {world!r} is not reachable", None, False)
    if agent is not None:
        if not frame.is_agent_world(world):
            return SegmentResult(i, False, f"{world!r} is not an agent world", None, False)
        if agent not in frame.worlds[world].owners:
            return SegmentResult(i, False, f"{agent!r} is not an owner of {world!r}", None, False)
    elif principal_world is not None:
        if world != principal_world:
            return SegmentResult(i, False, f"tunnel is held by {world!r}, not {principal_world!r}", None,
                                 False)
    return SegmentResult(i, True, "", None, False)


def segment_checks(frame: Frame, tunnel: RoleTunnel, now: int | None, agent: str | None = None,
                   principal_world: str | None = None) -> list[SegmentResult]:
    """Level-0 checks, evaluated from the Owner end toward the data end."""
    results = [_check_owner_segment(frame, tunnel, agent, principal_world)]
    for i in range(len(tunnel) - 2, -1, -1):
        results.append(_check_role_segment(frame, tunnel, i, now))
    return results


def _capacity_candidates(frame: Frame, tunnel: RoleTunnel, now: int | None) -> list[tuple[str, TemplateBinding]]:
    """Remote bindings declaring the roles of ``tunnel``, Owner end first."""
    out = []
    for role, world in reversed(tunnel.segments[:-1]):
        if world not in frame.worlds:
            continue
        found = templates.declaring_binding(frame, world, role, now, active_only=False)
        if found is not None and found[0].remote:
            out.append((world, found[0]))
    return out


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("rng seed must be non-negative")
    return np.random.Generator(np.random.Philox(seed))


def validate_tunnel(frame: Frame, tunnel: RoleTunnel, risk: AccessRisk | float = 0.0, rng_seed: int = 0,
                    now: int | None = None, agent: str | None = None, principal_world: str | None = None,
                    max_level: int = DEFAULT_MAX_LEVEL) -> ValidationReport:
    """Check a tunnel against ``frame``; never raises, never mutates.

    ``agent`` (for data access) or ``principal_world`` (for template
    capacities) says who must hold the terminal Owner segment.
    """
    if not isinstance(risk, AccessRisk):
        risk = AccessRisk(risk)
    rng = make_rng(rng_seed)
    report = ValidationReport(tunnel, True, rng_seed=rng_seed, frame_version=frame.version, rho=risk.rho)

    for result in segment_checks(frame, tunnel, now, agent, principal_world):
        report.checks.append(Check(0, str(tunnel.segments[result.index]), True, result.ok, result.reason,
                                   result.index, result.binding))
        if not result.ok and report.failure is None:
            report.failure = (result.index, result.reason)

    def explore(level: int, world: str, binding: TemplateBinding) -> None:
        subject = f"template {binding.template} in {world} via {binding.capacity}"
        if level > max_level:
            report.checks.append(Check(level, subject, False, None, "recursion depth cap",
                                       binding=(world, binding.template)))
            return
        performed = rng.random() < risk.probability(level)
        if performed:
            results = segment_checks(frame, binding.capacity, now, principal_world=world)
            bad = [r for r in results if not r.ok]
            detail = f"segment {bad[0].index}: {bad[0].reason}" if bad else ""
            report.checks.append(Check(level, subject, True, not bad, detail,
                                       binding=(world, binding.template)))
        else:
            report.checks.append(Check(level, subject, False, None, binding=(world, binding.template)))
        for sub_world, sub_binding in _capacity_candidates(frame, binding.capacity, now):
            explore(level + 1, sub_world, sub_binding)

    for world, binding in _capacity_candidates(frame, tunnel, now):
        explore(1, world, binding)

    failed = [c for c in report.checks if c.performed and not c.passed]
    report.valid = not failed
    if report.failure is None and failed:
        report.failure = (0, f"level {failed[0].level} check failed: {failed[0].subject}: {failed[0].detail}")
    return report


def effective_grant(frame: Frame, tunnel: RoleTunnel, now: int | None = None
                    ) -> tuple[frozenset[Privilege], frozenset[str]]:
    """Privileges and purposes granted by the data-end segment of ``tunnel``."""
    role, world = tunnel.segments[0]
    if role == OWNER:
        return ALL_PRIVILEGES, frozenset(frame.purposes)
    found = templates.declaring_binding(frame, world, role, now, active_only=False)
    if found is None:
        raise UnknownRole(f"no template in {world!r} declares role {role!r}")
    binding, _, spec = found
    if not binding.active(now):
        raise ExpiredTemplate(f"template {binding.template!r} in {world!r} has expired")
    return spec.privileges, spec.purposes


def discover_tunnels(frame: Frame, agent: str, target: str, max_depth: int = 4,
                     now: int | None = None) -> list[RoleTunnel]:
    """Every tunnel of at most ``max_depth`` segments from ``target`` back to the agent.

    Edges are walked backwards from ``target``; a hop is kept only when the
    role played in the holder world is entitled to traverse the edge.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    home = frame.agent_world(agent)
    frame.world(target)
    found: list[RoleTunnel] = []

    def walk(world: str, path: list[Segment], edges_in, visited: set[str]) -> None:
        if world == home:
            if edges_in is None or _may_traverse(frame, edges_in, OWNER, now):
                found.append(RoleTunnel(tuple(path) + (Segment(OWNER, home),)))
            return
        if len(path) + 2 > max_depth:
            return
        for holder in sorted(frame.worlds):
            if holder in visited:
                continue
            for role in sorted(relationships.role_names(frame, holder, world, now) - {OWNER}):
                if edges_in is not None and not _may_traverse(frame, edges_in, role, now):
                    continue
                edges = relationships.supporting_edges(frame, holder, world, role, now)
                walk(holder, path + [Segment(role, world)], edges, visited | {holder})

    walk(target, [], None, {target})
    return sorted(found, key=str)

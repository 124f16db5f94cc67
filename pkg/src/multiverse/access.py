"""Gated data access, cached remote copies, and lazy eviction.

Every entry point appends exactly one audit record, whatever the outcome.
Validation runs on a snapshot; evictions and cache inserts are separate
atomic commits that carry their audit record with them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from multiverse.audit import denied_outcome, ok_outcome
from multiverse.errors import (
    CapacityRevoked,
    CapacityUnsatisfied,
    ExpiredTemplate,
    InvalidTunnel,
    MultiverseError,
    NoSuchAccessPoint,
    PermissionDenied,
    PrivilegeDenied,
    PurposeNotPermitted,
    StorageFailure,
    TTLExpired,
    TunnelInvalid,
)
from multiverse.frame import Frame
from multiverse.model import (
    OWNER,
    QUERY_PRIVILEGES,
    AccessRisk,
    DataAccessPointSpec,
    Privilege,
    RoleTunnel,
    StoredResource,
    TemplateBinding,
    coerce_tunnel,
)
from multiverse import relationships, templates, tunnels

if TYPE_CHECKING:
    from multiverse.engine import Engine


@dataclass(frozen=True)
class AccessRequest:
    agent: str
    tunnel: RoleTunnel
    query: str
    resource_id: str
    purpose: str
    risk: AccessRisk = AccessRisk(0.0)
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tunnel", coerce_tunnel(self.tunnel))
        if not isinstance(self.risk, AccessRisk):
            object.__setattr__(self, "risk", AccessRisk(self.risk))


@dataclass(frozen=True)
class AccessPoint:
    """A concrete access: query on a resource, in a legal capacity, for a purpose."""

    query: str
    resource_id: str
    capacity: RoleTunnel
    purpose: str

    def __str__(self) -> str:
        return f"({self.query}({self.resource_id}), {self.capacity}, {self.purpose})"


def find_access_point(frame: Frame, world: str, query: str, role: str, now: int | None
                      ) -> tuple[TemplateBinding, DataAccessPointSpec] | None:
    for binding, resolved in templates.bindings(frame, world, now, active_only=False):
        for dap in resolved.data_access_points:
            if dap.query == query and dap.required_role == role:
                return binding, dap
    return None


def access_points(frame: Frame, agent: str, world: str, resource_id: str, now: int | None = None,
                  max_depth: int = 6) -> list[AccessPoint]:
    """Every access the agent could legitimately make on a resource in ``world``."""
    points = []
    for tunnel in tunnels.discover_tunnels(frame, agent, world, max_depth, now):
        if tunnel.segments[0].role == OWNER:
            continue
        checks = tunnels.segment_checks(frame, tunnel, now, agent=agent)
        if not all(c.ok for c in checks):
            continue
        _, rel_purposes = tunnels.effective_grant(frame, tunnel, now)
        for binding, resolved in templates.bindings(frame, world, now):
            for dap in resolved.data_access_points:
                if dap.required_role != tunnel.segments[0].role:
                    continue
                for purpose in sorted(dap.allowed_purposes & rel_purposes):
                    points.append(AccessPoint(dap.query, resource_id, tunnel, purpose))
    return points


def _mark_failed_bindings(engine: Engine, report: tunnels.ValidationReport) -> None:
    failed = report.failed_bindings()
    if not failed:
        return
    with engine.store.transaction() as draft:
        for world, template in failed:
            if world in draft.worlds:
                templates.mark_expired(draft, world, template)


def _evict(engine: Engine, world: str, resource_id: str, record: dict) -> None:
    with engine.store.transaction() as draft:
        draft.resources.pop((world, resource_id), None)
        engine.audit.append(frame_version=draft.version, **record)


def access_remote(engine: Engine, req: AccessRequest, now: int | None = None) -> StoredResource:
    """Fetch a resource through a role tunnel and cache a copy in the agent's world."""
    now = engine.now(now)
    engine.counts["access-remote"] += 1
    snap = engine.store.snapshot()
    record = dict(timestamp=now, actor=req.agent, action="access-remote", tunnel=str(req.tunnel),
                  purpose=req.purpose, query=req.query, resource_id=req.resource_id)
    report = None
    try:
        if req.purpose not in snap.purposes:
            raise PurposeNotPermitted(f"purpose {req.purpose!r} is not registered")
        privilege = QUERY_PRIVILEGES.get(req.query)
        if privilege is None:
            raise NoSuchAccessPoint(f"unknown query {req.query!r}")
        home = snap.agent_world(req.agent)
        role, world = req.tunnel.segments[0]
        if role == OWNER:
            raise NoSuchAccessPoint("an Owner-only tunnel reaches a local resource; read it directly")
        if req.tunnel.principal_world != home:
            raise InvalidTunnel(f"tunnel must end at Owner({home})")
        source = snap.resource(world, req.resource_id)
        if source.remote and req.query == "read":
            raise PermissionDenied("cached remote copies cannot be passed on")

        found = find_access_point(snap, world, req.query, role, now)
        if found is None:
            raise NoSuchAccessPoint(f"{world!r} has no {req.query!r} access point for role {role!r}")
        dap_binding, dap = found
        if not engine.check_binding(world, dap_binding.template, now):
            raise ExpiredTemplate(f"template {dap_binding.template!r} in {world!r} has expired")
        snap = engine.store.snapshot()

        report = tunnels.validate_tunnel(snap, req.tunnel, req.risk, req.rng_seed, now, agent=req.agent,
                                         max_level=engine.max_level)
        if not report.valid:
            _mark_failed_bindings(engine, report)
            raise TunnelInvalid(report)
        privileges, rel_purposes = tunnels.effective_grant(snap, req.tunnel, now)
        if privilege not in privileges:
            raise PrivilegeDenied(f"role {role!r} in {world!r} does not grant {privilege.value}")
        if req.purpose not in dap.allowed_purposes or req.purpose not in rel_purposes:
            raise PurposeNotPermitted(f"purpose {req.purpose!r} is not permitted for {req.query}("
                                      f"{req.resource_id}) as {role} in {world}")

        with engine.store.transaction() as draft:
            if req.query == "read":
                existing = draft.resources.get((home, req.resource_id))
                if existing is not None and not existing.remote:
                    raise PermissionDenied(f"{req.resource_id!r} would overwrite a local resource in {home!r}")
                result = StoredResource(req.resource_id, source.data, req.tunnel, now + dap.ttl_seconds,
                                        world, now)
                draft.resources[(home, req.resource_id)] = result
            elif req.query == "write":
                raise NoSuchAccessPoint("write through a tunnel needs a payload; use Engine.write_remote")
            else:
                result = draft.resources.pop((world, req.resource_id))
            engine.audit.append(outcome=ok_outcome(), frame_version=draft.version, report=report.to_dict(),
                                **record)
        return result
    except StorageFailure:
        raise
    except MultiverseError as exc:
        engine.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version,
                            report=report.to_dict() if report else None, **record)
        raise


def write_remote(engine: Engine, req: AccessRequest, data: bytes, now: int | None = None) -> StoredResource:
    """Write a resource in the data-end world of ``req.tunnel``."""
    now = engine.now(now)
    engine.counts["access-remote"] += 1
    snap = engine.store.snapshot()
    record = dict(timestamp=now, actor=req.agent, action="access-remote", tunnel=str(req.tunnel),
                  purpose=req.purpose, query=req.query, resource_id=req.resource_id)
    report = None
    try:
        if req.query != "write":
            raise NoSuchAccessPoint("write_remote only serves the write query")
        if req.purpose not in snap.purposes:
            raise PurposeNotPermitted(f"purpose {req.purpose!r} is not registered")
        role, world = req.tunnel.segments[0]
        home = snap.agent_world(req.agent)
        if role == OWNER or req.tunnel.principal_world != home:
            raise InvalidTunnel(f"tunnel must lead from another world to Owner({home})")
        found = find_access_point(snap, world, "write", role, now)
        if found is None:
            raise NoSuchAccessPoint(f"{world!r} has no write access point for role {role!r}")
        dap_binding, dap = found
        if not engine.check_binding(world, dap_binding.template, now):
            raise ExpiredTemplate(f"template {dap_binding.template!r} in {world!r} has expired")
        snap = engine.store.snapshot()
        report = tunnels.validate_tunnel(snap, req.tunnel, req.risk, req.rng_seed, now, agent=req.agent,
                                         max_level=engine.max_level)
        if not report.valid:
            _mark_failed_bindings(engine, report)
            raise TunnelInvalid(report)
        privileges, rel_purposes = tunnels.effective_grant(snap, req.tunnel, now)
        if Privilege.RESOURCE_WRITE not in privileges:
            raise PrivilegeDenied(f"role {role!r} in {world!r} does not grant resource.write")
        if req.purpose not in dap.allowed_purposes or req.purpose not in rel_purposes:
            raise PurposeNotPermitted(f"purpose {req.purpose!r} is not permitted")
        with engine.store.transaction() as draft:
            result = StoredResource(req.resource_id, bytes(data), stored_at=now)
            draft.resources[(world, req.resource_id)] = result
            engine.audit.append(outcome=ok_outcome(), frame_version=draft.version, report=report.to_dict(),
                                **record)
        return result
    except StorageFailure:
        raise
    except MultiverseError as exc:
        engine.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version,
                            report=report.to_dict() if report else None, **record)
        raise


def read_cached(engine: Engine, agent: str, resource_id: str, risk: AccessRisk | float = 0.0,
                rng_seed: int = 0, now: int | None = None) -> StoredResource:
    """Read from the agent's own world, re-validating remote copies first."""
    now = engine.now(now)
    engine.counts["read-cached"] += 1
    snap = engine.store.snapshot()
    record = dict(timestamp=now, actor=agent, action="read-cached", resource_id=resource_id)
    report = None
    try:
        risk = risk if isinstance(risk, AccessRisk) else AccessRisk(risk)
        home = snap.agent_world(agent)
        res = snap.resource(home, resource_id)
        if not res.remote:
            relationships.require_privilege(snap, agent, home, Privilege.RESOURCE_READ, now)
            engine.audit.append(outcome=ok_outcome(), frame_version=snap.version, **record)
            return res
        record["tunnel"] = str(res.capacity)
        if now >= res.ttl:
            exc = TTLExpired(f"{resource_id!r} expired at {res.ttl}; fetch it again through a legal tunnel")
            _evict(engine, home, resource_id, dict(record, outcome=denied_outcome(exc.code, str(exc))))
            raise exc
        report = tunnels.validate_tunnel(snap, res.capacity, risk, rng_seed, now, agent=agent,
                                         max_level=engine.max_level)
        if not report.valid:
            _mark_failed_bindings(engine, report)
            exc = CapacityRevoked(f"legal capacity {res.capacity} no longer holds: {report.failure[1]}")
            _evict(engine, home, resource_id, dict(record, outcome=denied_outcome(exc.code, str(exc)),
                                                   report=report.to_dict()))
            raise exc
        engine.audit.append(outcome=ok_outcome(), frame_version=snap.version, report=report.to_dict(), **record)
        return res
    except (StorageFailure, TTLExpired, CapacityRevoked):
        raise
    except MultiverseError as exc:
        engine.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version,
                            report=report.to_dict() if report else None, **record)
        raise


def capacity_satisfied_by(frame: Frame, reader: str, capacity: RoleTunnel, now: int | None = None
                          ) -> tuple[bool, str]:
    """Whether ``reader`` personally holds every role of ``capacity``."""
    owner_world = capacity.principal_world
    if owner_world not in frame.worlds or reader not in frame.worlds[owner_world].owners:
        return False, f"{reader!r} is not an owner of {owner_world!r}"
    reader_world = frame.agent_world(reader)
    for role, world in capacity.segments[:-1]:
        if world not in frame.worlds or role not in relationships.role_names(frame, reader_world, world, now):
            return False, f"{reader!r} does not play {role!r} in {world!r}"
    return True, ""


def third_party_read(engine: Engine, reader: str, host_world: str, resource_id: str,
                     risk: AccessRisk | float = 0.0, rng_seed: int = 0, now: int | None = None) -> StoredResource:
    """Read a resource held in someone else's world.

    Remote copies are only released to readers who hold every role of the
    stored capacity themselves; the copy stays in place either way.
    """
    now = engine.now(now)
    engine.counts["third-party-read"] += 1
    snap = engine.store.snapshot()
    record = dict(timestamp=now, actor=reader, action="third-party-read", resource_id=resource_id,
                  detail={"world": host_world})
    report = None
    try:
        risk = risk if isinstance(risk, AccessRisk) else AccessRisk(risk)
        relationships.require_privilege(snap, reader, host_world, Privilege.RESOURCE_READ, now)
        res = snap.resource(host_world, resource_id)
        if res.remote:
            record["tunnel"] = str(res.capacity)
            if now >= res.ttl:
                exc = TTLExpired(f"{resource_id!r} expired at {res.ttl}")
                _evict(engine, host_world, resource_id, dict(record, outcome=denied_outcome(exc.code, str(exc))))
                raise exc
            ok, reason = capacity_satisfied_by(snap, reader, res.capacity, now)
            if not ok:
                raise CapacityUnsatisfied(reason)
            report = tunnels.validate_tunnel(snap, res.capacity, risk, rng_seed, now,
                                             principal_world=res.capacity.principal_world,
                                             max_level=engine.max_level)
            if not report.valid:
                raise CapacityUnsatisfied(f"stored capacity {res.capacity} no longer holds: {report.failure[1]}")
        engine.audit.append(outcome=ok_outcome(), frame_version=snap.version,
                            report=report.to_dict() if report else None, **record)
        return res
    except (StorageFailure, TTLExpired):
        raise
    except MultiverseError as exc:
        engine.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version,
                            report=report.to_dict() if report else None, **record)
        raise


def sweep_expired(engine: Engine, actor: str, world: str, now: int | None = None) -> list[str]:
    now = engine.now(now)
    engine.counts["sweep"] += 1
    snap = engine.store.snapshot()
    record = dict(timestamp=now, actor=actor, action="sweep", detail={"world": world})
    try:
        relationships.require_privilege(snap, actor, world, Privilege.WORLD_EDIT, now)
        with engine.store.transaction() as draft:
            evicted = [res.resource_id for res in draft.resources_in(world) if res.remote and now >= res.ttl]
            for rid in evicted:
                del draft.resources[(world, rid)]
            engine.audit.append(outcome=ok_outcome(), frame_version=draft.version,
                                **dict(record, detail={"world": world, "evicted": evicted}))
        return evicted
    except StorageFailure:
        raise
    except MultiverseError as exc:
        engine.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version, **record)
        raise

"""The engine: one frame store, one audit log, one clock.

:class:`Engine` is the entry point most callers want.  Reads run against
the current snapshot; every mutation is a single atomic commit, and the
relationship/template mutations commit together with their audit record.
"""

from __future__ import annotations

import time
from collections import Counter
from pathlib import Path
from typing import Callable

from multiverse import access, relationships, templates, tunnels, worlds
from multiverse.audit import AuditLog, denied_outcome, ok_outcome
from multiverse.errors import MultiverseError, StorageFailure
from multiverse.frame import Frame
from multiverse.model import (
    AccessRisk,
    PendingRelationship,
    RelationshipInstance,
    RoleTunnel,
    StoredResource,
    Template,
    TemplateBinding,
    coerce_tunnel,
)
from multiverse.store import FrameStore


class ManualClock:
    """A settable clock for tests and scripts."""

    def __init__(self, now: int = 0):
        self.now = int(now)

    def __call__(self) -> int:
        return self.now

    def advance(self, seconds: int) -> int:
        self.now += int(seconds)
        return self.now

    def set(self, now: int) -> int:
        self.now = int(now)
        return self.now


def system_clock() -> int:
    return int(time.time())


class Engine:
    def __init__(self, store: FrameStore | None = None, audit: AuditLog | None = None,
                 clock: Callable[[], int] | None = None, max_level: int = tunnels.DEFAULT_MAX_LEVEL):
        self.store = store if store is not None else FrameStore()
        self.audit = audit if audit is not None else AuditLog()
        self.clock = clock if clock is not None else system_clock
        self.max_level = max_level
        # calls of each audited operation, for completeness checks
        self.counts: Counter[str] = Counter()

    @classmethod
    def open(cls, frame_path, audit_path=None, clock=None) -> Engine:
        frame_path = Path(frame_path)
        if audit_path is None:
            audit_path = frame_path.parent / "audit.log.ndjson"
        return cls(FrameStore.open(frame_path), AuditLog(audit_path), clock)

    def now(self, now: int | None = None) -> int:
        return int(now) if now is not None else int(self.clock())

    @property
    def frame(self) -> Frame:
        return self.store.snapshot()

    def save(self, path=None) -> Path:
        return self.store.save(path)

    # frame-store operations ----------------------------------------------

    def register_purpose(self, purpose: str) -> bool:
        if purpose in self.frame.purposes:
            return False
        with self.store.transaction() as draft:
            return worlds.register_purpose(draft, purpose)

    def register_agent(self, agent: str, name: str = "", now: int | None = None) -> str:
        with self.store.transaction() as draft:
            return worlds.register_agent(draft, agent, name, self.now(now))

    def create_world(self, creator: str, name: str, location: str | None = None, *,
                     world_id: str | None = None, require_approval: bool = False,
                     now: int | None = None) -> str:
        now = self.now(now)
        with self.store.transaction() as draft:
            return worlds.create_world(draft, creator, name, now, location, world_id, require_approval)

    def relocate_world(self, actor: str, world: str, new_location: str | None, now: int | None = None) -> None:
        with self.store.transaction() as draft:
            worlds.relocate_world(draft, actor, world, new_location, self.now(now))

    def delete_world(self, actor: str, world: str, now: int | None = None) -> None:
        with self.store.transaction() as draft:
            worlds.delete_world(draft, actor, world, self.now(now))

    def add_owner(self, actor: str, world: str, agent: str, now: int | None = None) -> None:
        with self.store.transaction() as draft:
            worlds.add_owner(draft, actor, world, agent, self.now(now))

    def remove_owner(self, actor: str, world: str, agent: str, now: int | None = None) -> None:
        with self.store.transaction() as draft:
            worlds.remove_owner(draft, actor, world, agent, self.now(now))

    def set_require_approval(self, actor: str, world: str, value: bool = True, now: int | None = None) -> None:
        with self.store.transaction() as draft:
            worlds.set_require_approval(draft, actor, world, value, self.now(now))

    def put_resource(self, actor: str, world: str, resource_id: str, data: bytes, now: int | None = None) -> None:
        now = self.now(now)
        with self.store.transaction() as draft:
            worlds.put_resource(draft, actor, world, resource_id, data, now)

    def delete_resource(self, actor: str, world: str, resource_id: str, now: int | None = None) -> None:
        with self.store.transaction() as draft:
            worlds.delete_resource(draft, actor, world, resource_id, self.now(now))

    def containment_chain(self, world: str) -> list[str]:
        return self.frame.containment_chain(world)

    # templates -------------------------------------------------------------

    def define_template(self, actor: str, world: str, template: Template) -> str:
        with self.store.transaction() as draft:
            return templates.define_template(draft, actor, world, template)

    def resolve_template(self, template_id: str) -> Template:
        return templates.resolve_template(self.frame, template_id)

    def _capacity_validator(self, now: int):
        def validate(tunnel: RoleTunnel, world: str) -> tuple[bool, str]:
            report = tunnels.validate_tunnel(self.frame, tunnel, 0.0, 0, now, principal_world=world,
                                             max_level=self.max_level)
            return report.valid, (report.failure[1] if report.failure else "")
        return validate

    def implement_template(self, actor: str, world: str, template_id: str, via: RoleTunnel | str | None = None,
                           ttl_seconds: int | None = None, now: int | None = None) -> TemplateBinding:
        now = self.now(now)
        via = coerce_tunnel(via) if via is not None else None
        self.counts["implement-template"] += 1
        snap = self.frame
        record = dict(timestamp=now, actor=actor, action="implement-template",
                      tunnel=str(via) if via else None, detail={"world": world, "template": template_id})
        try:
            with self.store.transaction() as draft:
                binding = templates.implement_template(draft, actor, world, template_id, now, via, ttl_seconds,
                                                       self._capacity_validator(now))
                self.audit.append(outcome=ok_outcome(), frame_version=draft.version, **record)
            return binding
        except StorageFailure:
            raise
        except MultiverseError as exc:
            self.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version, **record)
            raise

    def check_binding(self, world: str, template_id: str, now: int | None = None,
                      validator: templates.BindingValidator | None = None) -> bool:
        """Whether a binding is usable; marks it expired (for good) when it is not."""
        now = self.now(now)
        if validator is None:
            validate = self._capacity_validator(now)
            validator = lambda w, b: validate(b.capacity, w)  # noqa: E731
        ok, _ = templates.evaluate_binding(self.frame, world, template_id, now, validator)
        if not ok and not templates.find_binding(self.frame, world, template_id).expired:
            with self.store.transaction() as draft:
                templates.mark_expired(draft, world, template_id)
        return ok

    # relationships ---------------------------------------------------------

    def evaluate_constraint(self, constraint, source: str, target: str, now: int | None = None) -> bool:
        return relationships.evaluate_constraint(self.frame, constraint, source, target, now)

    def roles_of(self, subject: str, world: str, now: int | None = None) -> set[relationships.RoleAssertion]:
        return relationships.roles_of(self.frame, subject, world, now)

    def _refresh_formation_bindings(self, source: str, target: str, out_name: str, now: int) -> None:
        snap = self.frame
        (out_binding, out_spec), (in_binding, _) = relationships.formation_specs(snap, source, target,
                                                                                  out_name, now)
        self.check_binding(source, out_binding.template, now)
        self.check_binding(target, in_binding.template, now)

    def establish_relationship(self, actor: str, source: str, target: str, out_name: str,
                               now: int | None = None) -> RelationshipInstance | PendingRelationship:
        now = self.now(now)
        self.counts["establish"] += 1
        snap = self.frame
        record = dict(timestamp=now, actor=actor, action="establish",
                      detail={"source": source, "target": target, "outName": out_name})
        try:
            self._refresh_formation_bindings(source, target, out_name, now)
            with self.store.transaction() as draft:
                result = relationships.establish_relationship(draft, actor, source, target, out_name, now)
                detail = dict(record["detail"], role=result.role,
                              pending=isinstance(result, PendingRelationship))
                self.audit.append(outcome=ok_outcome(), frame_version=draft.version,
                                  **dict(record, detail=detail))
            return result
        except StorageFailure:
            raise
        except MultiverseError as exc:
            self.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version, **record)
            raise

    def approve_relationship(self, actor: str, source: str, target: str, out_name: str,
                             now: int | None = None) -> RelationshipInstance:
        now = self.now(now)
        self.counts["establish"] += 1
        snap = self.frame
        record = dict(timestamp=now, actor=actor, action="establish",
                      detail={"source": source, "target": target, "outName": out_name, "approval": True})
        try:
            self._refresh_formation_bindings(source, target, out_name, now)
            with self.store.transaction() as draft:
                result = relationships.approve_relationship(draft, actor, source, target, out_name, now)
                self.audit.append(outcome=ok_outcome(), frame_version=draft.version, **record)
            return result
        except StorageFailure:
            raise
        except MultiverseError as exc:
            self.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version, **record)
            raise

    def revoke_relationship(self, actor: str, instance: RelationshipInstance | tuple[str, str, str],
                            now: int | None = None) -> None:
        now = self.now(now)
        self.counts["revoke"] += 1
        snap = self.frame
        key = instance.key[:3] if isinstance(instance, RelationshipInstance) else tuple(instance)
        record = dict(timestamp=now, actor=actor, action="revoke",
                      detail={"source": key[0], "target": key[1], "outName": key[2]})
        try:
            with self.store.transaction() as draft:
                relationships.revoke_relationship(draft, actor, relationships.find_instance(draft, *key))
                self.audit.append(outcome=ok_outcome(), frame_version=draft.version, **record)
        except StorageFailure:
            raise
        except MultiverseError as exc:
            self.audit.append(outcome=denied_outcome(exc.code, str(exc)), frame_version=snap.version, **record)
            raise

    # tunnels ---------------------------------------------------------------

    def discover_tunnels(self, agent: str, target: str, max_depth: int = 4, now: int | None = None
                         ) -> list[RoleTunnel]:
        return tunnels.discover_tunnels(self.frame, agent, target, max_depth, self.now(now))

    def validate_tunnel(self, tunnel: RoleTunnel | str, risk: AccessRisk | float = 0.0, rng_seed: int = 0,
                        now: int | None = None, agent: str | None = None,
                        principal_world: str | None = None) -> tunnels.ValidationReport:
        return tunnels.validate_tunnel(self.frame, coerce_tunnel(tunnel), risk, rng_seed, self.now(now),
                                       agent, principal_world, self.max_level)

    def effective_grant(self, tunnel: RoleTunnel | str, now: int | None = None):
        return tunnels.effective_grant(self.frame, coerce_tunnel(tunnel), self.now(now))

    # data access -----------------------------------------------------------

    def access_points(self, agent: str, world: str, resource_id: str, now: int | None = None
                      ) -> list[access.AccessPoint]:
        return access.access_points(self.frame, agent, world, resource_id, self.now(now))

    def access_remote(self, req: access.AccessRequest, now: int | None = None) -> StoredResource:
        return access.access_remote(self, req, now)

    def write_remote(self, req: access.AccessRequest, data: bytes, now: int | None = None) -> StoredResource:
        return access.write_remote(self, req, data, now)

    def read_cached(self, agent: str, resource_id: str, risk: AccessRisk | float = 0.0, rng_seed: int = 0,
                    now: int | None = None) -> StoredResource:
        return access.read_cached(self, agent, resource_id, risk, rng_seed, now)

    def third_party_read(self, reader: str, host_world: str, resource_id: str, risk: AccessRisk | float = 0.0,
                         rng_seed: int = 0, now: int | None = None) -> StoredResource:
        return access.third_party_read(self, reader, host_world, resource_id, risk, rng_seed, now)

    def sweep_expired(self, actor: str, world: str, now: int | None = None) -> list[str]:
        return access.sweep_expired(self, actor, world, now)

"""Constraint evaluation, relationship formation, and role computation."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from multiverse.errors import (
    ConstraintViolated,
    DuplicateRelationship,
    ExpiredTemplate,
    PermissionDenied,
    UnknownInstance,
    UnknownSpec,
)
from multiverse.frame import Frame
from multiverse.model import (
    ALL_PRIVILEGES,
    OWNER,
    Constraint,
    ConstraintKind,
    PendingRelationship,
    Privilege,
    RelationshipInstance,
    Side,
)
from multiverse import templates


class Basis(str, enum.Enum):
    OWNER = "owner"
    RELATIONSHIP = "relationship"
    INHERITED = "containment-inherited"


@dataclass(frozen=True)
class RoleAssertion:
    subject: str
    world: str
    role: str
    basis: Basis


def _counterparts(frame: Frame, world_id: str, name: str) -> list[str]:
    """Worlds related to ``world_id`` by an edge carrying ``name`` at either end."""
    out = []
    for rel in frame.relationships:
        if name not in rel.names():
            continue
        if rel.source == world_id:
            out.append(rel.target)
        elif rel.target == world_id:
            out.append(rel.source)
    return out


def evaluate_constraint(frame: Frame, constraint: Constraint, source: str, target: str,
                        now: int | None = None) -> bool:
    frame.world(source)
    frame.world(target)
    side = source if constraint.side is Side.SOURCE else target
    if constraint.template_ref is not None:
        frame.template(constraint.template_ref)
    if constraint.kind is ConstraintKind.IMPLEMENTS:
        return templates.implements(frame, side, constraint.template_ref, now)
    others = _counterparts(frame, side, constraint.rel_name)
    if constraint.kind is ConstraintKind.RELT:
        return any(templates.implements(frame, w, constraint.template_ref, now) for w in others)
    return constraint.world_ref in others


def direct_roles(frame: Frame, subject: str, world_id: str) -> set[str]:
    return {r.role for r in frame.relationships if r.source == subject and r.target == world_id}


def _is_owner(frame: Frame, subject: str, world_id: str) -> bool:
    if subject == world_id:
        return True
    agent = frame.agent_of(subject)
    return agent is not None and agent in frame.world(world_id).owners


def _inheriting_containers(frame: Frame, world_id: str, now: int | None) -> list[str]:
    """Containers whose roles flow down into ``world_id``.

    A container qualifies when both worlds hold an active binding of the same
    template and no world in between holds an expired binding of it.
    """
    chain = frame.containment_chain(world_id)[1:]
    found = []
    for binding, _ in templates.bindings(frame, world_id, now):
        tid = binding.template
        for container in chain:
            other = frame.world(container).binding(tid)
            if other is None:
                continue
            if not other.active(now):
                break
            if container not in found:
                found.append(container)
    return found


def roles_of(frame: Frame, subject: str, world_id: str, now: int | None = None) -> set[RoleAssertion]:
    frame.world(subject)
    frame.world(world_id)
    roles = set()
    if _is_owner(frame, subject, world_id):
        roles.add(RoleAssertion(subject, world_id, OWNER, Basis.OWNER))
    for role in direct_roles(frame, subject, world_id):
        roles.add(RoleAssertion(subject, world_id, role, Basis.RELATIONSHIP))
    for container in _inheriting_containers(frame, world_id, now):
        for role in direct_roles(frame, subject, container):
            roles.add(RoleAssertion(subject, world_id, role, Basis.INHERITED))
    return roles


def role_names(frame: Frame, subject: str, world_id: str, now: int | None = None) -> set[str]:
    return {a.role for a in roles_of(frame, subject, world_id, now)}


def supporting_edges(frame: Frame, subject: str, world_id: str, role: str,
                     now: int | None = None) -> list[RelationshipInstance]:
    """Relationship instances through which ``subject`` plays ``role`` in ``world_id``."""
    places = [world_id] + _inheriting_containers(frame, world_id, now)
    return [r for r in frame.relationships
            if r.source == subject and r.role == role and r.target in places]


def privileges_of(frame: Frame, subject: str, world_id: str, now: int | None = None) -> frozenset[Privilege]:
    names = role_names(frame, subject, world_id, now)
    if OWNER in names:
        return ALL_PRIVILEGES
    granted = set()
    for role in names:
        found = templates.declaring_binding(frame, world_id, role, now)
        if found is not None:
            granted |= found[2].privileges
    return frozenset(granted)


def has_privilege(frame: Frame, agent: str, world_id: str, privilege: Privilege,
                  now: int | None = None) -> bool:
    subject = frame.agent_world(agent)
    if agent in frame.world(world_id).owners:
        return True
    return privilege in privileges_of(frame, subject, world_id, now)


def require_privilege(frame: Frame, agent: str, world_id: str, privilege: Privilege,
                      now: int | None = None) -> None:
    if not has_privilege(frame, agent, world_id, privilege, now):
        raise PermissionDenied(f"{agent!r} lacks {privilege.value} in world {world_id!r}")


def formation_specs(frame: Frame, source: str, target: str, out_name: str, now: int | None):
    """Locate the outgoing and matching incoming specs for a new edge."""
    found_out = templates.outgoing_binding(frame, source, out_name, now, active_only=False)
    if found_out is None:
        raise UnknownSpec(f"world {source!r} declares no outgoing relationship {out_name!r}")
    out_binding, _, out_spec = found_out
    if not out_binding.active(now):
        raise ExpiredTemplate(f"template {out_binding.template!r} in {source!r} has expired")
    found_in = templates.declaring_binding(frame, target, out_spec.counterpart, now, active_only=False)
    if found_in is None:
        raise UnknownSpec(f"world {target!r} accepts no incoming role {out_spec.counterpart!r}")
    in_binding, _, in_spec = found_in
    if not in_binding.active(now):
        raise ExpiredTemplate(f"template {in_binding.template!r} in {target!r} has expired")
    return (out_binding, out_spec), (in_binding, in_spec)


def check_formation(frame: Frame, actor: str, source: str, target: str, out_name: str,
                    now: int | None = None):
    (_, out_spec), (_, in_spec) = formation_specs(frame, source, target, out_name, now)
    actor_roles = role_names(frame, frame.agent_world(actor), source, now)
    if not actor_roles & out_spec.roles:
        raise PermissionDenied(f"{actor!r} plays none of {sorted(out_spec.roles)} in {source!r}")
    for label, spec in (("outgoing " + out_spec.name, out_spec), ("incoming " + in_spec.role, in_spec)):
        for constraint in spec.constraints:
            if not evaluate_constraint(frame, constraint, source, target, now):
                raise ConstraintViolated(f"{label}: constraint {constraint} fails for "
                                         f"{source!r} -> {target!r}", constraint, label)
    return out_spec, in_spec


def establish_relationship(frame: Frame, actor: str, source: str, target: str, out_name: str,
                           now: int) -> RelationshipInstance | PendingRelationship:
    """Form an edge, or queue it when the target requires owner approval."""
    out_spec, in_spec = check_formation(frame, actor, source, target, out_name, now)
    key = (source, target, out_spec.name, in_spec.role)
    if any(r.key == key for r in frame.relationships):
        raise DuplicateRelationship(f"relationship {key} already exists")
    target_world = frame.world(target)
    if target_world.require_approval and actor not in target_world.owners:
        pending = PendingRelationship(*key, now, actor)
        target_world.pending = [p for p in target_world.pending if p.key != key] + [pending]
        return pending
    instance = RelationshipInstance(*key, now, actor)
    frame.relationships.append(instance)
    return instance


def approve_relationship(frame: Frame, actor: str, source: str, target: str, out_name: str,
                         now: int) -> RelationshipInstance:
    target_world = frame.world(target)
    if actor not in target_world.owners:
        raise PermissionDenied(f"only owners of {target!r} may approve relationships into it")
    request = next((p for p in target_world.pending if p.source == source and p.out_name == out_name), None)
    if request is None:
        raise UnknownInstance(f"no pending request {source!r} -> {target!r} via {out_name!r}")
    check_formation(frame, request.requested_by, source, target, out_name, now)
    target_world.pending = [p for p in target_world.pending if p is not request]
    instance = RelationshipInstance(source, target, request.out_name, request.role, now, request.requested_by)
    if any(r.key == instance.key for r in frame.relationships):
        raise DuplicateRelationship(f"relationship {instance.key} already exists")
    frame.relationships.append(instance)
    return instance


def find_instance(frame: Frame, source: str, target: str, out_name: str) -> RelationshipInstance:
    for rel in frame.relationships:
        if rel.source == source and rel.target == target and rel.out_name == out_name:
            return rel
    raise UnknownInstance(f"no relationship {source!r} -> {target!r} via {out_name!r}")


def revoke_relationship(frame: Frame, actor: str, instance: RelationshipInstance) -> None:
    if instance not in frame.relationships:
        raise UnknownInstance(f"no relationship {instance.key}")
    allowed = any(has_privilege(frame, actor, w, Privilege.WORLD_EDIT)
                  for w in (instance.source, instance.target) if w in frame.worlds)
    if not allowed:
        raise PermissionDenied(f"{actor!r} is not a party to {instance.key} with world.edit")
    frame.relationships.remove(instance)

"""World, agent, resource and purpose mutations on a draft frame."""

from __future__ import annotations

from multiverse.errors import (
    CycleDetected,
    DuplicateAgent,
    DuplicateWorld,
    PermissionDenied,
    UnknownResource,
)
from multiverse.frame import Frame
from multiverse.model import Privilege, StoredResource, World, validate_identifier
from multiverse.relationships import require_privilege


def register_purpose(frame: Frame, purpose: str) -> bool:
    """Append to the purpose registry; returns False if it was already there."""
    validate_identifier(purpose, "purpose code")
    if purpose in frame.purposes:
        return False
    frame.purposes.append(purpose)
    return True


def register_agent(frame: Frame, agent: str, name: str, now: int) -> str:
    validate_identifier(agent, "agent id")
    if agent in frame.agents:
        raise DuplicateAgent(f"agent {agent!r} is already registered")
    if agent in frame.worlds:
        raise DuplicateWorld(f"a world named {agent!r} already exists")
    frame.worlds[agent] = World(agent, name or agent, {agent}, None, [], now)
    frame.agents[agent] = agent
    return agent


def create_world(frame: Frame, creator: str, name: str, now: int, location: str | None = None,
                 world_id: str | None = None, require_approval: bool = False) -> str:
    world_id = validate_identifier(world_id or name, "world id")
    frame.agent_world(creator)
    if world_id in frame.worlds:
        raise DuplicateWorld(f"world {world_id!r} already exists")
    if location is not None:
        frame.world(location)
        require_privilege(frame, creator, location, Privilege.WORLD_CREATE, now)
    frame.worlds[world_id] = World(world_id, name, {creator}, location, [], now, require_approval)
    return world_id


def relocate_world(frame: Frame, actor: str, world_id: str, new_location: str | None,
                   now: int | None = None) -> None:
    world = frame.world(world_id)
    require_privilege(frame, actor, world_id, Privilege.WORLD_RELOCATE, now)
    if new_location is not None:
        frame.world(new_location)
        if world_id in frame.containment_chain(new_location):
            raise CycleDetected(f"moving {world_id!r} into {new_location!r} would contain it in itself")
    world.location = new_location


def add_owner(frame: Frame, actor: str, world_id: str, agent: str, now: int | None = None) -> None:
    require_privilege(frame, actor, world_id, Privilege.WORLD_EDIT, now)
    frame.agent_world(agent)
    frame.world(world_id).owners.add(agent)


def remove_owner(frame: Frame, actor: str, world_id: str, agent: str, now: int | None = None) -> None:
    world = frame.world(world_id)
    require_privilege(frame, actor, world_id, Privilege.WORLD_EDIT, now)
    if frame.agents.get(agent) == world_id:
        raise PermissionDenied("an agent cannot give up ownership of its own world")
    if world.owners == {agent}:
        raise PermissionDenied(f"world {world_id!r} must keep at least one owner")
    world.owners.discard(agent)


def set_require_approval(frame: Frame, actor: str, world_id: str, value: bool, now: int | None = None) -> None:
    require_privilege(frame, actor, world_id, Privilege.WORLD_EDIT, now)
    frame.world(world_id).require_approval = value


def put_resource(frame: Frame, actor: str, world_id: str, resource_id: str, data: bytes, now: int) -> None:
    validate_identifier(resource_id, "resource id")
    frame.world(world_id)
    require_privilege(frame, actor, world_id, Privilege.RESOURCE_WRITE, now)
    frame.resources[(world_id, resource_id)] = StoredResource(resource_id, bytes(data), stored_at=now)


def delete_resource(frame: Frame, actor: str, world_id: str, resource_id: str, now: int | None = None) -> None:
    require_privilege(frame, actor, world_id, Privilege.RESOURCE_DELETE, now)
    if frame.resources.pop((world_id, resource_id), None) is None:
        raise UnknownResource(f"no resource {resource_id!r} in world {world_id!r}")


def delete_world(frame: Frame, actor: str, world_id: str, now: int | None = None) -> None:
    """Remove a world; contained worlds move up to its location."""
    world = frame.world(world_id)
    require_privilege(frame, actor, world_id, Privilege.WORLD_EDIT, now)
    if frame.is_agent_world(world_id):
        raise PermissionDenied("agent worlds cannot be deleted")
    for other in frame.worlds.values():
        if other.location == world_id:
            other.location = world.location
        other.pending = [p for p in other.pending if world_id not in (p.source, p.target)]
    frame.relationships = [r for r in frame.relationships if world_id not in (r.source, r.target)]
    frame.resources = {k: v for k, v in frame.resources.items() if k[0] != world_id}
    del frame.worlds[world_id]

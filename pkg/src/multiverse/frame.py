"""The frame: every world, resource, relationship, template and agent.

A :class:`Frame` is a plain container.  Committed frames are never mutated;
:class:`multiverse.store.FrameStore` copies one, applies a change and swaps
the copy in.  This module also owns the canonical ``.frame.json`` codec.
"""

from __future__ import annotations

import base64
import copy
import json
from dataclasses import dataclass, field
from typing import Any, Iterator

from multiverse.errors import CycleDetected, UnknownAgent, UnknownResource, UnknownTemplate, UnknownWorld
from multiverse.model import (
    RelationshipInstance,
    StoredResource,
    Template,
    World,
    format_tunnel,
    parse_tunnel,
)

FRAME_SUFFIX = ".frame.json"


@dataclass
class Frame:
    worlds: dict[str, World] = field(default_factory=dict)
    resources: dict[tuple[str, str], StoredResource] = field(default_factory=dict)
    relationships: list[RelationshipInstance] = field(default_factory=list)
    templates: dict[str, Template] = field(default_factory=dict)
    agents: dict[str, str] = field(default_factory=dict)
    purposes: list[str] = field(default_factory=list)
    version: int = 0

    # lookups -------------------------------------------------------------

    def world(self, world_id: str) -> World:
        try:
            return self.worlds[world_id]
        except KeyError:
            raise UnknownWorld(f"no world {world_id!r}") from None

    def template(self, template_id: str) -> Template:
        try:
            return self.templates[template_id]
        except KeyError:
            raise UnknownTemplate(f"no template {template_id!r}") from None

    def agent_world(self, agent: str) -> str:
        try:
            return self.agents[agent]
        except KeyError:
            raise UnknownAgent(f"no agent {agent!r}") from None

    def agent_of(self, world_id: str) -> str | None:
        """The agent whose own world is ``world_id``, if any."""
        for agent, wid in self.agents.items():
            if wid == world_id:
                return agent
        return None

    def is_agent_world(self, world_id: str) -> bool:
        return world_id in self.agents.values()

    def resource(self, world_id: str, resource_id: str) -> StoredResource:
        self.world(world_id)
        try:
            return self.resources[(world_id, resource_id)]
        except KeyError:
            raise UnknownResource(f"no resource {resource_id!r} in world {world_id!r}") from None

    def resources_in(self, world_id: str) -> Iterator[StoredResource]:
        for (wid, _), res in self.resources.items():
            if wid == world_id:
                yield res

    def containment_chain(self, world_id: str) -> list[str]:
        """``world_id`` followed by its location, that location's location, and so on."""
        chain = [self.world(world_id).id]
        seen = {world_id}
        loc = self.worlds[world_id].location
        while loc is not None:
            if loc in seen:
                raise CycleDetected(f"containment cycle through {loc!r}")
            chain.append(loc)
            seen.add(loc)
            loc = self.world(loc).location
        return chain

    def edges_between(self, source: str, target: str) -> list[RelationshipInstance]:
        return [r for r in self.relationships if r.source == source and r.target == target]

    def copy(self) -> Frame:
        return copy.deepcopy(self)

    # codec ---------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        resources = []
        for (wid, rid), res in self.resources.items():
            resources.append({
                "world": wid,
                "resourceId": rid,
                "data": base64.b64encode(res.data).decode("ascii"),
                "capacity": format_tunnel(res.capacity) if res.capacity else None,
                "ttl": res.ttl,
                "originWorld": res.origin_world,
                "storedAt": res.stored_at,
            })
        return {
            "version": self.version,
            "worlds": {wid: w.to_dict() for wid, w in self.worlds.items()},
            "templates": {tid: t.to_dict() for tid, t in self.templates.items()},
            "relationships": [r.to_dict() for r in self.relationships],
            "resources": resources,
            "agents": dict(self.agents),
            "purposes": list(self.purposes),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Frame:
        resources = {}
        for entry in data["resources"]:
            cap = entry.get("capacity")
            resources[(entry["world"], entry["resourceId"])] = StoredResource(
                resource_id=entry["resourceId"],
                data=base64.b64decode(entry["data"]),
                capacity=parse_tunnel(cap) if cap else None,
                ttl=entry.get("ttl"),
                origin_world=entry.get("originWorld"),
                stored_at=entry.get("storedAt", 0),
            )
        return cls(
            worlds={wid: World.from_dict(w) for wid, w in data["worlds"].items()},
            resources=resources,
            relationships=[RelationshipInstance.from_dict(r) for r in data["relationships"]],
            templates={tid: Template.from_dict(t) for tid, t in data["templates"].items()},
            agents=dict(data["agents"]),
            purposes=list(data["purposes"]),
            version=data["version"],
        )

    def dumps(self) -> str:
        return dumps_canonical(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> Frame:
        return cls.from_dict(json.loads(text))


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

"""Domain types shared by every part of the engine, and the role-tunnel codec.

Value objects are frozen dataclasses; the two containers that change over
time (:class:`World` and the frame itself) are plain dataclasses that the
store copies before mutating.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple

from multiverse.errors import InvalidConstraint, InvalidIdentifier, InvalidTemplate, InvalidTunnel, ParseError

OWNER = "Owner"
RESERVED_CHARS = frozenset(":()")
DEFAULT_DAP_TTL = 86_400


def validate_identifier(value: str, kind: str = "identifier") -> str:
    if not isinstance(value, str) or not value:
        raise InvalidIdentifier(f"{kind} must be a non-empty string")
    bad = RESERVED_CHARS.intersection(value)
    if bad:
        raise InvalidIdentifier(f"{kind} {value!r} contains reserved characters {sorted(bad)}")
    if value != value.strip() or any(ord(ch) < 32 for ch in value):
        raise InvalidIdentifier(f"{kind} {value!r} has surrounding whitespace or control characters")
    return value


class Privilege(str, enum.Enum):
    RESOURCE_READ = "resource.read"
    RESOURCE_WRITE = "resource.write"
    RESOURCE_DELETE = "resource.delete"
    RESOURCE_TEMPLATE = "resource.template"
    WORLD_EDIT = "world.edit"
    WORLD_RELOCATE = "world.relocate"
    WORLD_CREATE = "world.create"

    def __str__(self) -> str:
        return self.value


ALL_PRIVILEGES = frozenset(Privilege)

# query name -> privilege it exercises
QUERY_PRIVILEGES = {
    "read": Privilege.RESOURCE_READ,
    "write": Privilege.RESOURCE_WRITE,
    "delete": Privilege.RESOURCE_DELETE,
}


def privilege_set(values: Iterable[str | Privilege]) -> frozenset[Privilege]:
    try:
        return frozenset(Privilege(v) for v in values)
    except ValueError as exc:
        raise InvalidConstraint(f"unknown privilege: {exc}") from None


class ConstraintKind(str, enum.Enum):
    IMPLEMENTS = "implements"
    RELT = "relt"
    RELID = "relid"


class Side(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class Constraint:
    """One row of the relationship constraint table.

    ``implements`` needs ``template_ref``; ``relt`` needs ``rel_name`` and
    ``template_ref``; ``relid`` needs ``rel_name`` and ``world_ref``.
    """

    kind: ConstraintKind
    side: Side
    template_ref: str | None = None
    rel_name: str | None = None
    world_ref: str | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ConstraintKind(self.kind))
            object.__setattr__(self, "side", Side(self.side))
        except ValueError as exc:
            raise InvalidConstraint(str(exc)) from None
        present = (self.template_ref is not None, self.rel_name is not None,
                   self.world_ref is not None)
        expected = {
            ConstraintKind.IMPLEMENTS: (True, False, False),
            ConstraintKind.RELT: (True, True, False),
            ConstraintKind.RELID: (False, True, True),
        }[self.kind]
        if present != expected:
            raise InvalidConstraint(f"fields do not match constraint kind {self.kind.value}: {self!r}")
        for value in (self.template_ref, self.rel_name, self.world_ref):
            if value is not None:
                validate_identifier(value, "constraint argument")

    @classmethod
    def implements(cls, side: str, template: str) -> Constraint:
        return cls(ConstraintKind.IMPLEMENTS, Side(side), template_ref=template)

    @classmethod
    def relt(cls, side: str, name: str, template: str) -> Constraint:
        return cls(ConstraintKind.RELT, Side(side), template_ref=template, rel_name=name)

    @classmethod
    def relid(cls, side: str, name: str, world: str) -> Constraint:
        return cls(ConstraintKind.RELID, Side(side), rel_name=name, world_ref=world)

    @property
    def args(self) -> tuple[str, ...]:
        if self.kind is ConstraintKind.IMPLEMENTS:
            return (self.template_ref,)
        if self.kind is ConstraintKind.RELT:
            return (self.rel_name, self.template_ref)
        return (self.rel_name, self.world_ref)

    def __str__(self) -> str:
        return f"{self.side.value}.{self.kind.value}({', '.join(self.args)})"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "side": self.side.value, "templateRef": self.template_ref,
                "relName": self.rel_name, "worldRef": self.world_ref}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Constraint:
        return cls(ConstraintKind(data["kind"]), Side(data["side"]), template_ref=data.get("templateRef"),
                   rel_name=data.get("relName"), world_ref=data.get("worldRef"))


@dataclass(frozen=True)
class DataAccessPointSpec:
    query: str
    required_role: str
    allowed_purposes: frozenset[str]
    ttl_seconds: int = DEFAULT_DAP_TTL

    def __post_init__(self):
        validate_identifier(self.query, "query name")
        validate_identifier(self.required_role, "role")
        object.__setattr__(self, "allowed_purposes", frozenset(self.allowed_purposes))
        if not self.allowed_purposes:
            raise InvalidConstraint(f"access point {self.query!r} needs at least one purpose")
        if self.ttl_seconds <= 0:
            raise InvalidConstraint("access point ttl must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {"query": self.query, "requiredRole": self.required_role,
                "allowedPurposes": sorted(self.allowed_purposes), "ttlSeconds": self.ttl_seconds}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DataAccessPointSpec:
        return cls(data["query"], data["requiredRole"], frozenset(data["allowedPurposes"]),
                   data.get("ttlSeconds", DEFAULT_DAP_TTL))


@dataclass(frozen=True)
class RelSpecIn:
    role: str
    constraints: tuple[Constraint, ...] = ()
    privileges: frozenset[Privilege] = frozenset()
    purposes: frozenset[str] = frozenset()

    def __post_init__(self):
        validate_identifier(self.role, "role")
        if self.role == OWNER:
            raise InvalidTemplate("Owner is reserved and cannot be declared as an incoming role")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "privileges", privilege_set(self.privileges))
        object.__setattr__(self, "purposes", frozenset(self.purposes))

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "constraints": [c.to_dict() for c in self.constraints],
                "privileges": sorted(p.value for p in self.privileges), "purposes": sorted(self.purposes)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RelSpecIn:
        return cls(data["role"], tuple(Constraint.from_dict(c) for c in data["constraints"]),
                   privilege_set(data["privileges"]), frozenset(data["purposes"]))


@dataclass(frozen=True)
class RelSpecOut:
    """Outgoing relationship declaration.

    ``roles`` lists the source-world roles entitled to traverse the edge;
    Owner is always entitled whether listed or not.  ``counterpart_role`` is
    the incoming role the edge lands on in the target (defaults to ``name``).
    """

    name: str
    constraints: tuple[Constraint, ...] = ()
    roles: frozenset[str] = frozenset({OWNER})
    counterpart_role: str | None = None

    def __post_init__(self):
        validate_identifier(self.name, "relationship name")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "roles", frozenset(self.roles) | {OWNER})
        for role in self.roles:
            validate_identifier(role, "role")
        if self.counterpart_role is not None:
            validate_identifier(self.counterpart_role, "role")

    @property
    def counterpart(self) -> str:
        return self.counterpart_role or self.name

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "constraints": [c.to_dict() for c in self.constraints],
                "roles": sorted(self.roles), "counterpartRole": self.counterpart_role}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RelSpecOut:
        return cls(data["name"], tuple(Constraint.from_dict(c) for c in data["constraints"]),
                   frozenset(data["roles"]), data.get("counterpartRole"))


@dataclass(frozen=True)
class Template:
    id: str
    name: str
    defined_in: str
    parent: str | None = None
    data_access_points: tuple[DataAccessPointSpec, ...] = ()
    incoming: tuple[RelSpecIn, ...] = ()
    outgoing: tuple[RelSpecOut, ...] = ()
    public: bool = False

    def __post_init__(self):
        validate_identifier(self.id, "template id")
        validate_identifier(self.defined_in, "world id")
        if self.parent is not None:
            validate_identifier(self.parent, "template id")
        object.__setattr__(self, "data_access_points", tuple(self.data_access_points))
        object.__setattr__(self, "incoming", tuple(self.incoming))
        object.__setattr__(self, "outgoing", tuple(self.outgoing))

    def incoming_spec(self, role: str) -> RelSpecIn | None:
        return next((spec for spec in self.incoming if spec.role == role), None)

    def outgoing_spec(self, name: str) -> RelSpecOut | None:
        return next((spec for spec in self.outgoing if spec.name == name), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id, "name": self.name, "definedIn": self.defined_in, "parent": self.parent,
            "public": self.public,
            "dataAccessPoints": [d.to_dict() for d in self.data_access_points],
            "incoming": [r.to_dict() for r in self.incoming],
            "outgoing": [r.to_dict() for r in self.outgoing],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Template:
        return cls(
            id=data["id"], name=data["name"], defined_in=data["definedIn"], parent=data.get("parent"),
            data_access_points=tuple(DataAccessPointSpec.from_dict(d) for d in data["dataAccessPoints"]),
            incoming=tuple(RelSpecIn.from_dict(r) for r in data["incoming"]),
            outgoing=tuple(RelSpecOut.from_dict(r) for r in data["outgoing"]),
            public=data.get("public", False),
        )


class Segment(NamedTuple):
    role: str
    world: str

    def __str__(self) -> str:
        return f"{self.role}({self.world})"


@dataclass(frozen=True)
class RoleTunnel:
    """A legal capacity: role(world) segments from the data end to Owner(...)."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segments = tuple(Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segments)
        if not segments:
            raise InvalidTunnel("a role tunnel needs at least one segment")
        for i, (role, world) in enumerate(segments):
            try:
                validate_identifier(role, "role")
                validate_identifier(world, "world id")
            except InvalidIdentifier as exc:
                raise InvalidTunnel(f"segment {i}: {exc}") from None
            if role == OWNER and i != len(segments) - 1:
                raise InvalidTunnel(f"segment {i}: Owner may only appear as the last segment")
        if segments[-1].role != OWNER:
            raise InvalidTunnel(f"tunnel must end with an Owner(...) segment, got {segments[-1]}")

    @classmethod
    def of(cls, *pairs: tuple[str, str]) -> RoleTunnel:
        return cls(tuple(Segment(r, w) for r, w in pairs))

    @property
    def data_world(self) -> str:
        return self.segments[0].world

    @property
    def principal_world(self) -> str:
        return self.segments[-1].world

    def __len__(self) -> int:
        return len(self.segments)

    def __str__(self) -> str:
        return format_tunnel(self)


def format_tunnel(tunnel: RoleTunnel) -> str:
    if not isinstance(tunnel, RoleTunnel):
        raise InvalidTunnel(f"not a role tunnel: {tunnel!r}")
    return ":".join(f"{role}({world})" for role, world in tunnel.segments)


def parse_tunnel(text: str) -> RoleTunnel:
    """Parse ``role(world):role(world):...:Owner(world)``.

    Raises :class:`ParseError` with a character position for malformed text,
    and :class:`InvalidTunnel` when the text is well formed but the tunnel
    breaks an invariant (for example, no terminal Owner segment).
    """
    segments = []
    pos = 0
    n = len(text)
    while True:
        start = pos
        while pos < n and text[pos] not in "():":
            pos += 1
        role = text[start:pos]
        if not role:
            raise ParseError("expected a role name", position=start)
        if pos >= n or text[pos] != "(":
            raise ParseError("expected '(' after role name", position=pos)
        pos += 1
        start = pos
        while pos < n and text[pos] not in "():":
            pos += 1
        world = text[start:pos]
        if not world:
            raise ParseError("expected a world id", position=start)
        if pos >= n or text[pos] != ")":
            raise ParseError("expected ')' after world id", position=pos)
        pos += 1
        segments.append(Segment(role, world))
        if pos == n:
            break
        if text[pos] != ":":
            raise ParseError("expected ':' between segments", position=pos)
        pos += 1
    return RoleTunnel(tuple(segments))


def coerce_tunnel(value: RoleTunnel | str) -> RoleTunnel:
    return value if isinstance(value, RoleTunnel) else parse_tunnel(value)


@dataclass(frozen=True)
class AccessRisk:
    rho: float

    def __post_init__(self):
        if not 0.0 <= float(self.rho) <= 1.0:
            raise ValueError(f"access risk must lie in [0, 1], got {self.rho}")
        object.__setattr__(self, "rho", float(self.rho))

    def probability(self, level: int) -> float:
        return (1.0 - self.rho) ** level


@dataclass(frozen=True)
class TemplateBinding:
    template: str
    bound_at: int
    capacity: RoleTunnel | None = None
    ttl: int | None = None
    expired: bool = False

    @property
    def remote(self) -> bool:
        return self.capacity is not None

    def active(self, now: int | None = None) -> bool:
        if self.expired:
            return False
        return self.ttl is None or now is None or now < self.ttl

    def to_dict(self) -> dict[str, Any]:
        return {"template": self.template, "boundAt": self.bound_at,
                "capacity": format_tunnel(self.capacity) if self.capacity else None,
                "ttl": self.ttl, "expired": self.expired}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TemplateBinding:
        cap = data.get("capacity")
        return cls(data["template"], data["boundAt"], parse_tunnel(cap) if cap else None,
                   data.get("ttl"), data.get("expired", False))


@dataclass(frozen=True)
class RelationshipInstance:
    source: str
    target: str
    out_name: str
    role: str
    established_at: int
    established_by: str

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.source, self.target, self.out_name, self.role)

    def names(self) -> tuple[str, str]:
        return (self.out_name, self.role)

    def to_dict(self) -> dict[str, Any]:
        return {"source": self.source, "target": self.target, "outName": self.out_name, "role": self.role,
                "establishedAt": self.established_at, "establishedBy": self.established_by}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RelationshipInstance:
        return cls(data["source"], data["target"], data["outName"], data["role"],
                   data["establishedAt"], data["establishedBy"])


@dataclass(frozen=True)
class PendingRelationship:
    """A formation request waiting for the target owners' approval."""

    source: str
    target: str
    out_name: str
    role: str
    requested_at: int
    requested_by: str

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.source, self.target, self.out_name, self.role)

    def to_dict(self) -> dict[str, Any]:
        return {"source": self.source, "target": self.target, "outName": self.out_name, "role": self.role,
                "requestedAt": self.requested_at, "requestedBy": self.requested_by}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PendingRelationship:
        return cls(data["source"], data["target"], data["outName"], data["role"],
                   data["requestedAt"], data["requestedBy"])


@dataclass(frozen=True)
class StoredResource:
    resource_id: str
    data: bytes
    capacity: RoleTunnel | None = None
    ttl: int | None = None
    origin_world: str | None = None
    stored_at: int = 0

    def __post_init__(self):
        remote = (self.capacity is not None, self.ttl is not None, self.origin_world is not None)
        if len(set(remote)) != 1:
            raise ValueError("capacity, ttl and origin world must be all present or all absent")
        if self.ttl is not None and self.ttl <= self.stored_at:
            raise ValueError("ttl must lie after the import time")

    @property
    def remote(self) -> bool:
        return self.capacity is not None


@dataclass
class World:
    id: str
    name: str
    owners: set[str]
    location: str | None = None
    bindings: list[TemplateBinding] = field(default_factory=list)
    created_at: int = 0
    require_approval: bool = False
    pending: list[PendingRelationship] = field(default_factory=list)

    def binding(self, template: str) -> TemplateBinding | None:
        return next((b for b in self.bindings if b.template == template), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id, "name": self.name, "owners": sorted(self.owners), "location": self.location,
            "bindings": [b.to_dict() for b in self.bindings], "createdAt": self.created_at,
            "requireApproval": self.require_approval, "pending": [p.to_dict() for p in self.pending],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> World:
        return cls(
            id=data["id"], name=data["name"], owners=set(data["owners"]), location=data.get("location"),
            bindings=[TemplateBinding.from_dict(b) for b in data["bindings"]],
            created_at=data.get("createdAt", 0), require_approval=data.get("requireApproval", False),
            pending=[PendingRelationship.from_dict(p) for p in data.get("pending", [])],
        )

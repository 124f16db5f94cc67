"""Template definition, inheritance flattening, and world bindings."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterator

from multiverse.errors import (
    BindingConflict,
    CycleDetected,
    DuplicateTemplate,
    InvalidTemplate,
    InvalidTunnel,
    UnknownBinding,
)
from multiverse.frame import Frame
from multiverse.model import OWNER, Privilege, RoleTunnel, Template, TemplateBinding

# validator(world, binding) -> (valid, reason)
BindingValidator = Callable[[str, TemplateBinding], "tuple[bool, str]"]


def ancestry(frame: Frame, template_id: str) -> list[str]:
    """``template_id`` and its parents, most derived first."""
    chain = []
    current: str | None = template_id
    while current is not None:
        if current in chain:
            raise CycleDetected(f"subclass cycle through template {current!r}")
        chain.append(current)
        current = frame.template(current).parent
    return chain


def _merge(base: tuple, override: tuple, key) -> tuple:
    merged = {key(item): item for item in base}
    merged.update((key(item), item) for item in override)
    return tuple(merged.values())


def resolve_template(frame: Frame, template_id: str) -> Template:
    """Flatten the subclass chain; the most derived definition of each name wins."""
    chain = ancestry(frame, template_id)
    flat = frame.template(chain[-1])
    for tid in reversed(chain[:-1]):
        child = frame.template(tid)
        flat = replace(
            child,
            data_access_points=_merge(flat.data_access_points, child.data_access_points, lambda d: d.query),
            incoming=_merge(flat.incoming, child.incoming, lambda r: r.role),
            outgoing=_merge(flat.outgoing, child.outgoing, lambda r: r.name),
        )
    return flat


def check_template_shape(template: Template) -> None:
    """Reject duplicate names and dangling access-point roles in one definition."""
    for label, names in (
        ("access point", [d.query for d in template.data_access_points]),
        ("incoming role", [r.role for r in template.incoming]),
        ("outgoing relationship", [r.name for r in template.outgoing]),
    ):
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise InvalidTemplate(f"template {template.id!r} declares duplicate {label} names {dupes}")
    if any(r.role == OWNER for r in template.incoming):
        raise InvalidTemplate("Owner is reserved and cannot be declared as an incoming role")


def check_resolved(template: Template) -> None:
    roles = {r.role for r in template.incoming}
    for dap in template.data_access_points:
        if dap.required_role not in roles:
            raise InvalidTemplate(
                f"access point {dap.query!r} requires role {dap.required_role!r}, "
                f"which template {template.id!r} does not declare")


def bindings(frame: Frame, world_id: str, now: int | None = None,
             active_only: bool = True) -> Iterator[tuple[TemplateBinding, Template]]:
    for binding in frame.world(world_id).bindings:
        if active_only and not binding.active(now):
            continue
        yield binding, resolve_template(frame, binding.template)


def implements(frame: Frame, world_id: str, template_id: str, now: int | None = None) -> bool:
    return any(template_id in ancestry(frame, b.template)
               for b, _ in bindings(frame, world_id, now))


def shared_templates(frame: Frame, world_a: str, world_b: str, now: int | None = None) -> set[str]:
    """Template ids with an active binding in both worlds."""
    a = {b.template for b, _ in bindings(frame, world_a, now)}
    return a & {b.template for b, _ in bindings(frame, world_b, now)}


def declaring_binding(frame: Frame, world_id: str, role: str, now: int | None = None,
                      active_only: bool = True):
    """The (binding, resolved template, incoming spec) declaring ``role`` in a world."""
    for binding, resolved in bindings(frame, world_id, now, active_only):
        spec = resolved.incoming_spec(role)
        if spec is not None:
            return binding, resolved, spec
    return None


def outgoing_binding(frame: Frame, world_id: str, name: str, now: int | None = None,
                     active_only: bool = True):
    for binding, resolved in bindings(frame, world_id, now, active_only):
        spec = resolved.outgoing_spec(name)
        if spec is not None:
            return binding, resolved, spec
    return None


def find_binding(frame: Frame, world_id: str, template_id: str) -> TemplateBinding:
    binding = frame.world(world_id).binding(template_id)
    if binding is None:
        raise UnknownBinding(f"world {world_id!r} does not bind template {template_id!r}")
    return binding


# mutations on a draft frame ---------------------------------------------------

def define_template(frame: Frame, actor: str, world_id: str, template: Template) -> str:
    from multiverse.relationships import require_privilege

    frame.world(world_id)
    require_privilege(frame, actor, world_id, Privilege.RESOURCE_WRITE)
    if template.defined_in != world_id:
        template = replace(template, defined_in=world_id)
    if template.id in frame.templates:
        raise DuplicateTemplate(f"template {template.id!r} already exists")
    check_template_shape(template)
    if template.parent is not None:
        frame.template(template.parent)
    frame.templates[template.id] = template
    try:
        check_resolved(resolve_template(frame, template.id))
    except Exception:
        del frame.templates[template.id]
        raise
    return template.id


def implement_template(frame: Frame, actor: str, world_id: str, template_id: str, now: int,
                       via: RoleTunnel | None = None, ttl_seconds: int | None = None,
                       validate_capacity: Callable[[RoleTunnel, str], "tuple[bool, str]"] | None = None,
                       ) -> TemplateBinding:
    """Bind a template to a world.

    Templates defined elsewhere need a capacity tunnel that reaches the
    defining world with ``resource.template`` and a TTL, unless the template
    is public.  ``validate_capacity(tunnel, world)`` checks the tunnel.
    """
    from multiverse.relationships import require_privilege
    from multiverse.tunnels import effective_grant

    world = frame.world(world_id)
    require_privilege(frame, actor, world_id, Privilege.WORLD_EDIT)
    template = frame.template(template_id)
    resolved = resolve_template(frame, template_id)

    capacity, ttl = None, None
    if template.defined_in != world_id and not template.public:
        if via is None:
            raise InvalidTunnel(f"template {template_id!r} is defined in {template.defined_in!r}; "
                                "a capacity tunnel is required")
        if ttl_seconds is None or ttl_seconds <= 0:
            raise InvalidTemplate("remote template bindings need a positive ttl")
        if via.data_world != template.defined_in:
            raise InvalidTunnel(f"tunnel {via} does not reach {template.defined_in!r}")
        if via.principal_world != world_id:
            raise InvalidTunnel(f"tunnel {via} is not held by world {world_id!r}")
        ok, reason = validate_capacity(via, world_id) if validate_capacity else (True, "")
        if not ok:
            raise InvalidTunnel(f"tunnel {via} is not valid: {reason}")
        privileges, _ = effective_grant(frame, via, now)
        if Privilege.RESOURCE_TEMPLATE not in privileges:
            raise InvalidTunnel(f"tunnel {via} carries no resource.template privilege in "
                                f"{template.defined_in!r}")
        capacity, ttl = via, now + ttl_seconds
    elif via is not None:
        raise InvalidTunnel("locally defined and public templates are bound without a tunnel")

    roles = {r.role for r in resolved.incoming}
    outs = {r.name for r in resolved.outgoing}
    for other, other_resolved in bindings(frame, world_id, active_only=False):
        if other.template == template_id:
            continue
        clash = roles & {r.role for r in other_resolved.incoming}
        clash |= outs & {r.name for r in other_resolved.outgoing}
        if clash:
            raise BindingConflict(f"template {template_id!r} collides with {other.template!r} in "
                                  f"{world_id!r} on {sorted(clash)}")

    binding = TemplateBinding(template_id, now, capacity, ttl, False)
    world.bindings = [b for b in world.bindings if b.template != template_id] + [binding]
    return binding


def evaluate_binding(frame: Frame, world_id: str, template_id: str, now: int,
                     validator: BindingValidator | None = None) -> tuple[bool, str]:
    """Whether a binding is usable right now; does not mark anything."""
    binding = find_binding(frame, world_id, template_id)
    if binding.expired:
        return False, "binding already expired"
    if binding.capacity is None:
        return True, ""
    if now >= binding.ttl:
        return False, "template ttl elapsed"
    if validator is not None:
        ok, reason = validator(world_id, binding)
        if not ok:
            return False, f"template capacity no longer valid: {reason}"
    return True, ""


def mark_expired(frame: Frame, world_id: str, template_id: str) -> None:
    world = frame.world(world_id)
    world.bindings = [replace(b, expired=True) if b.template == template_id else b for b in world.bindings]


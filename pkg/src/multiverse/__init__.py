"""Consent-governed data exchange across independent worlds via role tunnels."""

from multiverse.access import AccessPoint, AccessRequest
from multiverse.audit import AuditLog, AuditRecord, verify_bytes, verify_chain, verify_file
from multiverse.engine import Engine, ManualClock
from multiverse.frame import Frame
from multiverse.model import (
    OWNER,
    AccessRisk,
    Constraint,
    DataAccessPointSpec,
    Privilege,
    RelationshipInstance,
    RelSpecIn,
    RelSpecOut,
    RoleTunnel,
    Segment,
    StoredResource,
    Template,
    TemplateBinding,
    World,
    format_tunnel,
    parse_tunnel,
)
from multiverse.store import FrameStore
from multiverse.tunnels import ValidationReport

__all__ = [
    "OWNER", "AccessPoint", "AccessRequest", "AccessRisk", "AuditLog", "AuditRecord", "Constraint",
    "DataAccessPointSpec", "Engine", "Frame", "FrameStore", "ManualClock", "Privilege", "RelSpecIn",
    "RelSpecOut", "RelationshipInstance", "RoleTunnel", "Segment", "StoredResource", "Template",
    "TemplateBinding", "ValidationReport", "World", "format_tunnel", "parse_tunnel", "verify_bytes",
    "verify_chain", "verify_file",
]

"""Exception hierarchy.

Every engine error carries a short kebab-case ``code`` that is used as the
denial reason in audit records, scenario expectations and CLI output.
Subclasses of :class:`Denied` are policy decisions (exit code 1 in the CLI);
:class:`ParseError` and :class:`ResolveError` are input problems (exit 2).
"""

from __future__ import annotations


class MultiverseError(Exception):
    code = "error"


class Denied(MultiverseError):
    """An operation was refused by policy."""

    code = "denied"


class ParseError(MultiverseError, ValueError):
    code = "parse-error"

    def __init__(self, reason: str, position: int | None = None, line: int | None = None,
                 column: int | None = None):
        self.reason = reason
        self.position = position
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" at line {line}, column {column}"
        elif position is not None:
            where = f" at position {position}"
        super().__init__(f"{reason}{where}")


class ResolveError(MultiverseError):
    code = "resolve-error"


class InvalidTunnel(Denied, ValueError):
    code = "invalid-tunnel"


class InvalidConstraint(MultiverseError, ValueError):
    code = "invalid-constraint"


class InvalidTemplate(MultiverseError, ValueError):
    code = "invalid-template"


class BindingConflict(InvalidTemplate):
    code = "binding-conflict"


class InvalidIdentifier(MultiverseError, ValueError):
    code = "invalid-identifier"


class CycleDetected(MultiverseError):
    code = "cycle-detected"


class DuplicateAgent(MultiverseError):
    code = "duplicate-agent"


class DuplicateWorld(MultiverseError):
    code = "duplicate-world"


class DuplicateTemplate(InvalidTemplate):
    code = "duplicate-template"


class UnknownEntity(MultiverseError, LookupError):
    code = "unknown"


class UnknownWorld(UnknownEntity):
    code = "unknown-world"


class UnknownAgent(UnknownEntity):
    code = "unknown-agent"


class UnknownTemplate(UnknownEntity):
    code = "unknown-template"


class UnknownBinding(UnknownEntity):
    code = "unknown-binding"


class UnknownInstance(UnknownEntity):
    code = "unknown-instance"


class UnknownResource(UnknownEntity):
    code = "unknown-resource"


class UnknownSpec(Denied):
    code = "unknown-spec"


class UnknownRole(Denied):
    code = "unknown-role"


class PermissionDenied(Denied):
    code = "permission-denied"


class ConstraintViolated(Denied):
    code = "constraint-violated"

    def __init__(self, message: str, constraint=None, spec: str | None = None):
        self.constraint = constraint
        self.spec = spec
        super().__init__(message)


class ExpiredTemplate(Denied):
    code = "expired-template"


class TunnelInvalid(Denied):
    code = "tunnel-invalid"

    def __init__(self, report):
        self.report = report
        failure = report.failure
        detail = f"segment {failure[0]}: {failure[1]}" if failure else "integrity check failed"
        super().__init__(f"tunnel {report.tunnel} is not valid ({detail})")


class PurposeNotPermitted(Denied):
    code = "purpose-not-permitted"


class PrivilegeDenied(Denied):
    code = "privilege-denied"


class NoSuchAccessPoint(Denied):
    code = "no-such-access-point"


class TTLExpired(Denied):
    code = "ttl-expired"


class CapacityRevoked(Denied):
    code = "capacity-revoked"


class CapacityUnsatisfied(Denied):
    code = "capacity-unsatisfied"


class StorageFailure(MultiverseError):
    code = "storage-failure"


class DuplicateRelationship(MultiverseError):
    code = "duplicate-relationship"

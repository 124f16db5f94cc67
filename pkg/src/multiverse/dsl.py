"""The ``.mvp`` policy language.

A script is a sequence of statements, each ending in ``;`` (template
bodies are wrapped in braces)::

    purpose Diagnostics;
    agent Ram "Dr. Ram";
    world Fortis owner FortisAdmin approval;
    template Hospital in Fortis by FortisAdmin {
      dap read role Doctor purposes(Diagnostics) ttl 86400;
      in Doctor constraints(source.implements(Person)) privileges(resource.read) purposes(Diagnostics);
      out AdvisorOf as Advisor constraints(target.implements(Clinic)) roles(Doctor);
    }
    implement Fortis Hospital by FortisAdmin;
    implement Fortis Licensed via "Licensee(R):Owner(Fortis)" ttl 2592000 by FortisAdmin;
    relate Ram -> Fortis via Doctor by Ram;
    approve Ram -> Fortis via Doctor by FortisAdmin;
    revoke Ram -> Fortis via Doctor by FortisAdmin;
    addowner Ram Sita by Ram;
    publish Sharada d "cmVjb3Jk" by SharadaAdmin;

Names are bare words or double-quoted strings (quote names with spaces or
that collide with a keyword).  ``#`` starts a comment.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Union

from multiverse.errors import MultiverseError, ParseError, ResolveError, UnknownEntity
from multiverse.model import (
    DEFAULT_DAP_TTL,
    OWNER,
    Constraint,
    ConstraintKind,
    DataAccessPointSpec,
    RelSpecIn,
    RelSpecOut,
    RoleTunnel,
    Side,
    Template,
    parse_tunnel,
    privilege_set,
)

if TYPE_CHECKING:
    from multiverse.engine import Engine

MVP_SUFFIX = ".mvp"

KEYWORDS = frozenset({
    "purpose", "agent", "world", "template", "implement", "relate", "approve", "revoke", "publish", "addowner",
    "named", "in", "owner", "approval", "extends", "public", "by", "dap", "role", "purposes", "ttl", "out", "as",
    "constraints", "privileges", "roles", "via",
})

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<arrow>->)
  | (?P<punct>[;{}(),])
  | (?P<word>(?:[^\s;{}(),"\#-]|-(?!>))+)
""", re.VERBOSE)
_BARE = re.compile(r"""^(?:[^\s;{}(),"\#-]|-(?!>))+$""")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    @property
    def value(self) -> str:
        if self.kind == "string":
            return re.sub(r"\\(.)", r"\1", self.text[1:-1])
        return self.text


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", position=pos, line=line,
                             column=pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    return tokens


# statements ----------------------------------------------------------------

def _span() -> tuple[int, int]:
    return field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class PurposeStmt:
    name: str
    span: tuple[int, int] = _span()


@dataclass(frozen=True)
class AgentStmt:
    agent: str
    display: str | None = None
    span: tuple[int, int] = _span()


@dataclass(frozen=True)
class WorldStmt:
    world: str
    owner: str
    display: str | None = None
    location: str | None = None
    approval: bool = False
    span: tuple[int, int] = _span()


@dataclass(frozen=True)
class TemplateStmt:
    template: str
    parent: str | None = None
    world: str | None = None
    public: bool = False
    by: str | None = None
    data_access_points: tuple[DataAccessPointSpec, ...] = ()
    incoming: tuple[RelSpecIn, ...] = ()
    outgoing: tuple[RelSpecOut, ...] = ()
    span: tuple[int, int] = _span()

    def build(self, world: str) -> Template:
        return Template(self.template, self.template, world, self.parent, self.data_access_points,
                        self.incoming, self.outgoing, self.public)


@dataclass(frozen=True)
class ImplementStmt:
    world: str
    template: str
    via: RoleTunnel | None = None
    ttl: int | None = None
    by: str | None = None
    span: tuple[int, int] = _span()


@dataclass(frozen=True)
class EdgeStmt:
    """``relate``, ``approve`` and ``revoke`` share one shape."""

    verb: str
    source: str
    target: str
    out_name: str
    by: str | None = None
    span: tuple[int, int] = _span()


@dataclass(frozen=True)
class PublishStmt:
    world: str
    resource_id: str
    payload: str
    by: str | None = None
    span: tuple[int, int] = _span()


@dataclass(frozen=True)
class AddOwnerStmt:
    world: str
    agent: str
    by: str | None = None
    span: tuple[int, int] = _span()


Statement = Union[PurposeStmt, AgentStmt, WorldStmt, TemplateStmt, ImplementStmt, EdgeStmt, PublishStmt,
                  AddOwnerStmt]


@dataclass(frozen=True)
class PolicyDocument:
    statements: tuple[Statement, ...] = ()

    def __len__(self) -> int:
        return len(self.statements)

    def __iter__(self):
        return iter(self.statements)


# parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def error(self, reason: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            return ParseError(f"{reason} (at end of input)", line=last.line if last else 1,
                              column=(last.column + len(last.text)) if last else 1)
        return ParseError(f"{reason}, found {tok.text!r}", line=tok.line, column=tok.column)

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        self.i += 1
        return tok

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "word" and tok.text in words

    def keyword(self, word: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != "word" or tok.text != word:
            raise self.error(f"expected {word!r}")
        return self.next()

    def punct(self, text: str) -> Token:
        tok = self.peek()
        if tok is None or tok.text != text or tok.kind not in ("punct", "arrow"):
            raise self.error(f"expected {text!r}")
        return self.next()

    def name(self, what: str = "name") -> str:
        tok = self.peek()
        if tok is None or tok.kind not in ("word", "string"):
            raise self.error(f"expected {what}")
        if tok.kind == "word" and tok.text in KEYWORDS:
            raise self.error(f"expected {what} (quote keywords used as names)")
        return self.next().value

    def integer(self, what: str) -> int:
        tok = self.peek()
        if tok is None or tok.kind != "word" or not tok.text.isdigit():
            raise self.error(f"expected {what}")
        return int(self.next().text)

    def name_list(self) -> list[str]:
        self.punct("(")
        names = []
        if self.peek() is not None and self.peek().text == ")":
            self.next()
            return names
        while True:
            names.append(self.name())
            if self.peek() is not None and self.peek().text == ",":
                self.next()
                continue
            self.punct(")")
            return names

    def optional_by(self) -> str | None:
        if self.at_keyword("by"):
            self.next()
            return self.name("agent")
        return None

    def constraint(self) -> Constraint:
        tok = self.next()
        side, _, kind = tok.text.partition(".")
        if tok.kind != "word" or side not in ("source", "target") or kind not in ("implements", "relt", "relid"):
            raise self.error("expected source.<kind>(...) or target.<kind>(...)", tok)
        args = self.name_list()
        arity = 1 if kind == "implements" else 2
        if len(args) != arity:
            raise self.error(f"{kind} takes {arity} argument(s)", tok)
        if kind == "implements":
            return Constraint(ConstraintKind.IMPLEMENTS, Side(side), template_ref=args[0])
        if kind == "relt":
            return Constraint(ConstraintKind.RELT, Side(side), rel_name=args[0], template_ref=args[1])
        return Constraint(ConstraintKind.RELID, Side(side), rel_name=args[0], world_ref=args[1])

    def constraints(self) -> tuple[Constraint, ...]:
        self.punct("(")
        out = []
        if self.peek() is not None and self.peek().text == ")":
            self.next()
            return ()
        while True:
            out.append(self.constraint())
            if self.peek() is not None and self.peek().text == ",":
                self.next()
                continue
            self.punct(")")
            return tuple(out)

    def end(self) -> None:
        self.punct(";")

    # statements

    def statement(self) -> Statement:
        tok = self.peek()
        if tok is None or tok.kind != "word":
            raise self.error("expected a statement keyword")
        handler = getattr(self, "st_" + tok.text, None)
        if handler is None:
            raise self.error("unknown statement keyword")
        self.next()
        return handler((tok.line, tok.column))

    def st_purpose(self, span):
        name = self.name("purpose code")
        self.end()
        return PurposeStmt(name, span)

    def st_agent(self, span):
        agent = self.name("agent id")
        display = None
        if not (self.peek() is not None and self.peek().text == ";"):
            display = self.name("display name")
        self.end()
        return AgentStmt(agent, display, span)

    def st_world(self, span):
        world = self.name("world id")
        display = location = None
        if self.at_keyword("named"):
            self.next()
            display = self.name("display name")
        if self.at_keyword("in"):
            self.next()
            location = self.name("world id")
        self.keyword("owner")
        owner = self.name("agent id")
        approval = False
        if self.at_keyword("approval"):
            self.next()
            approval = True
        self.end()
        return WorldStmt(world, owner, display, location, approval, span)

    def st_template(self, span):
        template = self.name("template id")
        parent = world = by = None
        public = False
        if self.at_keyword("extends"):
            self.next()
            parent = self.name("template id")
        if self.at_keyword("in"):
            self.next()
            world = self.name("world id")
        if self.at_keyword("public"):
            self.next()
            public = True
        by = self.optional_by()
        self.punct("{")
        daps, incoming, outgoing = [], [], []
        while not (self.peek() is not None and self.peek().text == "}"):
            if self.at_keyword("dap"):
                daps.append(self.member_dap())
            elif self.at_keyword("in"):
                incoming.append(self.member_in())
            elif self.at_keyword("out"):
                outgoing.append(self.member_out())
            else:
                raise self.error("expected 'dap', 'in', 'out' or '}'")
        self.punct("}")
        if self.peek() is not None and self.peek().text == ";":
            self.next()
        return TemplateStmt(template, parent, world, public, by, tuple(daps), tuple(incoming), tuple(outgoing),
                            span)

    def member_dap(self) -> DataAccessPointSpec:
        start = self.next()
        query = self.name("query name")
        self.keyword("role")
        role = self.name("role")
        self.keyword("purposes")
        purposes = self.name_list()
        ttl = DEFAULT_DAP_TTL
        if self.at_keyword("ttl"):
            self.next()
            ttl = self.integer("ttl seconds")
        self.end()
        try:
            return DataAccessPointSpec(query, role, frozenset(purposes), ttl)
        except MultiverseError as exc:
            raise self.error(str(exc), start) from None

    def member_in(self) -> RelSpecIn:
        start = self.next()
        role = self.name("role")
        constraints, privileges, purposes = (), [], []
        if self.at_keyword("constraints"):
            self.next()
            constraints = self.constraints()
        if self.at_keyword("privileges"):
            self.next()
            privileges = self.name_list()
        if self.at_keyword("purposes"):
            self.next()
            purposes = self.name_list()
        self.end()
        try:
            return RelSpecIn(role, constraints, privilege_set(privileges), frozenset(purposes))
        except MultiverseError as exc:
            raise self.error(str(exc), start) from None

    def member_out(self) -> RelSpecOut:
        start = self.next()
        name = self.name("relationship name")
        counterpart = None
        if self.at_keyword("as"):
            self.next()
            counterpart = self.name("role")
        constraints, roles = (), [OWNER]
        if self.at_keyword("constraints"):
            self.next()
            constraints = self.constraints()
        if self.at_keyword("roles"):
            self.next()
            roles = self.name_list()
        self.end()
        try:
            return RelSpecOut(name, constraints, frozenset(roles), counterpart)
        except MultiverseError as exc:
            raise self.error(str(exc), start) from None

    def st_implement(self, span):
        world = self.name("world id")
        template = self.name("template id")
        via = ttl = None
        if self.at_keyword("via"):
            self.next()
            tok = self.next()
            if tok.kind != "string":
                raise self.error("expected a quoted role tunnel", tok)
            try:
                via = parse_tunnel(tok.value)
            except MultiverseError as exc:
                raise self.error(f"bad role tunnel: {exc}", tok) from None
            self.keyword("ttl")
            ttl = self.integer("ttl seconds")
        by = self.optional_by()
        self.end()
        return ImplementStmt(world, template, via, ttl, by, span)

    def _edge(self, verb, span):
        source = self.name("source world")
        self.punct("->")
        target = self.name("target world")
        self.keyword("via")
        out_name = self.name("relationship name")
        by = self.optional_by()
        self.end()
        return EdgeStmt(verb, source, target, out_name, by, span)

    def st_relate(self, span):
        return self._edge("relate", span)

    def st_approve(self, span):
        return self._edge("approve", span)

    def st_revoke(self, span):
        return self._edge("revoke", span)

    def st_publish(self, span):
        world = self.name("world id")
        resource = self.name("resource id")
        tok = self.next()
        if tok.kind not in ("word", "string"):
            raise self.error("expected base64 data or @file", tok)
        payload = tok.value
        if not payload.startswith("@"):
            try:
                base64.b64decode(payload, validate=True)
            except ValueError:
                raise self.error("payload is not valid base64", tok) from None
        by = self.optional_by()
        self.end()
        return PublishStmt(world, resource, payload, by, span)

    def st_addowner(self, span):
        world = self.name("world id")
        agent = self.name("agent id")
        by = self.optional_by()
        self.end()
        return AddOwnerStmt(world, agent, by, span)

    def recover(self, start: int) -> None:
        """Skip past the statement that began at token ``start``."""
        self.i = start
        depth = 0
        while self.peek() is not None:
            tok = self.next()
            if tok.text == "{":
                depth += 1
            elif tok.text == "}":
                depth -= 1
                if depth <= 0:
                    return
            elif tok.text == ";" and depth == 0:
                return


class PolicyParseError(ParseError):
    """Raised with every diagnostic found in a script."""

    def __init__(self, diagnostics: list[ParseError]):
        self.diagnostics = diagnostics
        first = diagnostics[0]
        super().__init__(first.reason, first.position, first.line, first.column)
        if len(diagnostics) > 1:
            self.args = (f"{self.args[0]} (+{len(diagnostics) - 1} more)",)


def parse_policy(text: str) -> PolicyDocument:
    tokens = tokenize(text)
    parser = _Parser(tokens)
    statements, diagnostics = [], []
    while parser.peek() is not None:
        start = parser.i
        try:
            statements.append(parser.statement())
        except ParseError as exc:
            diagnostics.append(exc)
            parser.recover(start)
    if diagnostics:
        raise PolicyParseError(diagnostics)
    return PolicyDocument(tuple(statements))


def load_policy(path: str | Path) -> PolicyDocument:
    return parse_policy(Path(path).read_text(encoding="utf-8"))


# printer -------------------------------------------------------------------

def quote(name: str) -> str:
    if _BARE.match(name) and name not in KEYWORDS:
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _names(values) -> str:
    return "(" + ", ".join(quote(v) for v in values) + ")"


def _constraint(c: Constraint) -> str:
    return f"{c.side.value}.{c.kind.value}{_names(c.args)}"


def _by(by: str | None) -> str:
    return f" by {quote(by)}" if by else ""


def format_statement(stmt: Statement) -> str:
    if isinstance(stmt, PurposeStmt):
        return f"purpose {quote(stmt.name)};"
    if isinstance(stmt, AgentStmt):
        return f"agent {quote(stmt.agent)}" + (f" {quote(stmt.display)}" if stmt.display else "") + ";"
    if isinstance(stmt, WorldStmt):
        parts = [f"world {quote(stmt.world)}"]
        if stmt.display:
            parts.append(f"named {quote(stmt.display)}")
        if stmt.location:
            parts.append(f"in {quote(stmt.location)}")
        parts.append(f"owner {quote(stmt.owner)}")
        if stmt.approval:
            parts.append("approval")
        return " ".join(parts) + ";"
    if isinstance(stmt, TemplateStmt):
        head = f"template {quote(stmt.template)}"
        if stmt.parent:
            head += f" extends {quote(stmt.parent)}"
        if stmt.world:
            head += f" in {quote(stmt.world)}"
        if stmt.public:
            head += " public"
        head += _by(stmt.by)
        lines = [head + " {"]
        for d in stmt.data_access_points:
            lines.append(f"  dap {quote(d.query)} role {quote(d.required_role)} "
                         f"purposes{_names(sorted(d.allowed_purposes))} ttl {d.ttl_seconds};")
        for r in stmt.incoming:
            line = f"  in {quote(r.role)}"
            if r.constraints:
                line += " constraints(" + ", ".join(_constraint(c) for c in r.constraints) + ")"
            if r.privileges:
                line += f" privileges{_names(sorted(p.value for p in r.privileges))}"
            if r.purposes:
                line += f" purposes{_names(sorted(r.purposes))}"
            lines.append(line + ";")
        for r in stmt.outgoing:
            line = f"  out {quote(r.name)}"
            if r.counterpart_role:
                line += f" as {quote(r.counterpart_role)}"
            if r.constraints:
                line += " constraints(" + ", ".join(_constraint(c) for c in r.constraints) + ")"
            line += f" roles{_names(sorted(r.roles))}"
            lines.append(line + ";")
        lines.append("}")
        return "\n".join(lines)
    if isinstance(stmt, ImplementStmt):
        text = f"implement {quote(stmt.world)} {quote(stmt.template)}"
        if stmt.via is not None:
            text += f' via {quote_string(str(stmt.via))} ttl {stmt.ttl}'
        return text + _by(stmt.by) + ";"
    if isinstance(stmt, EdgeStmt):
        return (f"{stmt.verb} {quote(stmt.source)} -> {quote(stmt.target)} via {quote(stmt.out_name)}"
                + _by(stmt.by) + ";")
    if isinstance(stmt, PublishStmt):
        return f"publish {quote(stmt.world)} {quote(stmt.resource_id)} {quote(stmt.payload)}" + _by(stmt.by) + ";"
    if isinstance(stmt, AddOwnerStmt):
        return f"addowner {quote(stmt.world)} {quote(stmt.agent)}" + _by(stmt.by) + ";"
    raise TypeError(f"not a statement: {stmt!r}")


def quote_string(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_policy(doc: PolicyDocument) -> str:
    return "\n".join(format_statement(s) for s in doc.statements) + ("\n" if doc.statements else "")


# application ----------------------------------------------------------------

@dataclass
class ApplySummary:
    applied: int = 0
    created: list[str] = field(default_factory=list)


def _annotate(exc: Exception, index: int, stmt: Statement) -> Exception:
    exc.statement_index = index
    exc.line, exc.column = stmt.span
    return exc


def apply_statement(engine: Engine, stmt: Statement, actor: str, now: int | None = None,
                    base_dir: Path | None = None) -> str | None:
    """Apply one statement through the engine; returns a created id, if any."""
    who = getattr(stmt, "by", None) or actor
    if isinstance(stmt, PurposeStmt):
        return f"purpose:{stmt.name}" if engine.register_purpose(stmt.name) else None
    if isinstance(stmt, AgentStmt):
        return "agent:" + engine.register_agent(stmt.agent, stmt.display or stmt.agent, now)
    if isinstance(stmt, WorldStmt):
        return "world:" + engine.create_world(stmt.owner, stmt.display or stmt.world, stmt.location,
                                              world_id=stmt.world, require_approval=stmt.approval, now=now)
    if isinstance(stmt, TemplateStmt):
        world = stmt.world or engine.frame.agent_world(who)
        return "template:" + engine.define_template(who, world, stmt.build(world))
    if isinstance(stmt, ImplementStmt):
        engine.implement_template(who, stmt.world, stmt.template, stmt.via, stmt.ttl, now)
        return f"binding:{stmt.world}/{stmt.template}"
    if isinstance(stmt, EdgeStmt):
        if stmt.verb == "relate":
            result = engine.establish_relationship(who, stmt.source, stmt.target, stmt.out_name, now)
            kind = "pending" if not hasattr(result, "established_at") else "relationship"
            return f"{kind}:{stmt.source}->{stmt.target}/{stmt.out_name}"
        if stmt.verb == "approve":
            engine.approve_relationship(who, stmt.source, stmt.target, stmt.out_name, now)
            return f"relationship:{stmt.source}->{stmt.target}/{stmt.out_name}"
        engine.revoke_relationship(who, (stmt.source, stmt.target, stmt.out_name), now)
        return None
    if isinstance(stmt, PublishStmt):
        if stmt.payload.startswith("@"):
            path = Path(stmt.payload[1:])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            data = path.read_bytes()
        else:
            data = base64.b64decode(stmt.payload)
        engine.put_resource(who, stmt.world, stmt.resource_id, data, now)
        return f"resource:{stmt.world}/{stmt.resource_id}"
    if isinstance(stmt, AddOwnerStmt):
        engine.add_owner(who, stmt.world, stmt.agent, now)
        return None
    raise TypeError(f"not a statement: {stmt!r}")


def apply_policy(doc: PolicyDocument, actor: str, engine: Engine, now: int | None = None,
                 base_dir: str | Path | None = None) -> ApplySummary:
    """Apply statements in order.  Each statement is atomic; earlier ones stay
    applied when a later one fails, and the error carries the statement's
    ``line`` and ``column``.  Names that do not resolve raise
    :class:`ResolveError`."""
    summary = ApplySummary()
    base = Path(base_dir) if base_dir is not None else None
    for index, stmt in enumerate(doc.statements):
        try:
            created = apply_statement(engine, stmt, actor, now, base)
        except UnknownEntity as exc:
            err = ResolveError(f"line {stmt.span[0]}: {exc}")
            err.cause_code = exc.code
            raise _annotate(err, index, stmt) from exc
        except (MultiverseError, OSError) as exc:
            raise _annotate(exc, index, stmt)
        summary.applied += 1
        if created:
            summary.created.append(created)
    return summary

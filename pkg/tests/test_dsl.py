import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiverse.dsl import (
    KEYWORDS,
    AddOwnerStmt,
    AgentStmt,
    EdgeStmt,
    ImplementStmt,
    PolicyDocument,
    PolicyParseError,
    PublishStmt,
    PurposeStmt,
    TemplateStmt,
    WorldStmt,
    apply_policy,
    format_policy,
    load_policy,
    parse_policy,
)
from multiverse.errors import ConstraintViolated, ParseError, ResolveError
from multiverse.model import (
    OWNER,
    Constraint,
    DataAccessPointSpec,
    Privilege,
    RelSpecIn,
    RelSpecOut,
    parse_tunnel,
)
from multiverse.scenarios import builtin_policy_names, policy_text

from conftest import build
from test_model import identifiers, roles, tunnels

names = identifiers | st.sampled_from(sorted(KEYWORDS))
purposes = st.frozensets(names, min_size=1, max_size=3)
constraints = st.one_of(
    st.builds(Constraint.implements, st.sampled_from(["source", "target"]), names),
    st.builds(Constraint.relt, st.sampled_from(["source", "target"]), names, names),
    st.builds(Constraint.relid, st.sampled_from(["source", "target"]), names, names),
)
privileges = st.frozensets(st.sampled_from(list(Privilege)), max_size=3)
role_names = roles | st.sampled_from(sorted(KEYWORDS))
maybe = lambda s: st.none() | s  # noqa: E731

statements = st.one_of(
    st.builds(PurposeStmt, names),
    st.builds(AgentStmt, names, maybe(names)),
    st.builds(WorldStmt, names, names, maybe(names), maybe(names), st.booleans()),
    st.builds(TemplateStmt, names, maybe(names), maybe(names), st.booleans(), maybe(names),
              st.lists(st.builds(DataAccessPointSpec, st.sampled_from(["read", "write", "delete"]), role_names,
                                 purposes, st.integers(1, 10**7)), max_size=3,
                       unique_by=lambda d: d.query).map(tuple),
              st.lists(st.builds(RelSpecIn, role_names, st.lists(constraints, max_size=2).map(tuple), privileges,
                                 st.frozensets(names, max_size=2)), max_size=2).map(tuple),
              st.lists(st.builds(RelSpecOut, names, st.lists(constraints, max_size=2).map(tuple),
                                 st.frozensets(role_names | st.just(OWNER), min_size=1, max_size=2), role_names),
                       max_size=2).map(tuple)),
    st.builds(ImplementStmt, names, names, st.none(), st.none(), maybe(names)),
    st.builds(lambda w, t, via, ttl, by: ImplementStmt(w, t, via, ttl, by),
              names, names, tunnels(), st.integers(1, 10**9), maybe(names)),
    st.builds(EdgeStmt, st.sampled_from(["relate", "approve", "revoke"]), names, names, names, maybe(names)),
    st.builds(PublishStmt, names, names, st.sampled_from(["", "cmVjb3Jk", "@data/file.bin"]), maybe(names)),
    st.builds(AddOwnerStmt, names, names, maybe(names)),
)


def test_empty_and_comment_only():
    assert parse_policy("") == PolicyDocument()
    assert len(parse_policy("# nothing here\n\n  # still nothing\n")) == 0


def test_incoming_spec_example():
    doc = parse_policy("template Hospital { in Doctor constraints(source.implements(Person)); }")
    (stmt,) = doc.statements
    assert stmt.incoming == (RelSpecIn("Doctor", (Constraint.implements("source", "Person"),)),)
    assert stmt.outgoing == () and stmt.data_access_points == ()


def test_quoted_keywords_and_spaces():
    doc = parse_policy('purpose "in"; template University public { in "prospective student"; }')
    assert doc.statements[0] == PurposeStmt("in")
    assert doc.statements[1].incoming[0].role == "prospective student"
    with pytest.raises(ParseError):
        parse_policy("purpose in;")


def test_implement_via():
    (stmt,) = parse_policy('implement Fortis Hospital via "Licensee(R):Owner(Fortis)" ttl 30 by A;').statements
    assert stmt == ImplementStmt("Fortis", "Hospital", parse_tunnel("Licensee(R):Owner(Fortis)"), 30, "A")


def test_statement_spans():
    doc = parse_policy("purpose A;\n  agent B;\n")
    assert [s.span for s in doc.statements] == [(1, 1), (2, 3)]


@settings(max_examples=300, deadline=None)
@given(st.lists(statements, max_size=6))
def test_round_trip(stmts):
    doc = PolicyDocument(tuple(stmts))
    text = format_policy(doc)
    assert parse_policy(text) == doc
    assert format_policy(parse_policy(text)) == text


@pytest.mark.parametrize("name", builtin_policy_names())
def test_builtin_policies_round_trip(name):
    doc = parse_policy(policy_text(name))
    assert parse_policy(format_policy(doc)) == doc


def test_diagnostics_positions():
    text = "purpose A;\nworld W owner;\nagent B;\ntemplate T { in ; }\npurpose C"
    with pytest.raises(PolicyParseError) as info:
        parse_policy(text)
    diags = info.value.diagnostics
    assert [(d.line, d.column) for d in diags] == [(2, 14), (4, 17), (5, 10)]
    assert info.value.line == 2 and "more" in str(info.value)


def test_lex_error_position():
    with pytest.raises(ParseError) as info:
        parse_policy('purpose A;\n  purpose "open;')
    assert (info.value.line, info.value.column) == (2, 11)


def test_bad_payload_and_tunnel():
    with pytest.raises(ParseError):
        parse_policy("publish W r notbase64! ;")
    with pytest.raises(ParseError):
        parse_policy('implement W T via "Owner(A):Doctor(B)";')
    with pytest.raises(ParseError):
        parse_policy("template T { in Owner; }")


def test_partial_application_persists(engine):
    doc = parse_policy("agent A;\nworld W owner A;\nrelate A -> W via Nope by A;\nagent B;")
    with pytest.raises(Exception) as info:
        apply_policy(doc, "A", engine)
    assert info.value.line == 3 and info.value.statement_index == 2
    assert "W" in engine.frame.worlds and "B" not in engine.frame.agents


def test_duplicate_purpose_is_noop(engine):
    summary = apply_policy(parse_policy("purpose P; purpose P;"), "x", engine)
    assert summary.applied == 2 and summary.created == ["purpose:P"]
    assert list(engine.frame.purposes) == ["P"]


def test_unknown_names_resolve_error(engine):
    with pytest.raises(ResolveError) as info:
        apply_policy(parse_policy("agent A;\n\nimplement Nowhere Hospital by A;"), "A", engine)
    assert info.value.line == 3 and info.value.cause_code


def test_denials_keep_their_type():
    engine = build("scenario2")
    with pytest.raises(ConstraintViolated) as info:
        apply_policy(parse_policy("agent X;\nrelate Pat -> Mallory via ConsultsWith by Pat;"), "Registrar", engine)
    assert info.value.line == 2 and info.value.statement_index == 1


def test_publish_from_file(tmp_path, engine):
    (tmp_path / "blob.bin").write_bytes(b"\x00\x01payload")
    script = tmp_path / "p.mvp"
    script.write_text("agent A;\nworld W owner A;\npublish W r @blob.bin by A;\n")
    apply_policy(load_policy(script), "A", engine, base_dir=tmp_path)
    assert engine.frame.resource("W", "r").data == b"\x00\x01payload"

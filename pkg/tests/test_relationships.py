import random

import pytest

from multiverse import relationships
from multiverse.dsl import apply_policy, parse_policy
from multiverse.errors import (
    ConstraintViolated,
    DuplicateRelationship,
    ExpiredTemplate,
    PermissionDenied,
    UnknownInstance,
    UnknownSpec,
    UnknownWorld,
)
from multiverse.model import ALL_PRIVILEGES, OWNER, Constraint, PendingRelationship
from multiverse.relationships import Basis

from conftest import build
from oracles import all_constraints, bf_constraint, bf_roles, random_frame

COMPANY = """
agent Ann; agent Bob; agent Boss;
world Commons owner Boss;
template Person in Commons public by Boss { out JoinAs as Employee constraints(target.implements(Company)); }
template Company in Commons public by Boss { in Employee constraints(source.implements(Person)); }
template Shop in Commons public by Boss { in Employee; }
world Acme owner Boss;
world Kiosk owner Boss;
implement Ann Person by Ann;
implement Acme Company by Boss;
implement Kiosk Shop by Boss;
"""


def company(engine):
    apply_policy(parse_policy(COMPANY), "Boss", engine)
    return engine


def names(assertions):
    return {a.role for a in assertions}


def test_implements(engine):
    company(engine)
    c = Constraint.implements("target", "Company")
    assert engine.evaluate_constraint(c, "Ann", "Acme")
    assert not engine.evaluate_constraint(c, "Ann", "Kiosk")


def test_relt_and_relid():
    engine = build("scenario2")
    relt = Constraint.relt("target", "Doctor", "Hospital")
    assert engine.evaluate_constraint(relt, "Pat", "Ram")
    assert not engine.evaluate_constraint(relt, "Pat", "Mallory")
    relid = Constraint.relid("source", "Doctor", "Fortis")
    assert engine.evaluate_constraint(relid, "Ram", "Pat")
    assert not engine.evaluate_constraint(Constraint.relid("source", "Bank", "ABC"), "Ram", "Pat")


def test_constraint_unknown_world(fig2):
    with pytest.raises(UnknownWorld):
        fig2.evaluate_constraint(Constraint.implements("source", "Clinic"), "Nowhere", "Sharada")


def test_establish_examples(fig2):
    fortis = [r for r in fig2.frame.relationships if r.source == "Fortis" and r.target == "Sharada"]
    assert [(r.out_name, r.role) for r in fortis] == [("AdvisorOf", "Advisor")]
    cet = build("cet")
    cet.revoke_relationship("A", ("A", "CET", "TakeTest"))
    inst = cet.establish_relationship("A", "A", "CET", "TakeTest")
    assert (inst.source, inst.target, inst.role) == ("A", "CET", "test applicant")


def test_constraint_violation_names_constraint(engine):
    company(engine)
    with pytest.raises(ConstraintViolated) as info:
        engine.establish_relationship("Ann", "Ann", "Kiosk", "JoinAs")
    assert str(info.value.constraint) == "target.implements(Company)"
    inst = engine.establish_relationship("Ann", "Ann", "Acme", "JoinAs")
    assert inst.role == "Employee" and inst.established_by == "Ann"
    with pytest.raises(DuplicateRelationship):
        engine.establish_relationship("Ann", "Ann", "Acme", "JoinAs")


def test_unknown_spec(engine):
    company(engine)
    with pytest.raises(UnknownSpec):
        engine.establish_relationship("Ann", "Ann", "Acme", "Nope")


def test_actor_needs_listed_role(engine):
    company(engine)
    with pytest.raises(PermissionDenied):
        engine.establish_relationship("Bob", "Ann", "Acme", "JoinAs")


def test_approval_queue(fig2):
    fig2.register_agent("Sita")
    fig2.implement_template("Sita", "Sita", "Person")
    pending = fig2.establish_relationship("Sita", "Sita", "Fortis", "WorksAt")
    assert isinstance(pending, PendingRelationship)
    assert "Doctor" not in names(fig2.roles_of("Sita", "Fortis"))
    with pytest.raises(PermissionDenied):
        fig2.approve_relationship("Sita", "Sita", "Fortis", "WorksAt")
    fig2.approve_relationship("FortisAdmin", "Sita", "Fortis", "WorksAt")
    assert "Doctor" in names(fig2.roles_of("Sita", "Fortis"))


def test_roles_of_examples(fig2):
    assert names(fig2.roles_of("Ram", "Fortis")) == {"Doctor"}
    assert names(fig2.roles_of("Fortis", "Sharada")) == {"Advisor"}
    assert names(fig2.roles_of("Ram", "Ram")) == {OWNER}
    assert names(fig2.roles_of("FortisAdmin", "Fortis")) == {OWNER}


def test_inheritance_by_shared_template():
    engine = build("hospital-branches")
    for branch in ("FortisNorth", "FortisSouth", "FortisNorthWing"):
        got = engine.roles_of("Ram", branch)
        assert {(a.role, a.basis) for a in got} == {("Doctor", Basis.INHERITED)}
    assert names(engine.roles_of("Ram", "FortisPharmacy")) == set()


def test_inheritance_stops_at_expired_container():
    engine = build("hospital-branches")
    from multiverse import templates
    with engine.store.transaction() as draft:
        templates.mark_expired(draft, "FortisNorth", "Hospital")
    assert names(engine.roles_of("Ram", "FortisNorthWing")) == set()
    assert names(engine.roles_of("Ram", "FortisSouth")) == {"Doctor"}


def test_owner_universality(fig2):
    frame = fig2.frame
    for wid, world in frame.worlds.items():
        for agent in world.owners:
            assert OWNER in names(fig2.roles_of(frame.agent_world(agent), wid))
            assert relationships.privileges_of(frame, frame.agent_world(agent), wid) == ALL_PRIVILEGES
            for p in ALL_PRIVILEGES:
                assert relationships.has_privilege(frame, agent, wid, p)


def test_revoke(fig2):
    from multiverse.access import AccessRequest
    from multiverse.errors import TunnelInvalid
    from conftest import FIG2_TUNNEL
    with pytest.raises(PermissionDenied):
        fig2.revoke_relationship("SharadaAdmin", ("Ram", "Fortis", "WorksAt"))
    first = fig2.frame.edges_between("Ram", "Fortis")[0]
    fig2.revoke_relationship("FortisAdmin", ("Ram", "Fortis", "WorksAt"))
    with pytest.raises(TunnelInvalid):
        fig2.access_remote(AccessRequest("Ram", FIG2_TUNNEL, "read", "d", "Diagnostics"))
    with pytest.raises(UnknownInstance):
        fig2.revoke_relationship("FortisAdmin", ("Ram", "Fortis", "WorksAt"))
    fig2.clock.advance(60)
    fig2.establish_relationship("Ram", "Ram", "Fortis", "WorksAt")
    fig2.approve_relationship("FortisAdmin", "Ram", "Fortis", "WorksAt")
    again = fig2.frame.edges_between("Ram", "Fortis")[0]
    assert again.established_at == first.established_at + 60


def test_expired_template_blocks_formation():
    engine = build("scenario4")
    ttl = engine.frame.world("Fortis").binding("Hospital").ttl
    with pytest.raises(ExpiredTemplate):
        engine.establish_relationship("Newcomer", "Newcomer", "Fortis", "WorksAt", now=ttl)


def test_formation_soundness():
    # every stored instance satisfied its constraints when it was formed
    for name in ("fig2", "scenario2", "cet", "uid", "datatrust"):
        engine = build(name)
        frame = engine.frame
        for rel in frame.relationships:
            (_, out_spec), (_, in_spec) = relationships.formation_specs(frame, rel.source, rel.target,
                                                                          rel.out_name, None)
            for c in out_spec.constraints + in_spec.constraints:
                assert relationships.evaluate_constraint(frame, c, rel.source, rel.target), (name, rel, c)


@pytest.mark.parametrize("seed", range(40))
def test_oracle_equivalence(seed):
    rng = random.Random(seed)
    frame = random_frame(rng)
    worlds = sorted(frame.worlds)
    for now in (None, 1000):
        for c in all_constraints(frame):
            for s in worlds:
                for t in worlds:
                    assert relationships.evaluate_constraint(frame, c, s, t, now) == \
                        bf_constraint(frame, c, s, t, now), (c, s, t, now)
        for s in worlds:
            for w in worlds:
                got = {(a.role, a.basis.value) for a in relationships.roles_of(frame, s, w, now)}
                assert got == bf_roles(frame, s, w, now), (s, w, now)

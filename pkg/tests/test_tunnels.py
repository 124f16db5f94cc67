from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiverse.errors import ExpiredTemplate, UnknownRole
from multiverse.model import ALL_PRIVILEGES, Privilege, parse_tunnel
from multiverse.tunnels import make_rng

from conftest import FIG2_TUNNEL, build


@pytest.fixture(scope="module")
def chain():
    return build("risk-chain")


def test_discover_worked_example(fig2):
    assert FIG2_TUNNEL in [str(t) for t in fig2.discover_tunnels("Ram", "Sharada", 4)]
    assert [str(t) for t in fig2.discover_tunnels("Ram", "Ram", 4)] == ["Owner(Ram)"]
    assert fig2.discover_tunnels("SharadaAdmin", "Fortis", 4) == []


def test_discover_respects_depth_and_order(fig2):
    assert fig2.discover_tunnels("Ram", "Sharada", 2) == []
    found = [str(t) for t in build("uid").discover_tunnels("HID", "UID", 5)]
    assert found == sorted(found)


def test_worked_example_valid_with_three_checks(fig2):
    report = fig2.validate_tunnel(FIG2_TUNNEL, 0.0, agent="Ram")
    assert report.valid
    assert len(report.performed(0)) == 3
    assert report.performed() == report.performed(0)


def test_revoked_doctor_fails_at_segment(fig2):
    fig2.revoke_relationship("FortisAdmin", ("Ram", "Fortis", "WorksAt"))
    report = fig2.validate_tunnel(FIG2_TUNNEL, 0.0, agent="Ram")
    assert not report.valid
    assert report.failure[0] == 1
    assert "Doctor" in report.failure[1]


def test_terminal_owner_must_be_caller(fig2):
    assert not fig2.validate_tunnel(FIG2_TUNNEL, agent="FortisAdmin").valid


def test_missing_interim_world_fails(fig2):
    report = fig2.validate_tunnel("Advisor(Sharada):Doctor(Atlantis):Owner(Ram)", agent="Ram")
    assert not report.valid and report.failure[0] == 1


def test_levels_at_endpoints(chain):
    full = chain.validate_tunnel(FIG2_TUNNEL, 0.0, agent="Ram")
    assert full.valid
    assert [len(full.performed(k)) for k in (0, 1, 2)] == [3, 1, 1]
    none = chain.validate_tunnel(FIG2_TUNNEL, 1.0, agent="Ram")
    assert none.valid
    assert len(none.performed(0)) == 3 and none.performed() == none.performed(0)
    assert len(none.candidates(1)) == 1 and len(none.candidates(2)) == 1


def test_level1_frequency_half(chain):
    frame = chain.frame
    from multiverse.tunnels import validate_tunnel
    tunnel = parse_tunnel(FIG2_TUNNEL)
    hits = sum(bool(validate_tunnel(frame, tunnel, 0.5, seed, agent="Ram").performed(1)) for seed in range(10_000))
    assert abs(hits / 10_000 - 0.5) <= 0.02


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**32))
def test_determinism(chain, rho, seed):
    a = chain.validate_tunnel(FIG2_TUNNEL, rho, seed, agent="Ram")
    b = chain.validate_tunnel(FIG2_TUNNEL, rho, seed, agent="Ram")
    assert a.to_dict() == b.to_dict()


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.integers(0, 10_000))
def test_monotone_failure(rho, seed):
    engine = build("risk-chain")
    engine.revoke_relationship("FortisAdmin", ("Ram", "Fortis", "WorksAt"))
    assert not engine.validate_tunnel(FIG2_TUNNEL, 1.0, agent="Ram").valid
    assert not engine.validate_tunnel(FIG2_TUNNEL, rho, seed, agent="Ram").valid


def test_upstream_loss_only_seen_when_checked():
    engine = build("risk-chain")
    engine.revoke_relationship("NAdmin", ("R", "N", "AccreditedBy"))
    assert engine.validate_tunnel(FIG2_TUNNEL, 1.0, agent="Ram").valid
    report = engine.validate_tunnel(FIG2_TUNNEL, 0.0, agent="Ram")
    assert not report.valid
    assert report.failed_bindings() == [("R", "Regulator")]


def test_validation_is_pure(chain):
    before = chain.frame.to_dict()
    version = chain.store.version
    for seed in range(5):
        chain.validate_tunnel(FIG2_TUNNEL, 0.3, seed, agent="Ram")
    assert chain.store.version == version and chain.frame.to_dict() == before


def test_depth_cap_on_cyclic_provenance():
    engine = build("risk-chain")
    # make N's Accreditor binding depend on R again, closing a loop
    with engine.store.transaction() as draft:
        n = draft.worlds["N"]
        n.bindings = [replace(b, capacity=parse_tunnel("Licensee(R):Owner(N)"), ttl=10**12)
                      if b.template == "Accreditor" else b for b in n.bindings]
    report = engine.validate_tunnel(FIG2_TUNNEL, 0.0, agent="Ram")
    capped = [c for c in report.checks if c.detail == "recursion depth cap"]
    assert capped and all(not c.performed for c in capped)
    assert max(c.level for c in report.checks) == engine.max_level + 1


def test_effective_grant(fig2):
    assert fig2.effective_grant("Advisor(Sharada):Doctor(Fortis):Owner(Ram)") == (
        frozenset({Privilege.RESOURCE_READ}), frozenset({"Diagnostics"}))
    privileges, purposes = fig2.effective_grant("Owner(Ram)")
    assert privileges == ALL_PRIVILEGES and purposes == frozenset(fig2.frame.purposes)
    with pytest.raises(UnknownRole):
        fig2.effective_grant("Janitor(Sharada):Owner(Ram)")


def test_effective_grant_expired():
    engine = build("scenario4")
    ttl = engine.frame.world("Fortis").binding("Hospital").ttl
    with pytest.raises(ExpiredTemplate):
        engine.effective_grant("Doctor(Fortis):Owner(Ram)", now=ttl)


def test_rng_is_philox():
    a = make_rng(5).random(3)
    b = np.random.Generator(np.random.Philox(5)).random(3)
    assert (a == b).all()

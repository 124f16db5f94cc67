import random

import pytest

from multiverse.dsl import apply_policy, parse_policy
from multiverse.errors import CycleDetected, DuplicateAgent, MultiverseError, PermissionDenied
from multiverse.frame import Frame
from multiverse.store import FrameStore

from conftest import FIG2_TUNNEL


def check_integrity(frame: Frame) -> None:
    for rel in frame.relationships:
        assert rel.source in frame.worlds and rel.target in frame.worlds
    for (world, _), res in frame.resources.items():
        assert world in frame.worlds
        if res.origin_world is not None:
            assert res.ttl > res.stored_at
    for agent, world in frame.agents.items():
        assert world in frame.worlds
        assert agent in frame.worlds[world].owners
    for wid, world in frame.worlds.items():
        assert world.owners
        assert world.location is None or world.location in frame.worlds
        chain = frame.containment_chain(wid)
        assert len(chain) == len(set(chain))


def test_create_world(engine):
    engine.register_agent("Ram", "Dr. Ram")
    engine.register_agent("Mallory")
    assert engine.create_world("Ram", "Sharada") == "Sharada"
    world = engine.frame.world("Sharada")
    assert world.owners == {"Ram"} and world.location is None
    engine.create_world("Ram", "H")
    engine.create_world("Ram", "Branch1", "H")
    assert engine.frame.world("Branch1").location == "H"
    with pytest.raises(PermissionDenied):
        engine.create_world("Mallory", "X", "H")


def test_register_agent(engine):
    engine.register_agent("Ram", "Dr. Ram")
    engine.register_agent("Ajay", "Mr. Ajay")
    assert engine.frame.worlds["Ram"].owners == {"Ram"}
    assert engine.frame.agent_world("Ajay") == "Ajay"
    with pytest.raises(DuplicateAgent):
        engine.register_agent("Ram", "again")


def test_containment_chain(engine):
    engine.register_agent("Ram")
    for name, loc in [("H", None), ("B", "H"), ("C", "B")]:
        engine.create_world("Ram", name, loc)
    frame = engine.frame
    assert frame.containment_chain("B") == ["B", "H"]
    assert frame.containment_chain("H") == ["H"]
    # walk the parent links by hand
    walked, w = [], "C"
    while w is not None:
        walked.append(w)
        w = frame.worlds[w].location
    assert frame.containment_chain("C") == walked and len(walked) == 3


def test_relocate(engine):
    engine.register_agent("Ram")
    engine.create_world("Ram", "H")
    engine.create_world("Ram", "B")
    engine.relocate_world("Ram", "B", "H")
    assert engine.frame.world("B").location == "H"
    with pytest.raises(CycleDetected):
        engine.relocate_world("Ram", "H", "B")
    with pytest.raises(CycleDetected):
        engine.relocate_world("Ram", "H", "H")


RELOCATE_FIXTURE = """
agent Boss; agent Mover; agent Reader; agent Stranger;
world Commons owner Boss;
template Staff in Commons public by Boss {
  in Porter privileges(world.relocate);
  in Clerk privileges(resource.read);
}
template Member in Commons public by Boss {
  out Carry as Porter;
  out File as Clerk;
}
world H owner Boss;
world B in H owner Boss;
implement B Staff by Boss;
implement Mover Member by Mover;
implement Reader Member by Reader;
relate Mover -> B via Carry by Mover;
relate Reader -> B via File by Reader;
"""


def test_relocate_privilege_table(engine):
    apply_policy(parse_policy(RELOCATE_FIXTURE), "Boss", engine)
    # privileges per agent, worked out from the role table above
    expected = {"Boss": True, "Mover": True, "Reader": False, "Stranger": False}
    for agent, allowed in expected.items():
        snapshot = engine.frame
        if allowed:
            engine.relocate_world(agent, "B", None)
            assert engine.frame.world("B").location is None
            engine.relocate_world("Boss", "B", "H")
        else:
            with pytest.raises(PermissionDenied):
                engine.relocate_world(agent, "B", None)
            assert engine.frame is snapshot


def test_put_resource(engine):
    engine.register_agent("Ram")
    engine.register_agent("Mallory")
    engine.create_world("Ram", "Sharada")
    engine.put_resource("Ram", "Sharada", "d", b"record")
    res = engine.frame.resource("Sharada", "d")
    assert (res.capacity, res.ttl, res.origin_world) == (None, None, None)
    with pytest.raises(PermissionDenied):
        engine.put_resource("Mallory", "Sharada", "d", b"forged")
    v = engine.store.version
    engine.put_resource("Ram", "Sharada", "d", b"updated")
    assert engine.store.version == v + 1
    assert engine.frame.resource("Sharada", "d").data == b"updated"


def test_version_and_snapshots(engine):
    engine.register_agent("Ram")
    before = engine.frame
    v = before.version
    engine.create_world("Ram", "W")
    assert engine.store.version == v + 1
    assert "W" not in before.worlds
    with pytest.raises(MultiverseError):
        engine.create_world("Ram", "W")
    assert engine.store.version == v + 1


def test_aborted_transaction_leaves_frame():
    store = FrameStore()
    with pytest.raises(RuntimeError):
        with store.transaction() as draft:
            draft.purposes.append("X")
            raise RuntimeError
    assert store.version == 0 and store.snapshot().purposes == []


def test_delete_world(fig2):
    fig2.put_resource("FortisAdmin", "Fortis", "roster", b"...")
    fig2.create_world("FortisAdmin", "Ward", "Fortis")
    fig2.create_world("FortisAdmin", "Bed", "Ward")
    fig2.delete_world("FortisAdmin", "Ward")
    frame = fig2.frame
    assert frame.world("Bed").location == "Fortis"
    fig2.delete_world("FortisAdmin", "Fortis")
    frame = fig2.frame
    assert "Fortis" not in frame.worlds
    assert frame.world("Bed").location is None
    assert not [r for r in frame.relationships if "Fortis" in (r.source, r.target)]
    assert ("Fortis", "roster") not in frame.resources
    check_integrity(frame)
    with pytest.raises(PermissionDenied):
        fig2.delete_world("Ram", "Ram")


def test_purpose_registry_append_only(engine):
    assert engine.register_purpose("Diagnostics")
    assert not engine.register_purpose("Diagnostics")
    assert engine.frame.purposes == ["Diagnostics"]


def test_persistence_round_trip(tmp_path, fig2):
    from multiverse.access import AccessRequest
    fig2.access_remote(AccessRequest("Ram", FIG2_TUNNEL, "read", "d", "Diagnostics"))
    path = tmp_path / "f.frame.json"
    fig2.save(path)
    first = path.read_bytes()
    loaded = FrameStore.open(path)
    assert loaded.snapshot().to_dict() == fig2.frame.to_dict()
    loaded.save(tmp_path / "g.frame.json")
    assert (tmp_path / "g.frame.json").read_bytes() == first
    assert Frame.loads(first.decode()).dumps().encode() == first


def _random_op(rng: random.Random, engine, agents):
    frame = engine.frame
    worlds = sorted(frame.worlds)
    actor = rng.choice(agents)
    op = rng.randrange(6)
    if op == 0:
        engine.create_world(actor, f"w{rng.randrange(1000)}", rng.choice(worlds + [None]))
    elif op == 1:
        engine.relocate_world(actor, rng.choice(worlds), rng.choice(worlds + [None]))
    elif op == 2:
        engine.delete_world(actor, rng.choice(worlds))
    elif op == 3:
        engine.put_resource(actor, rng.choice(worlds), f"r{rng.randrange(5)}", b"x")
    elif op == 4:
        engine.establish_relationship(actor, rng.choice(worlds), rng.choice(worlds), "Join")
    else:
        engine.add_owner(actor, rng.choice(worlds), rng.choice(agents))


FUZZ_BASE = """
agent A; agent B; agent C;
template Club in A public by A { in Member; out Join as Member; }
implement A Club by A;
implement B Club by B;
implement C Club by C;
"""


@pytest.mark.parametrize("seed", range(20))
def test_referential_integrity_fuzz(seed, engine):
    apply_policy(parse_policy(FUZZ_BASE), "A", engine)
    rng = random.Random(seed)
    for _ in range(60):
        version = engine.store.version
        try:
            _random_op(rng, engine, ["A", "B", "C"])
        except MultiverseError:
            assert engine.store.version >= version
        check_integrity(engine.frame)

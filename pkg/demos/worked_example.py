"""Walk through the doctor/clinic example step by step.

Run with ``python3 demos/worked_example.py``.
"""

from multiverse.access import AccessRequest
from multiverse.dsl import apply_policy
from multiverse.engine import Engine, ManualClock
from multiverse.errors import CapacityRevoked, TunnelInvalid
from multiverse.scenarios import FIG2_TUNNEL, START, load_builtin_policy


def main() -> None:
    clock = ManualClock(START)
    engine = Engine(clock=clock)
    summary = apply_policy(load_builtin_policy("fig2"), "Registrar", engine)
    print(f"applied {summary.applied} statements; frame version {engine.store.version}")

    print("\nrole tunnels from Ram to Sharada:")
    for tunnel in engine.discover_tunnels("Ram", "Sharada"):
        print("  ", tunnel)

    print("\naccess points on Sharada's record d:")
    for point in engine.access_points("Ram", "Sharada", "d"):
        print("  ", point)

    copy = engine.access_remote(AccessRequest("Ram", FIG2_TUNNEL, "read", "d", "Diagnostics"))
    print(f"\nfetched {copy.data!r}; cached in Ram's world until t={copy.ttl}")
    for check in engine.audit.records[-1].report["checks"]:
        print(f"   level {check['level']} {check['subject']:<18} passed={check['passed']}")

    clock.advance(3600)
    print("\nan hour later the cached copy still reads:", engine.read_cached("Ram", "d").data)

    engine.revoke_relationship("FortisAdmin", ("Ram", "Fortis", "WorksAt"))
    print("\nFortis revokes Ram's WorksAt edge")
    try:
        engine.read_cached("Ram", "d")
    except CapacityRevoked as exc:
        print("   cached read:", exc.code, "-", exc)
    try:
        engine.access_remote(AccessRequest("Ram", FIG2_TUNNEL, "read", "d", "Diagnostics"))
    except TunnelInvalid as exc:
        print("   fresh fetch:", exc.code, "- segment", exc.report.failure[0], "failed")

    verdict = engine.audit.verify()
    print(f"\naudit log: {len(engine.audit)} records, chain intact: {verdict.ok}")


if __name__ == "__main__":
    main()

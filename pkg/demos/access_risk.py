"""How often deeper integrity checks run as the access risk grows.

The risk-chain fixture puts one remote template binding at level 1
(Fortis under licence from R) and one at level 2 (R under accreditation
from N).  Run with ``python3 demos/access_risk.py [seeds]``.
"""

import sys

from multiverse.dsl import apply_policy
from multiverse.engine import Engine, ManualClock
from multiverse.model import parse_tunnel
from multiverse.scenarios import FIG2_TUNNEL, START, load_builtin_policy
from multiverse.tunnels import validate_tunnel


def main(seeds: int = 2000) -> None:
    engine = Engine(clock=ManualClock(START))
    apply_policy(load_builtin_policy("risk-chain"), "Registrar", engine)
    frame, tunnel = engine.frame, parse_tunnel(FIG2_TUNNEL)
    print(f"{'rho':>5} {'level 1':>9} {'expected':>9} {'level 2':>9} {'expected':>9}")
    for rho in (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0):
        level1 = level2 = 0
        for seed in range(seeds):
            report = validate_tunnel(frame, tunnel, rho, seed, agent="Ram")
            level1 += len(report.performed(1))
            level2 += len(report.performed(2))
        print(f"{rho:>5.2f} {level1 / seeds:>9.3f} {1 - rho:>9.3f} {level2 / seeds:>9.3f} {(1 - rho) ** 2:>9.3f}")

    engine.revoke_relationship("NAdmin", ("R", "N", "AccreditedBy"))
    frame = engine.frame
    caught = sum(not validate_tunnel(frame, tunnel, 0.5, seed, agent="Ram").valid for seed in range(seeds))
    print(f"\nafter R loses its accreditation, rho=0.5 rejects {caught / seeds:.1%} of accesses "
          f"(the level-2 check runs with probability 0.25)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000)

import pytest

from multiverse.dsl import apply_policy
from multiverse.engine import Engine, ManualClock
from multiverse.scenarios import START, load_builtin_policy

FIG2_TUNNEL = "Advisor(Sharada):Doctor(Fortis):Owner(Ram)"


def build(*policies: str, start: int = START, audit=None) -> Engine:
    engine = Engine(audit=audit, clock=ManualClock(start))
    apply_policy(load_builtin_policy(*policies), "Registrar", engine)
    return engine


@pytest.fixture
def fig2():
    return build("fig2")


@pytest.fixture
def engine():
    """An empty engine on a manual clock."""
    return Engine(clock=ManualClock(START))

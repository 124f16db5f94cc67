import pytest

from multiverse.audit import AuditLog
from multiverse.scenarios import all_scenarios, builtin_scenarios, find_scenario, run_scenario


def test_seven_builtin_scripts():
    names = [s.name for s in builtin_scenarios()]
    assert len(names) == 7 and len(set(names)) == 7
    assert [s.name for s in all_scenarios()] == ["fig2"] + names


@pytest.mark.parametrize("name", [s.name for s in all_scenarios()])
def test_scenario_passes(name):
    result = run_scenario(find_scenario(name))
    assert not result.error
    failed = [(r.step.command, r.step.expect, r.outcome.label) for r in result.results if not r.passed]
    assert failed == []
    assert result.engine.audit.verify()


def test_every_script_exercises_a_denial():
    for script in builtin_scenarios():
        assert any(step.expect != "ok" for step in script.steps), script.name


def test_shared_log_counts():
    log = AuditLog()
    counted = 0
    for script in builtin_scenarios():
        counted += sum(run_scenario(script, log).engine.counts.values())
    assert len(log) == counted and log.verify()


def test_unknown_scenario():
    with pytest.raises(KeyError):
        find_scenario("nope")

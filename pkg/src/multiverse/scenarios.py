"""Builtin scenario scripts: a policy plus steps with asserted outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from multiverse.audit import AuditLog
from multiverse.commands import Outcome, run_step
from multiverse.dsl import PolicyDocument, apply_policy, parse_policy
from multiverse.engine import Engine, ManualClock

START = 1_700_000_000
DAY = 86_400

FIG2_TUNNEL = "Advisor(Sharada):Doctor(Fortis):Owner(Ram)"
DATATRUST_TUNNEL = "Researcher(EnergyCompany):Senior Analyst(EnergyAnalytics):Owner(Ajay)"


def policy_text(name: str) -> str:
    """Source of a bundled ``.mvp`` script."""
    return resources.files("multiverse").joinpath("policies", f"{name}.mvp").read_text(encoding="utf-8")


def load_builtin_policy(*names: str) -> PolicyDocument:
    return parse_policy("\n".join(policy_text(n) for n in names))


def builtin_policy_names() -> list[str]:
    folder = resources.files("multiverse").joinpath("policies")
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".mvp"))


@dataclass(frozen=True)
class Step:
    command: str
    expect: str = "ok"
    note: str = ""


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    description: str
    policy: PolicyDocument
    steps: tuple[Step, ...]
    actor: str = "Registrar"
    start: int = START


@dataclass
class StepResult:
    step: Step
    outcome: Outcome

    @property
    def passed(self) -> bool:
        return self.outcome.label == self.step.expect


@dataclass
class ScenarioResult:
    name: str
    results: list[StepResult] = field(default_factory=list)
    engine: Engine | None = None
    error: str = ""

    @property
    def passed(self) -> bool:
        return not self.error and all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "error": self.error,
            "steps": [{"command": r.step.command, "expect": r.step.expect, "got": r.outcome.label,
                       "passed": r.passed, "message": r.outcome.message} for r in self.results],
        }


def _access(agent, tunnel, resource, purpose, rho=0.0, seed=0):
    return f'access --as {agent} --tunnel "{tunnel}" --resource {resource} --purpose "{purpose}" ' \
           f'--rho {rho} --seed {seed}'


def fig2_scenario() -> ScenarioScript:
    return ScenarioScript("fig2", "A doctor reads a clinic record as the advisor role of their hospital.",
                          load_builtin_policy("fig2"), (
        Step("tunnels --as Ram --target Sharada", note="discovers the three-segment tunnel"),
        Step("access-points --as Ram --world Sharada --resource d"),
        Step(_access("Ram", FIG2_TUNNEL, "d", "Diagnostics")),
        Step("read-cached --as Ram --resource d"),
        Step(_access("Ram", FIG2_TUNNEL, "d", "Marketing"), "denied:purpose-not-permitted",
             "Marketing is not even registered"),
        Step(_access("Ram", "Advisor(Sharada):Owner(Ram)", "d", "Diagnostics"), "denied:tunnel-invalid",
             "Ram holds no Advisor role personally"),
    ))


def builtin_scenarios() -> list[ScenarioScript]:
    """The seven adversarial and case-study scripts."""
    scenario1 = ScenarioScript(
        "scenario1", "Only licensed worlds can bind the regulator's Hospital template.",
        load_builtin_policy("scenario1"), (
            Step("check-binding --world Fortis --template Hospital"),
            Step("policy 'implement Bogus Hospital by BogusAdmin;'", "denied:invalid-tunnel",
                 "no capacity tunnel at all"),
            Step("policy 'implement Bogus Hospital via \"Licensee(R):Owner(Bogus)\" ttl 2592000 by BogusAdmin;'",
                 "denied:invalid-tunnel", "the licence request was never approved"),
            Step("policy 'template OpenHospital in Bogus public by BogusAdmin { in Doctor; }'",
                 note="a publicly available lookalike"),
            Step("policy 'implement Bogus OpenHospital by BogusAdmin;'",
                 note="public templates can be bound by anyone"),
            Step("policy 'relate Mallory -> Bogus via WorksAt by Mallory;'", "denied:constraint-violated",
                 "the lookalike is not the regulator's Hospital"),
            Step("policy 'relate Ram -> Fortis via WorksAt by Ram;'"),
        ))

    scenario2 = ScenarioScript(
        "scenario2", "A consultation needs a Doctor role at a real Hospital world.",
        load_builtin_policy("scenario2"), (
            Step("policy 'relate Pat -> Ram via ConsultsWith by Pat;'"),
            Step("policy 'relate Pat -> Mallory via ConsultsWith by Pat;'", "denied:constraint-violated",
                 "Mallory is a Doctor only at a lookalike"),
            Step("policy 'implement FakeHospital Hospital by FakeAdmin;'", "denied:invalid-tunnel"),
            Step("policy 'template Hospital in FakeHospital by FakeAdmin { in Doctor; }'",
                 "denied:duplicate-template", "the name is taken by the regulator's template"),
            Step("policy 'relate Mallory -> Fortis via WorksAt by Mallory;'"),
            Step("policy 'relate Pat -> Mallory via ConsultsWith by Pat;'",
                 note="after joining a licensed hospital"),
        ))

    scenario3 = ScenarioScript(
        "scenario3", "A co-owner may read a cached copy only by holding every role of its capacity.",
        load_builtin_policy("fig2", "scenario3"), (
            Step(_access("Ram", FIG2_TUNNEL, "d", "Diagnostics")),
            Step("policy 'addowner Ram Sita by Ram;'"),
            Step("third-party-read --as Sita --world Ram --resource d", "denied:capacity-unsatisfied"),
            Step("policy 'relate Sita -> Fortis via WorksAt by Sita;'"),
            Step("policy 'approve Sita -> Fortis via WorksAt by FortisAdmin;'"),
            Step("third-party-read --as Sita --world Ram --resource d", "denied:capacity-unsatisfied",
                 "still not an advisor at Sharada"),
            Step("policy 'relate Sita -> Sharada via ConsultsAt by Sita;'"),
            Step("policy 'approve Sita -> Sharada via ConsultsAt by SharadaAdmin;'"),
            Step("third-party-read --as Sita --world Ram --resource d"),
            Step("read-cached --as Ram --resource d", note="the copy stayed in place"),
        ))

    ram = "Advisor(Sharada):Doctor(Fortis):Owner(Ram)"
    priya = "Advisor(Sharada):Doctor(Apollo):Owner(Priya)"
    scenario4 = ScenarioScript(
        "scenario4", "Delisted hospitals are caught by low access risk and by template TTL.",
        load_builtin_policy("scenario4"), (
            Step(_access("Ram", ram, "d", "Diagnostics")),
            Step("policy 'revoke Fortis -> R via LicensedBy by RAdmin;'"),
            Step("policy 'revoke Apollo -> R via LicensedBy by RAdmin;'"),
            Step(_access("Ram", ram, "d", "Diagnostics", rho=1.0), note="no integrity check at rho 1"),
            Step(_access("Priya", priya, "d", "Diagnostics", rho=0.0), "denied:tunnel-invalid",
                 "the level-1 check finds the lost licence"),
            Step(_access("Priya", priya, "d", "Diagnostics", rho=1.0), "denied:tunnel-invalid",
                 "Apollo's binding is now expired"),
            Step("check-binding --world Apollo --template Hospital", "denied:expired-template"),
            Step(f"advance {31 * DAY}"),
            Step(_access("Ram", ram, "d", "Diagnostics", rho=1.0), "denied:tunnel-invalid",
                 "the template TTL has elapsed"),
            Step("read-cached --as Ram --resource d", "denied:ttl-expired"),
            Step("policy 'relate Newcomer -> Fortis via WorksAt by Newcomer;'", "denied:expired-template"),
            Step("policy 'implement Fortis Hospital via \"Licensee(R):Owner(Fortis)\" ttl 2592000 "
                 "by FortisAdmin;'", "denied:invalid-tunnel"),
        ))

    cet_tunnel = "Score Verifier(CET):Owner(XYZ)"
    cet = ScenarioScript(
        "cet", "A university verifies an applicant's entrance-test score.",
        load_builtin_policy("cet"), (
            Step(_access("XYZ", cet_tunnel, "score-A", "Admission"), "denied:tunnel-invalid"),
            Step("policy 'relate XYZ -> CET via VerifyScores by XYZ;'", "denied:constraint-violated",
                 "nobody has applied to XYZ yet"),
            Step("policy 'relate A -> XYZ via ApplyTo by A;'", note="A becomes a prospective student"),
            Step("policy 'relate XYZ -> CET via VerifyScores by XYZ;'"),
            Step(_access("XYZ", cet_tunnel, "score-A", "Admission")),
            Step("policy 'revoke A -> XYZ via ApplyTo by A;'", note="A withdraws the application"),
            Step("read-cached --as XYZ --resource score-A", "denied:capacity-revoked"),
        ))

    landlord = "Identity Verifier(ABC):Prospective Landlord(A):Owner(HID)"
    uid = ScenarioScript(
        "uid", "A house verifies a tenant's identity through the tenant's bank.",
        load_builtin_policy("uid"), (
            Step(_access("ABC", "Verified Bank(UID):Owner(ABC)", "uid-A", "KYC"),
                 note="the pre-approved bank reads the registry"),
            Step("policy 'relate A -> ABC via OpenAccount by A;'"),
            Step(_access("HID", "Verified Bank(UID):Owner(HID)", "uid-A", "KYC"), "denied:tunnel-invalid",
                 "the house has no direct access to the registry"),
            Step("policy 'relate HID -> A via ScreenTenant by HID;'"),
            Step(_access("HID", landlord, "acct-A", "Tenant Verification"), "denied:tunnel-invalid",
                 "A has not asked the bank to share yet"),
            Step("policy 'relate A -> ABC via ShareAccount by A;'"),
            Step(_access("HID", landlord, "acct-A", "Tenant Verification")),
        ))

    datatrust = ScenarioScript(
        "datatrust", "A senior analyst reads a shared dataset as a researcher.",
        load_builtin_policy("datatrust"), (
            Step("access-points --as Ajay --world EnergyCompany --resource d"),
            Step(_access("Ajay", DATATRUST_TUNNEL, "d", "Research")),
            Step(_access("Ajay", DATATRUST_TUNNEL, "d", "Marketing"), "denied:purpose-not-permitted"),
            Step("read-cached --as Ajay --resource d"),
        ))

    return [scenario1, scenario2, scenario3, scenario4, cet, uid, datatrust]


def all_scenarios() -> list[ScenarioScript]:
    return [fig2_scenario()] + builtin_scenarios()


def find_scenario(name: str) -> ScenarioScript:
    for script in all_scenarios():
        if script.name == name:
            return script
    raise KeyError(name)


def run_scenario(script: ScenarioScript, audit: AuditLog | None = None) -> ScenarioResult:
    """Run a script on a fresh frame with a manual clock."""
    clock = ManualClock(script.start)
    engine = Engine(audit=audit if audit is not None else AuditLog(), clock=clock)
    result = ScenarioResult(script.name, engine=engine)
    try:
        apply_policy(script.policy, script.actor, engine)
    except Exception as exc:  # reported, not raised: the runner is a test harness
        result.error = f"policy failed: {type(exc).__name__}: {exc}"
        return result
    for step in script.steps:
        result.results.append(StepResult(step, run_step(engine, clock, step.command)))
    return result

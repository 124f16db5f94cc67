import json
import subprocess
import sys

import pytest

from multiverse.cli import main
from multiverse.scenarios import START, policy_text

from conftest import FIG2_TUNNEL

NOW = str(START)


@pytest.fixture
def frame(tmp_path):
    path = tmp_path / "frame.json"
    assert main(["init", str(path)]) == 0
    (tmp_path / "fig2.mvp").write_text(policy_text("fig2"))
    assert main(["--frame", str(path), "--now", NOW, "apply", str(tmp_path / "fig2.mvp"), "--as", "Registrar"]) == 0
    return path


def run(frame, *args, as_json=True):
    argv = ["--frame", str(frame), "--now", NOW] + (["--json"] if as_json else []) + list(args)
    return main(argv)


def access(purpose="Diagnostics", *extra):
    return ["access", "--as", "Ram", "--tunnel", FIG2_TUNNEL, "--resource", "d", "--purpose", purpose, *extra]


def test_init_refuses_overwrite(frame, capsys):
    assert main(["init", str(frame)]) == 2
    assert main(["init", str(frame), "--force"]) == 0


def test_access_points_text(frame, capsys):
    capsys.readouterr()
    assert run(frame, "access-points", "--as", "Ram", "--world", "Sharada", "--resource", "d", as_json=False) == 0
    assert capsys.readouterr().out.strip() == f"(read(d), {FIG2_TUNNEL}, Diagnostics)"


def test_exit_codes(frame, capsys):
    assert run(frame, *access()) == 0
    assert run(frame, *access("Marketing")) == 1
    assert run(frame, "access", "--as", "Ram", "--tunnel", "Doctor(Fortis", "--resource", "d",
               "--purpose", "Diagnostics") == 2
    assert run(frame, "access", "--as", "Ram", "--tunnel", "Owner(Ram):Doctor(X)", "--resource", "d",
               "--purpose", "Diagnostics") == 1
    assert run(frame, "frobnicate") == 2
    assert run(frame, "access", "--as", "Ram") == 2
    assert main(["--frame", str(frame.parent / "none.json"), "tunnels", "--as", "Ram", "--target", "X"]) == 2
    err = capsys.readouterr().err
    assert "multiverse: purpose-not-permitted:" in err and "parse-error" in err and "invalid-tunnel" in err


def test_apply_errors(frame, tmp_path, capsys):
    (tmp_path / "bad.mvp").write_text("purpose A;\nworld W owner;\n")
    assert run(frame, "apply", str(tmp_path / "bad.mvp"), "--as", "Registrar") == 2
    (tmp_path / "unknown.mvp").write_text("implement Nowhere Clinic by Registrar;\n")
    assert run(frame, "apply", str(tmp_path / "unknown.mvp"), "--as", "Registrar") == 2
    err = capsys.readouterr().err
    assert "line 2, column 14" in err and "resolve-error" in err


def test_json_is_parseable(frame, capsys):
    capsys.readouterr()
    run(frame, *access())
    run(frame, *access("Marketing"))
    run(frame, "tunnels", "--as", "Ram", "--target", "Sharada")
    docs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [d["ok"] for d in docs] == [True, False, True]
    assert docs[0]["data"]["report"]["valid"] is True
    assert FIG2_TUNNEL in docs[2]["data"]["tunnels"]


def test_deterministic_reports(frame, capsys):
    saved = frame.read_bytes()
    outputs = []
    for _ in range(2):
        frame.write_bytes(saved)
        capsys.readouterr()
        run(frame, *access("Diagnostics", "--rho", "0.5", "--seed", "7"))
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]


def test_ttl_via_clock(frame, capsys):
    assert run(frame, *access()) == 0
    assert run(frame, "read-cached", "--as", "Ram", "--resource", "d") == 0
    later = str(START + 86_400)
    assert main(["--frame", str(frame), "--now", later, "read-cached", "--as", "Ram", "--resource", "d"]) == 1
    assert "ttl-expired" in capsys.readouterr().err


def test_audit_commands(frame, capsys):
    run(frame, *access())
    capsys.readouterr()
    assert main(["--frame", str(frame), "--json", "audit", "verify"]) == 0
    verdict = json.loads(capsys.readouterr().out)["data"]
    assert verdict["ok"] and verdict["records"] > 0
    assert main(["--frame", str(frame), "audit", "tail", "-n", "1"]) == 0
    assert "access-remote ok" in capsys.readouterr().out
    log = frame.parent / "audit.log.ndjson"
    blob = bytearray(log.read_bytes())
    blob[10] ^= 1
    log.write_bytes(bytes(blob))
    assert main(["--frame", str(frame), "audit", "verify"]) == 1


def test_inspect_and_validate(frame, capsys):
    assert run(frame, "inspect", "world", "Sharada") == 0
    assert run(frame, "inspect", "template", "Clinic") == 0
    assert run(frame, "validate", "--tunnel", FIG2_TUNNEL, "--as", "Ram") == 0
    assert run(frame, "validate", "--tunnel", "Advisor(Sharada):Owner(Ram)", "--as", "Ram") == 1


def test_scenario_commands(capsys):
    assert main(["scenario", "list"]) == 0
    assert "datatrust" in capsys.readouterr().out
    assert main(["scenario", "run", "all"]) == 0
    assert main(["scenario", "run", "nope"]) == 2


def test_module_entry_point(tmp_path):
    done = subprocess.run([sys.executable, "-m", "multiverse", "scenario", "list"], capture_output=True, text=True)
    assert done.returncode == 0 and "fig2" in done.stdout

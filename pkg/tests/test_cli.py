import json
import subprocess
import sys

import pytest

from ermakit.cli import main


@pytest.fixture(autouse=True)
def _in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ERMAKOV_SEED", raising=False)


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_simulate_ep_writes_files(tmp_path):
    assert main(["simulate", "--system", "ep", "--ic", "1,0", "--tend", "2"]) == 0
    head = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert head[0] == "t,rho,rho_dot"
    assert (tmp_path / "drift.csv").exists()


def test_outputs_are_byte_stable(tmp_path):
    args = ["simulate", "--system", "2d", "--potential", "2 + sin(theta)", "--ic", "1,0.5,0.2,0.3", "--tend", "3"]
    assert main(args + ["--traj", "a.csv", "--drift", "da.csv"]) == 0
    assert main(args + ["--traj", "b.csv", "--drift", "db.csv"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "da.csv").read_bytes() == (tmp_path / "db.csv").read_bytes()


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = _write(tmp_path / "cfg.json", {"system": "ep", "ic": [1.0, 0.0], "tend": 1.0, "traj": "file.csv"})
    assert main(["simulate", "--config", cfg]) == 0
    assert (tmp_path / "file.csv").exists()
    assert main(["simulate", "--config", cfg, "--traj", "flag.csv"]) == 0
    assert (tmp_path / "flag.csv").exists()


def test_catalog_entry_simulation(tmp_path):
    assert main(["simulate", "--system", "2d", "--potential", "2d-VA", "--tend", "2"]) == 0


def test_guard_violation_exits_one(tmp_path, capsys):
    code = main(["simulate", "--system", "rayreid", "--ic", "1,1,-1,0"])
    assert code == 1
    assert "guard" in capsys.readouterr().out
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert len(rows) > 2


@pytest.mark.parametrize("argv", [
    ["simulate", "--system", "2d", "--potential", "2 + * sin(theta)"],
    ["simulate", "--system", "warp"],
    ["simulate", "--method", "rk2"],
    ["audit", "catalog", "no-such-entry"],
    ["audit", "everything"],
    ["pinney", "--c", "1,x,0"],
])
def test_configuration_errors_exit_two(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_config_key_exits_two(tmp_path):
    cfg = _write(tmp_path / "cfg.json", {"sytem": "ep"})
    assert main(["simulate", "--config", cfg]) == 2


def test_syntax_error_message_has_caret(capsys):
    main(["simulate", "--system", "2d", "--potential", "2 + * sin(theta)"])
    assert "^" in capsys.readouterr().err


def test_pinney_constraint(tmp_path):
    assert main(["pinney", "--omega", "0", "--rho1", "1,0", "--rho2", "0,1", "--c", "1,1,0", "--tend", "5"]) == 0
    assert (tmp_path / "pinney.csv").exists()
    assert main(["pinney", "--omega", "0", "--c", "1,1,1"]) == 1


def test_audit_scopes(tmp_path):
    assert main(["audit", "identity", "vf-cartesian", "--report", "r.json"]) == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["refuted_claims"] == ["vf-cartesian"]
    assert main(["audit", "catalog", "2d-VC"]) == 0
    assert main(["audit", "check", "cons-lewis"]) == 0


def test_invariants_and_catalog_listing(tmp_path, capsys):
    assert main(["invariants", "--system", "ep"]) == 0
    assert "I1" in capsys.readouterr().out
    assert main(["catalog", "--dim", "2", "--json", "cat.json"]) == 0
    assert [e["id"] for e in json.loads((tmp_path / "cat.json").read_text())][0] == "2d-VA"


def test_console_entry_point_audit_all():
    proc = subprocess.run([sys.executable, "-m", "ermakit.cli", "audit", "all"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout[-2000:] + proc.stderr[-2000:]
    assert "6 refuted claims, 0 unexpected" in proc.stdout

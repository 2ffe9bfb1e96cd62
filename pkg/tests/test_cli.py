import json
import subprocess
import sys

import pytest

from qudit_qlm import cli
from qudit_qlm.errors import AllTrajectoriesDiscarded
from qudit_qlm.records import ObservableRecord


def run_cli(*argv):
    return subprocess.run([sys.executable, "-m", "qudit_qlm.cli", *argv], capture_output=True, text=True)


def test_enumerate_basis():
    out = run_cli("enumerate-basis", "--L", "7")
    assert out.returncode == 0 and out.stdout.strip() == "33"


def test_enumerate_list(capsys):
    assert cli.main(["enumerate-basis", "--L", "3", "--list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1] == "3" and len(lines) == 4


def test_gatecount_csv(capsys, tmp_path):
    assert cli.main(["gatecount", "--L", "7..12", "--both"]) == 0
    rows = [l.split(",") for l in capsys.readouterr().out.strip().splitlines()]
    assert rows[0] == ["L", "formulation", "MS", "CX", "one_body", "ratio"]
    l7 = [r for r in rows[1:] if r[0] == "7"]
    assert l7[0][1:5] == ["integrated_out", "0", "36", "40"] and l7[1][1:5] == ["matterful", "144", "0", "384"]
    assert float(l7[0][5]) == 4.0
    assert cli.main(["gatecount", "--L", "5,6", "-o", str(tmp_path / "g.csv")]) == 0
    assert len((tmp_path / "g.csv").read_text().splitlines()) == 3


def test_simulate_is_byte_identical(tmp_path):
    outs = []
    d = tmp_path / "run"
    for _ in range(2):
        r = run_cli("simulate", "--preset", "meson_meson_g3", "--engine", "noiseless", "--N", "2", "--out", str(d))
        assert r.returncode == 0, r.stderr
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    names = sorted(outs[0])
    assert any(n.endswith("_charge.csv") for n in names) and any(n.endswith(".ndjson") for n in names)
    charge = next(v for n, v in outs[0].items() if n.endswith("_charge.csv")).decode()
    header = json.loads(charge.splitlines()[0][2:])
    assert header["schema_version"] == 1 and header["config"]["preset"] == "meson_meson_g3"


def test_output_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["exact", "--preset", "noise_l7_g3", "--N", "4"]) == 0
    rec = ObservableRecord.from_ndjson(next(tmp_path.glob("*.ndjson")).read_text())
    assert rec.provenance == "exact" and rec.charges.shape == (5, 7)


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("preset: meson_meson_g3\nbogus: 1\n")
    assert cli.main(["simulate", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["exit_code"] == 2 and err["error"] == "ConfigError"
    assert cli.main(["simulate", "--preset", "meson_meson_g3", "--N", "-1"]) == 2
    assert cli.main(["simulate"]) == 2


def test_budget_exit_code(capsys):
    assert cli.main(["simulate", "--preset", "meson_meson_g3", "--formulation", "matterful"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "BudgetError"


def test_all_discarded_exit_code(monkeypatch, capsys):
    def boom(*a, **k):
        raise AllTrajectoriesDiscarded(3, 10)
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["simulate", "--preset", "noise_l7_g3", "--engine", "noisy"]) == 4
    err = json.loads(capsys.readouterr().err)
    assert err["step"] == 3 and err["n_trajectories"] == 10


def test_analyze_and_snapshot(tmp_path, capsys):
    for kind in ("meson_antimeson", "free_left", "free_right", "vacuum"):
        assert cli.main(["exact", "--preset", "noise_l7_g3", "--kind", kind, "--out", str(tmp_path / kind)]) == 0
    rec = {k: str(next((tmp_path / k).glob("*.ndjson"))) for k in
           ("meson_antimeson", "free_left", "free_right", "vacuum")}
    out = tmp_path / "delta.csv"
    assert cli.main(["analyze", rec["meson_antimeson"], "--vacuum", rec["vacuum"], "--left", rec["free_left"],
                     "--right", rec["free_right"], "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert json.loads(lines[0][2:])["subtracted"] == "free" and lines[1].startswith("t,site0")
    # swapped inputs are rejected by the kind check
    assert cli.main(["analyze", rec["meson_antimeson"], "--vacuum", rec["free_left"], "--left", rec["free_left"],
                     "--right", rec["free_right"]]) == 2
    capsys.readouterr()
    assert cli.main(["snapshot", rec["vacuum"], "--times", "0,1.25"]) == 0
    snap = capsys.readouterr().out.strip().splitlines()
    assert snap[0] == "t,link,flux" and len(snap) == 1 + 2 * 6


def test_analyze_rejects_schema_version(tmp_path, capsys):
    assert cli.main(["exact", "--preset", "noise_l7_g3", "--N", "2", "--out", str(tmp_path)]) == 0
    path = next(tmp_path.glob("*.ndjson"))
    d = json.loads(path.read_text())
    d["schema_version"] = 99
    old = tmp_path / "old.ndjson"
    old.write_text(json.dumps(d))
    assert cli.main(["analyze", str(path), "--vacuum", str(old)]) == 2


def test_compile_roundtrip(tmp_path):
    from qudit_qlm.compiler import Circuit
    out = tmp_path / "c.txt"
    assert cli.main(["compile", "--L", "4", "--formulation", "matterful", "--N", "2", "-o", str(out)]) == 0
    circ = Circuit.loads(out.read_text())
    assert circ.n_steps == 2 and sum(g.kind == "MS" for g in circ.gates) == 2 * 72


def test_shipped_configs_validate():
    for name in ("meson_meson_g3", "meson_antimeson_g3", "meson_antimeson_g05", "noise_l7_matterful_kraus"):
        cfg = cli.load_config(str(cli.preset_config_path(name)))
        assert "preset" in cfg

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from fockcollapse import cli
from fockcollapse.collapse import write_gamma_table

SCENARIOS = Path(cli.__file__).parent / "scenarios"


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr() if capsys else None
    return code, out


def test_run_writes_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    out = tmp_path / "o"
    assert run(["run", SCENARIOS / "pair_production.yaml", "-o", out, "--trials", "5000"])[0] == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["probability_sum"] - 1) < 1e-9
    assert summary["trials"] == 5000 and summary["cross_sector_post_states"] == 0
    rows = list(csv.reader((out / "results.csv").open()))
    assert rows[0] == ["run_id", "sector", "seed_path"] and len(rows) == 5001
    man = json.loads((out / "manifest.json").read_text())
    assert man["root_seed"] == 42 and man["started_utc"].startswith("2023-11-14")
    assert {o["file"] for o in man["outputs"]} == {"results.csv", "summary.json"}
    assert not any(p.name.startswith(".staging") for p in out.iterdir())


def test_run_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["run", SCENARIOS / "epr.yaml", "-o", d, "--trials", "3000"])[0] == 0
    for name in ("results.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    run(["run", SCENARIOS / "epr.yaml", "-o", c, "--trials", "3000", "--seed", "99"])
    assert (a / "results.csv").read_bytes() != (c / "results.csv").read_bytes()


BAD = """version: 1
model:
  bundled: decay
process:
  kind: decay
  colour: blue
"""


def test_malformed_config_line_number(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(BAD)
    out = tmp_path / "o"
    code, io = run(["run", cfg, "-o", out], capsys)
    assert code == 2
    assert ":6:" in io.err and "colour" in io.err
    assert not out.exists()


@pytest.mark.parametrize("text", ["version: 1\nprocess: {kind: teleport}\n", "version: [1\n", "",
                                  "version: 1\nprocess: {kind: decay, params: {tau: -1}}\n"])
def test_invalid_configs_exit_2(tmp_path, text):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    assert run(["run", cfg, "-o", tmp_path / "o"])[0] == 2


def test_missing_config_exit_2(tmp_path):
    assert run(["run", tmp_path / "nope.yaml"])[0] == 2


def test_usage_error_exit_2():
    assert run(["frobnicate"])[0] == 2
    assert run([])[0] == 2


def test_capacity_error_exit_3(tmp_path, capsys):
    cfg = tmp_path / "big.yaml"
    cfg.write_text("""version: 1
registry:
  n_max: 4
  dim_cap: 10
  species: [{id: a}, {id: b}, {id: c}]
model:
  interaction_terms: [{coupling: 0.1, ops: "a^ b"}]
process: {kind: unitarity}
""")
    code, io = run(["run", cfg, "-o", tmp_path / "o"], capsys)
    assert code == 3 and "CapacityError" in io.err


def test_check_suite(tmp_path, capsys):
    report = tmp_path / "r.json"
    code, io = run(["check", "algebra", "--json", report], capsys)
    assert code == 0 and "PASS algebra.commutator_defect" in io.out
    data = json.loads(report.read_text())
    assert data["passed"] and len(data["results"]) == 3
    assert run(["check", "nonsense"])[0] == 2


def test_check_failure_exit_4(monkeypatch):
    from fockcollapse import checks
    monkeypatch.setattr(checks, "run_suite", lambda name: [checks._lt("x", "y", 1.0, 0.5)])
    assert run(["check", "algebra"])[0] == 4


def test_gamma_command(tmp_path, capsys):
    p = tmp_path / "g.txt"
    write_gamma_table(p, np.eye(3), ["{a}", "{b}", "{c}"])
    code, io = run(["gamma", p], capsys)
    res = json.loads(io.out)
    assert code == 0 and res["verdict"] == "true" and res["labels"] == ["{a}", "{b}", "{c}"]
    write_gamma_table(p, [[0, .5, .5], [.5, 0, .5], [.5, .5, 0]])
    code, io = run(["gamma", p], capsys)
    assert code == 0 and json.loads(io.out)["verdict"] == "false"
    write_gamma_table(p, [[0.5, 0.6], [0.5, 0.5]])
    assert run(["gamma", p])[0] == 2


def test_sweep_errors(tmp_path):
    cfg = SCENARIOS / "dyson_single.yaml"
    assert run(["sweep", cfg, "--param", "model.params.g", "--values"])[0] == 2
    assert run(["sweep", cfg, "--param", "model.nothing.g", "--values", "1"])[0] == 2
    assert run(["sweep", cfg, "--param", "process.params.order", "--values", "two"])[0] == 2
    assert not (tmp_path / "o").exists()


def test_dyson_sweep_slope(tmp_path):
    out = tmp_path / "sw"
    gs = ["0.02", "0.04", "0.08", "0.16"]
    code, _ = run(["sweep", SCENARIOS / "dyson_single.yaml", "--param", "model.params.g",
                   "--values", *gs, "-o", out])
    assert code == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [r["value"] for r in rows] == gs
    x = np.log([float(r["value"]) for r in rows])
    y = np.log([float(r["defect"]) for r in rows])
    assert abs(np.polyfit(x, y, 1)[0] - 3) < 0.3
    assert (out / "value_003" / "summary.json").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["sweep_parameter"] == "model.params.g"


def test_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = tmp_path / "c.yaml"
    cfg.write_text((SCENARIOS / "no_signaling.yaml").read_text())
    monkeypatch.setenv("FOCKCOLLAPSE_OUTPUT_DIR", str(tmp_path / "env"))
    args = ["run", cfg, "--trials", "1000"]
    assert run(args)[0] == 0 and (tmp_path / "env" / "summary.json").exists()
    assert run(args + ["-o", tmp_path / "flag"])[0] == 0 and (tmp_path / "flag" / "summary.json").exists()
    cfg.write_text(cfg.read_text() + f"  output_dir: {tmp_path / 'conf'}\n")
    assert run(args)[0] == 0 and (tmp_path / "conf" / "summary.json").exists()
    monkeypatch.delenv("FOCKCOLLAPSE_OUTPUT_DIR")
    cfg.write_text((SCENARIOS / "no_signaling.yaml").read_text())
    assert run(args)[0] == 0 and (tmp_path / "fockcollapse-out" / "summary.json").exists()

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from uneqot import ConfigurationError
from uneqot.cli import main
from uneqot.config import load_config, parse_config
from uneqot.io import atomic_write, csv_text, dumps, format_float

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


# -- serialisation -----------------------------------------------------------------

def test_float_round_trip():
    for x in (0.1, 1.0 / 3.0, math.pi, 2.0**-1074, 1e300):
        assert float(format_float(x)) == x


def test_dumps_non_finite_and_order():
    text = dumps({"b": float("nan"), "a": [1.5, float("inf")], "c": np.float64(0.25), "d": True})
    data = json.loads(text)
    assert list(data) == ["b", "a", "c", "d"]
    assert data["b"] is None and data["a"] == [1.5, None] and data["c"] == 0.25 and data["d"] is True


def test_csv_crlf():
    text = csv_text(["y", "k"], [(0.1, -0.2)])
    assert text == "y,k\r\n0.10000000000000001,-0.20000000000000001\r\n"


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "x.json"
    atomic_write(target, "{}\n")
    atomic_write(target, "[]\n")
    assert target.read_text() == "[]\n"
    assert sorted(p.name for p in target.parent.iterdir()) == ["x.json"]


# -- configuration -----------------------------------------------------------------

@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    assert load_config(path).command


def test_unknown_field_is_named():
    with pytest.raises(ConfigurationError, match="problem.cost.famly"):
        parse_config({"command": "solve-nested", "problem": {"cost": {"famly": "x"}}})


def test_bad_values_rejected():
    for data in ({"command": "nope"}, {"command": "solve-nested", "seed": -1},
                 {"command": "solve-nested", "grid": 4}, {"command": "solve-nested", "tol": 0.0},
                 {"command": "solve-congestion", "problem": {"f": "cubic"}},
                 {"command": "reproduce-paper", "problem": {"criteria": [10]}}, {"grid": 8}):
        with pytest.raises(ConfigurationError):
            parse_config(data)


# -- command line ------------------------------------------------------------------

def test_malformed_yaml_exits_1_without_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["solve-nested", "--config", _write(tmp_path, "command: [unclosed\n"), "--out", str(out)])
    assert code == 1
    assert not out.exists()
    assert "malformed YAML" in capsys.readouterr().err


def test_unknown_field_exits_1_without_outputs(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path, "command: solve-nested\nproblem:\n  bogus: 1\n")
    assert main(["solve-nested", "--config", cfg, "--out", str(out)]) == 1
    assert not out.exists()


def test_command_mismatch_exits_1(tmp_path):
    cfg = _write(tmp_path, "command: hedonic\n")
    assert main(["solve-nested", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_pseudo_index_nested_with_zero_dmin(tmp_path):
    out = tmp_path / "pi"
    code = main(["check-nestedness", "--config", str(CONFIGS / "check_nestedness_pseudo_index.yaml"),
                 "--out", str(out)])
    assert code == 0
    data = json.loads((out / "nestedness.json").read_text())
    assert data["schema_version"] == "1.0"
    assert data["nested"] is True
    assert data["dmin_max_sampled"] == pytest.approx(0.0, abs=1e-14)
    assert all(abs(p["dmin"]) <= 1e-14 for p in data["dmin_pairs"])


def test_non_nested_exits_2_with_outputs(tmp_path):
    out = tmp_path / "nn"
    code = main(["check-nestedness", "--out", str(out), "--grid", "128",
                 "--config", _write(tmp_path, "command: check-nestedness\nproblem:\n  target:\n"
                                              "    kind: values\n    values: [1.0, 5.0, 25.0, 125.0]\n")])
    assert code == 2
    data = json.loads((out / "nestedness.json").read_text())
    assert data["nested"] is False and len(data["witness"]) == 2


def test_reruns_are_byte_identical(tmp_path):
    out = tmp_path / "bx"
    args = ["best-reply", "--config", str(CONFIGS / "best_reply_quadratic.yaml"), "--out", str(out),
            "--n-particles", "200"]
    assert main(args) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(args) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second and set(first) == {"particles.csv", "iteration_log.json"}
    log = json.loads(first["iteration_log.json"])
    assert log["converged"] and log["means"][-1][0] == pytest.approx(0.25, abs=1e-6)


def test_hedonic_command(tmp_path):
    out = tmp_path / "h"
    assert main(["hedonic", "--grid", "256", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["support"] == pytest.approx([0.0, 2.0], abs=1e-9)
    rows = (out / "hedonic.csv").read_bytes().decode().split("\r\n")
    assert rows[0] == "y,M,k1,k2,nu"


def test_congestion_command(tmp_path):
    out = tmp_path / "c"
    assert main(["solve-congestion", "--ybar", "0.5", "--grid", "128", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["nested"] is True


def test_thread_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("UNEQ_OT_THREADS", "zero")
    assert main(["solve-nested", "--grid", "64", "--out", str(tmp_path / "t")]) == 1
    monkeypatch.setenv("UNEQ_OT_THREADS", "1")
    assert main(["solve-nested", "--grid", "64", "--out", str(tmp_path / "t")]) == 0


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "uneqot", "solve-nested", "--grid", "64", "--out",
                          str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "m" / "kprofile.csv").exists()


def test_reproduce_subset(tmp_path):
    out = tmp_path / "r"
    assert main(["reproduce-paper", "--criteria", "1", "3", "--out", str(out)]) == 0
    report = (out / "report.md").read_text()
    assert "| 1 |" in report and "| 3 |" in report and "FAIL" not in report
    rows = json.loads((out / "acceptance.json").read_text())["checks"]
    assert {r["criterion"] for r in rows} == {1, 3} and all(r["passed"] for r in rows)

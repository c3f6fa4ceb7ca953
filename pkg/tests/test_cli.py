import json
import subprocess
import sys
from pathlib import Path

import pytest

from helmpoisson.cli import main
from helmpoisson.experiments import ConfigError, ExperimentConfig


def _run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_deterministic_reruns_identical(tmp_path, capsys):
    args = ["run", "iterate", "--shape", "1", "--h", "0.05", "--k", "1.0", "--N", "6", "--deterministic"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(args + ["--out", str(a)], capsys)[0] == 0
    assert _run(args + ["--out", str(b)], capsys)[0] == 0
    ta, tb = _tree(a), _tree(b)
    assert ta and ta == tb
    assert any(name.endswith(".svg") for name in ta)
    assert all(b"\r\n" not in body for body in ta.values())


def test_iterate_k0_single_term(tmp_path, capsys):
    code, out = _run(["run", "iterate", "--shape", "1", "--h", "0.02", "--k", "0", "--N", "1",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    summary = json.loads(out.out)["summary"]
    assert summary["error"] <= 1e-10


def test_error_report(tmp_path, capsys):
    code, out = _run(["run", "iterate", "--shape", "1", "--k", "-1", "--out", str(tmp_path)], capsys)
    assert code == 2
    err = json.loads(out.err)
    assert err["status"] == "error" and err["error"] and "." in err["operation"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"shape": "1", "bogus": 1}))
    code, out = _run(["run", "thresholds", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 2 and json.loads(out.err)["error"] == "ConfigError"


def test_config_hash_ignores_output_dir():
    a = ExperimentConfig(experiment="thresholds", out="x")
    b = ExperimentConfig(experiment="thresholds", out="y")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(experiment="thresholds", h=0.02).config_hash()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(json.dumps({"experiment": "nope"})).validate()


def test_table1_shape1(tmp_path, capsys):
    code, out = _run(["run", "table1", "--shapes", "1", "--h", "0.02", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = [r for r in (tmp_path / "table1.csv").read_text().splitlines() if r and not r.startswith("#")]
    header, body = rows[0].split(","), [dict(zip(rows[0].split(","), r.split(","))) for r in rows[1:]]
    assert "verdict" in header
    last = [r for r in body if float(r["tested_k"]) == 2.9][0]
    assert last["verdict"] == "diverges"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "helmpoisson", "run", "appendixB", "--out", str(tmp_path)],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["status"] == "ok"

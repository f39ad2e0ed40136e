import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from conespec.cli import VERSION_LINE, config_hash, load_config, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(autouse=True)
def cache(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv("CONESPEC_CACHE_DIR", str(d))
    return d


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return header, rows[0], rows[1:]


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=1) + "\n")
    return p


CONE = {
    "n": 3,
    "cross_section": {"kind": "round_sphere", "m": 2, "radius": 1.0},
    "profile": {"kind": "exact_cone", "L": 1.0},
}


def test_spectrum_first_row(tmp_path):
    out = tmp_path / "out"
    assert main(["spectrum", str(CONFIGS / "flat_cone.json"), "--out", str(out)]) == 0
    header, cols, rows = read_csv(out / "spectrum.csv")
    assert cols == ["lambda", "mode", "radial_index", "multiplicity"]
    lam, mode, k, mult = rows[0]
    assert float(lam) == pytest.approx(4 * math.pi**2, rel=1e-8)
    assert (mode, k, mult) == ("0", "1", "1")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok"
    assert summary["command"] == "spectrum"


def test_headers_embed_hash_and_version(tmp_path):
    out = tmp_path / "out"
    assert main(["modes", str(write_cfg(tmp_path, {"manifold": CONE})), "--out", str(out)]) == 0
    header, _, _ = read_csv(out / "modes.csv")
    run = load_config("modes", str(tmp_path / "cfg.json"))
    assert header[0] == f"# {VERSION_LINE}"
    assert header[1] == f"# config_hash {run.config_hash}"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config_hash"] == run.config_hash
    assert summary["tool_version"] == VERSION_LINE


def test_cache_hit_is_byte_identical(tmp_path, cache):
    cfg = write_cfg(tmp_path, {"manifold": CONE, "lambda_max": 100.0, "grid": {"M": 256}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["spectrum", str(cfg), "--out", str(a)]) == 0
    entries = list(cache.iterdir())
    assert len(entries) == 1
    assert main(["spectrum", str(cfg), "--out", str(b)]) == 0
    for name in ("spectrum.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_output_dir_not_in_hash(tmp_path):
    c1 = write_cfg(tmp_path, {"manifold": CONE, "output": {"dir": "x"}}, "c1.json")
    c2 = write_cfg(tmp_path, {"manifold": CONE, "output": {"dir": "y"}}, "c2.json")
    assert load_config("modes", str(c1)).config_hash == load_config("modes", str(c2)).config_hash
    c3 = write_cfg(tmp_path, {"manifold": CONE, "lambda_max": 99.0}, "c3.json")
    assert load_config("modes", str(c3)).config_hash != load_config("modes", str(c1)).config_hash


def test_config_hash_depends_on_overrides():
    base = load_config("spectrum", str(CONFIGS / "flat_cone.json"))
    over = load_config("spectrum", str(CONFIGS / "flat_cone.json"), ["grid.M=1024"])
    assert base.config_hash != over.config_hash
    assert over.config["grid"]["M"] == 1024
    assert config_hash(base.config) == base.config_hash


def test_schema_error_is_line_anchored(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n "manifold": {"n": 3,\n  "cross_section": {"kind": "round_sphere", "m": 2},\n  "profile": {"kind": "exact_cone", "L": 1}},\n "grid": {"M": 4}\n}\n')
    assert main(["spectrum", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{p}:5:" in err and "grid.M" in err


def test_json_syntax_error(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n "manifold": {\n  "n": 3,\n }\n}\n')
    assert main(["spectrum", str(p)]) == 2
    assert f"{p}:4:" in capsys.readouterr().err


def test_unknown_profile_kind(tmp_path):
    doc = {"manifold": {**CONE, "profile": {"kind": "horn", "L": 1.0}}}
    assert main(["spectrum", str(write_cfg(tmp_path, doc))]) == 2


def test_command_mismatch(tmp_path):
    cfg = write_cfg(tmp_path, {"command": "spectrum", "manifold": CONE})
    assert main(["modes", str(cfg)]) == 2


def test_missing_config():
    assert main(["spectrum"]) == 2


def test_override_must_be_scalar(tmp_path):
    cfg = write_cfg(tmp_path, {"manifold": CONE})
    assert main(["modes", str(cfg), "--set", "grid={}"]) == 2


def test_hardy_sqrt2(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["hardy", str(CONFIGS / "hardy_sqrt2.json"), "--out", str(out)]) == 0
    assert "margin 0, not admissible" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok"


def test_hardy_report_replayed_from_cache(tmp_path, capsys):
    cfg = str(CONFIGS / "hardy_sqrt2.json")
    assert main(["hardy", cfg, "--out", str(tmp_path / "a")]) == 0
    capsys.readouterr()
    assert main(["hardy", cfg, "--out", str(tmp_path / "b")]) == 0
    assert "margin 0, not admissible" in capsys.readouterr().out


def test_flow_breakdown_exit_3(tmp_path):
    out = tmp_path / "out"
    code = main(["flow", str(CONFIGS / "spindle_flow.json"), "--set", "flow.nodes=101", "--out", str(out)])
    assert code == 3
    diag = json.loads((out / "diagnostic.json").read_text())
    assert diag["error_type"] == "FlowBreakdown"
    assert "tip_ratio" in diag["diagnostics"]
    assert json.loads((out / "summary.json").read_text())["status"] == "failed"


def test_flow_short_run(tmp_path):
    out = tmp_path / "out"
    assert main(["flow", str(CONFIGS / "spindle_flow.json"), "--set", "flow.T=0.002", "--out", str(out)]) == 0
    _, cols, rows = read_csv(out / "flow.csv")
    assert cols == ["t", "lambda", "err", "min_phi", "tip_ratio"]
    lam = [float(r[1]) for r in rows]
    assert len(lam) == 3 and lam[-1] > lam[0]


def test_flow_dt_above_bound(tmp_path):
    assert main(["flow", str(CONFIGS / "spindle_flow.json"), "--set", "flow.dt=0.01"]) == 2


@pytest.mark.parametrize(
    "command,extra",
    [
        ("lambda", {}),
        ("asymptotics", {}),
        ("sobolev-check", {"sobolev": {"samples": 5, "nodes": 2001}}),
        ("variation", {"grid": {"M": 512}, "family": {"kind": "scaling", "second": False}}),
    ],
)
def test_other_commands_succeed(tmp_path, command, extra):
    cfg = write_cfg(tmp_path, {"manifold": CONE, **extra})
    out = tmp_path / "out"
    assert main([command, str(cfg), "--out", str(out)]) == 0
    assert (out / f"{command}.csv").exists()
    assert json.loads((out / "summary.json").read_text())["status"] == "ok"


def test_selftest_subprocess(tmp_path):
    env = {"CONESPEC_CACHE_DIR": str(tmp_path / "c"), "PATH": "/usr/bin:/bin"}
    proc = subprocess.run(
        [sys.executable, "-m", "conespec", "selftest", "--out", str(tmp_path / "o"), "--no-cache"],
        capture_output=True, text=True, env=env, cwd=tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    _, cols, rows = read_csv(tmp_path / "o" / "selftest.csv")
    assert rows and all(r[-1] == "true" for r in rows)

import csv
import json
import subprocess
import sys

import pytest

from harnack_lab import __version__
from harnack_lab.cli import main
from harnack_lab.runner import ConfigError, parse_config, plot_series, run

SMALL = """
experiment = "small"
seed = 3
checks = ["harnack", "max_principle", "chain_propagation"]

[fields.tensor]
kind = "identity"
nu = 1.0
n = 2

[resolution]
h = [0.125, 0.0625]

[trials]
count = 6
kind = "poisson"
atoms = 6
pole_range = [1.2, 2.0]

[check.chain_propagation]
rhos = [0.25, 0.125]
"""

FAILING = SMALL.replace('experiment = "small"', 'experiment = "failing"') + """
[check.harnack]
bound = 1.0
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_run_writes_reports_summary_and_manifest(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    d = tmp_path / "out" / "small"
    man = json.loads((d / "manifest.json").read_text())
    assert man["status"] == "pass" and man["seed"] == 3 and man["version"] == __version__
    assert [r["check"] for r in man["reports"]] == ["harnack", "max_principle", "chain_propagation"]
    rep = json.loads((d / "harnack.json").read_text())
    assert rep["verdict"] == "pass" and rep["config"]["seed"] == 3
    with open(d / "summary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["check_id", "seed", "h", "constant_name", "value", "verdict"]
    assert any(r[0] == "harnack" and r[3] == "N3" for r in rows[1:])
    assert "harnack: pass" in capsys.readouterr().out


def test_failing_check_exits_one(tmp_path, capsys):
    cfg = _write(tmp_path, FAILING)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "check failed:" in err and "harnack.json (fail)" in err


@pytest.mark.parametrize(
    "text, message",
    [
        ('experiment = "x"\nseed = 1\n', "no checks requested"),
        ('checks = ["harnack"]\n', "seed"),
        ('seed = 1\nchecks = ["wobble"]\n', "unknown check id"),
        ('seed = 1\nchecks = ["harnack"]\n[check.harnack]\nfoo = 1\n', "check.harnack.foo"),
        ('seed = 1\nchecks = ["harnack"]\n[check.local_max]\nlam = 2\n', "not requested"),
        ('seed = 1\nchecks = ["harnack"]\n[resolution]\nh = 0.75\n', "exceeds R/2"),
        ('seed = 1\nchecks = ["harnack"]\n[exponents]\nq = 1.0\n', "exponents"),
        ('seed = 1\nchecks = ["liouville"]\n[check.liouville]\nnodes_per_radius = 8\n', "need nodes_per_radius >= 108"),
        ('seed = 1\nchecks = ["harnack"]\nbogus = 2\n', "unknown top-level key"),
    ],
)
def test_config_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_invalid_config_exits_two(tmp_path, capsys):
    cfg = _write(tmp_path, 'experiment = "x"\nseed = 1\n')
    assert main(["run", "--config", str(cfg)]) == 2
    assert "no checks requested" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["run", "--config", str(cfg), "--jobs", "0"]) == 2


def test_report_formats(tmp_path):
    cfg = _write(tmp_path, SMALL)
    run(cfg, out=tmp_path, log=lambda s: None)
    manifest = tmp_path / "small" / "manifest.json"
    assert main(["report", "--manifest", str(manifest), "--format", "json"]) == 0
    reps = json.loads((tmp_path / "small" / "reports.json").read_text())
    assert [r["estimate_id"] for r in reps] == ["harnack", "max_principle", "chain_propagation"]
    assert main(["report", "--manifest", str(manifest), "--format", "csv"]) == 0
    assert main(["report", "--manifest", str(manifest), "--format", "plot-data"]) == 0
    with open(tmp_path / "small" / "plot_chain_propagation.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["rho", "inf_over_k"] and len(rows) == 3
    assert main(["report", "--manifest", str(tmp_path / "nope.json"), "--format", "json"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["report", "--manifest", str(manifest), "--format", "xml"])
    assert e.value.code == 2


def test_plot_series_fallback():
    rep = {"estimate_id": "max_principle", "measured": {}, "trials": [{"trial": 0, "h": 0.1, "min_margin": 0.5}]}
    assert plot_series(rep) == (["trial", "value"], [[0, 0.5]])


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    run(cfg, out=tmp_path / "a", log=lambda s: None)
    run(cfg, out=tmp_path / "b", jobs=2, log=lambda s: None)
    for name in ("harnack.json", "max_principle.json", "chain_propagation.json", "summary.csv"):
        assert (tmp_path / "a" / "small" / name).read_bytes() == (tmp_path / "b" / "small" / name).read_bytes()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HARNACK_LAB_OUT", str(tmp_path / "env"))
    cfg = _write(tmp_path, SMALL.replace('"harnack", "max_principle", "chain_propagation"', '"slant_cylinder", "chain_propagation"'))
    assert main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "small" / "slant_cylinder.json").exists()


def test_console_script_version_and_exit_codes(tmp_path):
    out = subprocess.run([sys.executable, "-m", "harnack_lab", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
    cfg = _write(tmp_path, 'seed = 1\n')
    bad = subprocess.run([sys.executable, "-m", "harnack_lab", "run", "--config", str(cfg)], capture_output=True, text=True)
    assert bad.returncode == 2 and "no checks requested" in bad.stderr


@pytest.mark.parametrize("name", ["elliptic_core", "parabolic_core", "counterexample_radial", "swirl"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    cfg = parse_config((Path(__file__).parent.parent / "configs" / f"{name}.toml").read_text())
    assert cfg is not None


def test_parabolic_core_config_runs(tmp_path):
    from pathlib import Path

    cfg = Path(__file__).parent.parent / "configs" / "parabolic_core.toml"
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 0

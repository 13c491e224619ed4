import csv
import os
import textwrap

import pytest

from apa.cli import load_config, main, parse_grid
from apa.trace import Trace, replay

LINEAR = """\
[problem]
kind = "linear"
seed = 0
n = 30
conditioning = 10.0
instance = "spd"

[policy]
fixed = [5]
restarted = [1e-4]
adaptive = [1e-4]

[run]
versions = ["A"]
tol = 1e-8
max_iter = 500
output_dir = "out"
"""

SCF = """\
[problem]
kind = "toy_scf"
seed = 0
d = 6
N = 2
difficulty = 1.0

[policy]
restarted = [1e-4]
adaptive = [1e-4]

[run]
versions = ["P"]
tol = 1e-8
max_iter = 200
output_dir = "out"
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def bodies(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for f in sorted(files):
            with open(os.path.join(root, f), newline="") as fh:
                rows = list(csv.reader(fh))
            if rows and rows[0][-1] == "elapsed_ns":
                rows = [r[:-1] for r in rows]
            out[os.path.relpath(os.path.join(root, f), directory)] = rows
    return out


def test_run_writes_three_traces_and_summary(tmp_path, capsys):
    cfg = write(tmp_path, LINEAR)
    assert main(["run", cfg]) == 0
    out = tmp_path / "out"
    traces = sorted(p.name for p in out.glob("*.csv") if p.name != "summary.csv")
    assert len(traces) == 3
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["run_id", "converged", "iterations", "mean_depth", "rate", "final_residual"]
    assert sorted(r["run_id"] + ".csv" for r in rows) == traces
    assert all(r["converged"] == "1" for r in rows)
    # every trace replays from its CSV files
    c = load_config(cfg)
    for spec in c.runs:
        tr = Trace.read_csv(out / f"{spec.run_id}.csv", out / "replay" / f"{spec.run_id}.csv", 30)
        assert all(rep.ok for rep in replay(tr, spec.policy).values())


def test_rerun_is_byte_identical_modulo_time(tmp_path, monkeypatch):
    cfg = write(tmp_path, SCF)
    monkeypatch.setenv("APA_THREADS", "1")
    assert main(["run", cfg]) == 0
    first = bodies(tmp_path / "out")
    monkeypatch.setenv("APA_THREADS", "4")
    assert main(["run", cfg]) == 0
    assert bodies(tmp_path / "out") == first
    assert not [f for f in os.listdir(tmp_path / "out") if f.startswith(".tmp")]


@pytest.mark.parametrize("text,line", [
    ("[problem]\nkind = \"linear\"\nn = = 3\n", 3),
    (LINEAR.replace("restarted = [1e-4]", "restarted = [2.0]"), 10),
    (LINEAR.replace("instance = \"spd\"", "instance = \"spd\"\nbogus = 1"), 7),
    (LINEAR.replace("versions = [\"A\"]", "versions = [\"Q\"]"), 14),
])
def test_malformed_config_reports_line(tmp_path, capsys, text, line):
    cfg = write(tmp_path, text)
    assert main(["run", cfg]) != 0
    err = capsys.readouterr().err
    assert f"{cfg}:{line}:" in err


def test_missing_section(tmp_path, capsys):
    cfg = write(tmp_path, "[problem]\nkind = \"linear\"\n")
    assert main(["run", cfg]) != 0
    assert "missing [policy]" in capsys.readouterr().err


def test_divergence_is_recorded_not_fatal(tmp_path, monkeypatch):
    import apa.cli as cli
    from apa.driver import DivergenceError

    real = cli.accelerate

    def blow_up(problem, x0, tol, policy, version, max_iter):
        _, tr = real(problem, x0, tol, policy, version, 3)
        if policy.kind == "adaptive":
            raise DivergenceError("non-finite values at step 4", tr, x0)
        return _, tr

    monkeypatch.setattr(cli, "accelerate", blow_up)
    cfg = write(tmp_path, LINEAR)
    assert main(["run", cfg]) == 0
    with open(tmp_path / "out" / "summary.csv", newline="") as fh:
        rows = {r["run_id"].split("__")[1]: r for r in csv.DictReader(fh)}
    assert rows["adaptive-delta0.0001"]["converged"] == "0"
    assert rows["adaptive-delta0.0001"]["iterations"] == "3"
    assert len(rows) == 3


def test_sweep_table(tmp_path, capsys):
    cfg = write(tmp_path, SCF)
    assert main(["sweep", cfg, "--param", "1e-2:1e-4"]) == 0
    with open(tmp_path / "out" / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert {r["policy"] for r in rows} == {"restarted", "adaptive"}


def test_parse_grid():
    assert parse_grid(None) == [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8]
    assert parse_grid("1e-2:1e-4") == [1e-2, 1e-3, 1e-4]
    assert parse_grid("0.5,0.1") == [0.5, 0.1]


@pytest.mark.parametrize("suite", ["coefficients", "multisecant", "gmres", "scf-manifold"])
def test_certify_exit_zero(suite, capsys):
    assert main(["certify", suite]) == 0
    out = capsys.readouterr().out
    assert "FAIL " not in out and "PASS" in out

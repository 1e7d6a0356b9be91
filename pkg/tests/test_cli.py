import os
import subprocess
import sys

import numpy as np
import pytest

from cosched.cli import main, preset_names
from cosched.experiments.data import read_csv
from cosched.experiments.runner import read_trace
from cosched.topology import WeightedGraph

TINY = """
[topology]
n = 5
p = 0.7
graph_pool_size = 1

[solver]
dt = 0.001
steps = 60
record_every = 20

[cpu]
b = none
load_fraction = 0.5

[ml]
kind = regression
n_points = 40
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY)
    return p


def test_presets_listed():
    assert {"svm", "regression", "nonconvex", "logistic", "scheduling"} <= set(preset_names())


def test_run_with_overrides(tiny, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(tiny), "--out-dir", str(out), "--seed", "3", "--record-every", "30",
                 "--per-node-trace"]) == 0
    assert "feasibility_gap=" in capsys.readouterr().out
    header, cols = read_trace(out / "trace.csv")
    assert list(cols["step"]) == [0, 30, 60]
    assert "x_4" in cols
    assert "seed = 3" in (out / "config.ini").read_text()


def test_run_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[solver]\ndt = 0\n")
    assert main(["run", str(bad), "--out-dir", str(tmp_path / "o")]) == 2
    assert "[solver] dt" in capsys.readouterr().err


def test_run_infeasible_exit(tmp_path):
    cfg = tmp_path / "inf.ini"
    cfg.write_text(TINY.replace("b = none\nload_fraction = 0.5", "b = 1e9"))
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.filterwarnings("ignore::cosched.experiments.build.StepSizeWarning")
def test_run_divergence_exit(tmp_path, capsys):
    cfg = tmp_path / "div.ini"
    cfg.write_text(TINY.replace("dt = 0.001", "dt = 1.0\nalpha = 10000") + "[quantizer]\nenabled = false\n")
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == 4
    err = capsys.readouterr().err
    assert "non-finite state at step" in err


def test_entry_point_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[nope]\n")
    proc = subprocess.run([sys.executable, "-m", "cosched.cli", "run", str(bad), "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "nope" in proc.stderr


def test_spectral(tiny, capsys):
    assert main(["spectral", str(tiny)]) == 0
    out = capsys.readouterr().out
    assert "alpha_bar=" in out
    rows = [ln for ln in out.splitlines() if ln.startswith("graph=")]
    assert len(rows) == 3
    for ln in rows:
        # two features plus a bias: one zero eigenvalue per parameter
        assert "zero_count=3" in ln
        top = float(ln.split("max_nonzero_real=")[1])
        assert top < 0


def test_compare_baseline(capsys):
    assert main(["compare-baseline", "preset:svm", "--instances", "10"]) == 0
    lines = capsys.readouterr().out.splitlines()
    rows = [ln.split(",") for ln in lines[1:] if not ln.startswith("#")]
    assert lines[0] == "instance,seed,cost_balancing,cost_sum_preserving,ratio"
    assert len(rows) == 10
    assert all(float(r[4]) <= 1 + 1e-9 for r in rows)


def test_compare_baseline_needs_cpu(tmp_path):
    cfg = tmp_path / "noc.ini"
    cfg.write_text("[cpu]\nenabled = false\n[ml]\nkind = svm\n")
    assert main(["compare-baseline", str(cfg)]) == 2


def test_gradcheck(capsys):
    assert main(["gradcheck", "--points", "5"]) == 0
    out = capsys.readouterr().out
    for kind in ("svm", "regression", "logistic", "nonconvex"):
        assert kind in out
    assert "FAIL" not in out


@pytest.mark.parametrize("kind", ["svm", "regression", "logistic", "nonconvex"])
def test_gen_data(tmp_path, kind):
    out = tmp_path / f"{kind}.csv"
    assert main(["gen-data", kind, "--out", str(out), "--n-points", "25", "--n-nodes", "4", "--seed", "2"]) == 0
    ds = read_csv(out, kind)
    assert len(ds) == (100 if kind == "nonconvex" else 25)


def test_gen_graph(tmp_path):
    out = tmp_path / "g.txt"
    assert main(["gen-data", "graph", "--out", str(out), "--n-nodes", "7", "--p", "0.5", "--seed", "1"]) == 0
    assert out.read_text().splitlines()[0] == "n 7"
    assert WeightedGraph.load(out).n == 7


def test_dataset_and_graph_files_drive_a_run(tmp_path):
    assert main(["gen-data", "svm", "--out", str(tmp_path / "d.csv"), "--n-points", "60"]) == 0
    assert main(["gen-data", "graph", "--out", str(tmp_path / "g.txt"), "--n-nodes", "4", "--p", "1"]) == 0
    (tmp_path / "c.ini").write_text(
        "[topology]\nkind = file\nn = 4\ngraph_files = g.txt\n"
        "[solver]\nsteps = 20\n[cpu]\nb = none\nload_fraction = 0.5\n"
        "[ml]\nkind = svm\ndataset = d.csv\n"
    )
    assert main(["run", str(tmp_path / "c.ini"), "--out-dir", str(tmp_path / "o")]) == 0
    _, cols = read_trace(tmp_path / "o" / "trace.csv")
    assert np.all(cols["feasibility_gap"] < 1e-9)


def test_threads_env_recorded(tiny, tmp_path):
    env = dict(os.environ, COSCHED_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "cosched.cli", "run", str(tiny), "--out-dir", str(tmp_path / "o")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert '"threads": 1' in (tmp_path / "o" / "metadata.json").read_text()

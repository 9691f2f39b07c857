import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from qdmoo import cli, scalarize
from qdmoo.config import from_dict, load_config
from qdmoo.optimize import run
from qdmoo.records import hash_from_comment, read_csv, read_jsonl, read_matrix_csv
from qdmoo.validation import ConfigurationError

TINY = """
[problem]
benchmark = "{bench}"
n = {n}
d = {d}

[objectives]
M = 200

[scalarization]
kind = "{kind}"

[optimizer]
K = 8
iterations = {iters}
batch_size = 16
seed = 3

[metrics]
cells = 32
checkpoint_interval = 10

[output]
directory = "{out}"
"""


def tiny(tmp_path, name="cfg.toml", bench="lp", n=16, d=4, kind="stch-set", iters=25,
         out=None, extra=""):
    out = out or str(tmp_path / "run")
    path = tmp_path / name
    path.write_text(TINY.format(bench=bench, n=n, d=d, kind=kind, iters=iters, out=out) + extra)
    return path


def test_run_missing_config(tmp_path):
    out = tmp_path / "never"
    assert cli.main(["run", "--config", str(tmp_path / "nope.toml"), "--out", str(out)]) == 2
    assert not out.exists()


def test_run_bad_configs(tmp_path, capsys):
    p = tiny(tmp_path, extra="\n[extra]\nx = 1\n")
    assert cli.main(["run", "--config", str(p)]) == 2
    p = tmp_path / "bad.toml"
    p.write_text(tiny(tmp_path).read_text().replace("K = 8", "K = 8\npopulation = 2"))
    assert cli.main(["run", "--config", str(p)]) == 2
    assert "optimizer.population" in capsys.readouterr().err
    p.write_text(tiny(tmp_path).read_text().replace("K = 8", "K = -1"))
    assert cli.main(["run", "--config", str(p)]) == 2
    assert "optimizer.K" in capsys.readouterr().err
    p.write_text("[problem\n")
    assert cli.main(["run", "--config", str(p)]) == 2
    assert not (tmp_path / "run").exists()


def test_run_outputs_and_roundtrip(tmp_path, capsys):
    path = tiny(tmp_path)
    assert cli.main(["run", "--config", str(path)]) == 0
    assert "qd_score=" in capsys.readouterr().out
    out = tmp_path / "run"
    cfg = load_config(path)
    chash = cfg.hash()
    for name in ("final_set.csv", "metrics.csv", "archive.csv", "grid.csv"):
        comment, _, _ = read_csv(out / name)
        assert hash_from_comment(comment) == chash
    assert json.loads((out / "metrics.json").read_text())["config_hash"] == chash
    assert read_jsonl(out / "trace.jsonl")[0] == {"type": "header", "config_hash": chash}
    assert json.loads((out / "metadata.json").read_text())["status"] == "complete"

    X, _ = run(cfg.optim_config(), cfg.make_problem())
    _, cols, data = read_matrix_csv(out / "final_set.csv")
    assert cols == [f"x{i}" for i in range(1, 17)]
    np.testing.assert_array_equal(data, X)

    rec = read_jsonl(out / "trace.jsonl")
    iters = [r for r in rec if r["type"] == "iter"]
    assert [r["iter"] for r in iters] == list(range(1, 26))
    assert [r["iter"] for r in rec if r["type"] == "checkpoint"] == [0, 10, 20, 25]
    metrics = json.loads((out / "metrics.json").read_text())["metrics"]
    assert rec[-1]["metrics"] == metrics
    for v in metrics.values():
        assert np.isfinite(v)


def test_run_zero_iterations(tmp_path):
    path = tiny(tmp_path, iters=0)
    assert cli.main(["run", "--config", str(path)]) == 0
    rec = read_jsonl(tmp_path / "run" / "trace.jsonl")
    assert [r["type"] for r in rec] == ["header", "checkpoint"]


def test_run_runtime_failure_flushes(tmp_path, monkeypatch):
    def boom(*a, **k):
        from qdmoo.validation import EvaluationError
        raise EvaluationError("non-finite gradient at step 1: objective m=0, solution k=0")
    monkeypatch.setattr(cli, "optimize_run", boom)
    path = tiny(tmp_path)
    assert cli.main(["run", "--config", str(path)]) == 1
    meta = json.loads((tmp_path / "run" / "metadata.json").read_text())
    assert meta["status"] == "aborted" and "m=0" in meta["error"]
    assert read_jsonl(tmp_path / "run" / "trace.jsonl")[0]["type"] == "header"


def test_config_hash_ignores_output(tmp_path):
    a = load_config(tiny(tmp_path, "a.toml", out="x"))
    b = load_config(tiny(tmp_path, "b.toml", out="y"))
    c = load_config(tiny(tmp_path, "c.toml", iters=3))
    assert a.hash() == b.hash() != c.hash()


@pytest.mark.parametrize("name", ["lp_easy", "lp_medium", "lp_hard", "desk"])
def test_shipped_configs_valid(config_dir, name):
    cfg = load_config(config_dir / f"{name}.toml")
    assert cfg.optimizer.lr == 0.05 and cfg.optimizer.batch_size == 64
    if name == "desk":
        assert (cfg.problem.n, cfg.problem.d, cfg.optimizer.K, cfg.objectives.M,
                cfg.optimizer.iterations) == (128, 4, 64, 1000, 200)
    else:
        assert (cfg.problem.n, cfg.optimizer.K, cfg.objectives.M,
                cfg.optimizer.iterations) == (1024, 1024, 10_000, 1000)


def test_config_cross_checks():
    with pytest.raises(ConfigurationError, match="problem.d"):
        from_dict({"problem": {"n": 10, "d": 4}})
    with pytest.raises(ConfigurationError, match="batch_size"):
        from_dict({"objectives": {"M": 10}})
    with pytest.raises(ConfigurationError, match="squad"):
        from_dict({"problem": {"benchmark": "sphere", "n": 4, "d": 2},
                   "scalarization": {"kind": "squad"}})
    with pytest.raises(ConfigurationError, match="scalarization.eq13_form"):
        from_dict({"scalarization": {"eq13_form": "eq13"}})


def test_sweep_single_matches_run(tmp_path):
    path = tiny(tmp_path)
    assert cli.main(["run", "--config", str(path)]) == 0
    assert cli.main(["sweep", "--config", str(path), "--axis", "mu", "--values", "0.01",
                     "--seeds", "3", "--out", str(tmp_path / "sw")]) == 0
    child = tmp_path / "sw" / "sweep_mu" / "mu=0.01" / "seed=3"
    for name in ("final_set.csv", "metrics.json", "archive.csv"):
        assert (child / name).read_bytes() == (tmp_path / "run" / name).read_bytes()


def test_sweep_aggregation(tmp_path, monkeypatch):
    monkeypatch.setenv("QDMOO_WORKERS", "1")
    path = tiny(tmp_path, iters=5)
    assert cli.main(["sweep", "--config", str(path), "--axis", "K", "--values", "4,8",
                     "--seeds", "0,1,2", "--out", str(tmp_path / "sw")]) == 0
    root = tmp_path / "sw" / "sweep_K"
    _, cols, rows = read_csv(root / "runs.csv")
    _, scols, srows = read_csv(root / "summary.csv")
    assert len(rows) == 6 and len(srows) == 2
    qi = cols.index("qd_score")
    for srow in srows:
        per = [float(r[qi]) for r in rows if float(r[1]) == float(srow[0])]
        assert float(srow[scols.index("qd_score_mean")]) == pytest.approx(np.mean(per), rel=1e-15)
        assert float(srow[scols.index("qd_score_std")]) == pytest.approx(np.std(per, ddof=1),
                                                                        rel=1e-12)
    for r in rows:
        m = json.loads((root / f"K={int(float(r[1]))}" / f"seed={r[2]}" /
                        "metrics.json").read_text())["metrics"]
        assert float(r[qi]) == m["qd_score"]


def test_sweep_bad_values(tmp_path):
    path = tiny(tmp_path)
    assert cli.main(["sweep", "--config", str(path), "--axis", "K", "--values", "a,b"]) == 2
    assert cli.main(["sweep", "--config", str(path), "--axis", "mu", "--values", "-1"]) == 2
    assert cli.main(["sweep", "--config", str(path), "--axis", "depth", "--values", "1"]) == 2


def test_worker_limit(monkeypatch):
    monkeypatch.setenv("QDMOO_WORKERS", "2")
    assert cli.worker_limit(8) == 2
    assert cli.worker_limit(1) == 1
    monkeypatch.setenv("QDMOO_WORKERS", "zero")
    with pytest.raises(ConfigurationError):
        cli.worker_limit()


def test_check_invalid_trials(tmp_path):
    assert cli.main(["check", "--suite", "theorems", "--trials", "0",
                     "--out", str(tmp_path)]) == 2


def test_check_metrics_passes(tmp_path):
    assert cli.main(["check", "--suite", "metrics", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "check_metrics.json").read_text())
    assert rep["metrics"]["passed"]


def test_check_fault_injection(tmp_path, monkeypatch, capsys):
    real = scalarize.ssom_value

    def flipped(V, sp, lam=None):
        r = real(V, sp, lam)
        return scalarize.ScalarizationResult(r.value, -r.weight_matrix)
    monkeypatch.setattr(scalarize, "ssom_value", flipped)
    assert cli.main(["check", "--suite", "gradients", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "gradients" in err and "check_gradients.json" in err


def test_check_all_default_exit_zero(tmp_path):
    code = cli.main(["check", "--suite", "all", "--out", str(tmp_path)])
    assert code == 0


def test_export_trace_archive_grid_metrics(tmp_path):
    path = tiny(tmp_path, bench="sphere", n=4, d=2)
    assert cli.main(["run", "--config", str(path)]) == 0
    run_dir = tmp_path / "run"
    assert cli.main(["export", "--run", str(run_dir), "--what", "trace"]) == 0
    comment, cols, rows = read_csv(run_dir / "export_trace.csv")
    assert cols == ["iter", "g_value", "qd_score", "qvs", "vendi", "coverage"]
    assert hash_from_comment(comment) == load_config(path).hash()
    metrics = json.loads((run_dir / "metrics.json").read_text())["metrics"]
    assert float(rows[-1][2]) == metrics["qd_score"]
    assert float(rows[-1][3]) == metrics["qvs"]

    assert cli.main(["export", "--run", str(run_dir), "--what", "archive",
                     "--out", str(tmp_path / "a.csv")]) == 0
    _, cols, data = read_matrix_csv(tmp_path / "a.csv")
    assert cols == ["s1", "s2", "best_f"] and data.shape == (32, 3)

    assert cli.main(["export", "--run", str(run_dir), "--what", "grid"]) == 0
    _, cols, data = read_matrix_csv(run_dir / "export_grid.csv")
    assert cols == ["b1", "b2"] and data.shape == (200, 2)

    assert cli.main(["export", "--run", str(run_dir), "--what", "metrics"]) == 0
    _, cols, rows = read_csv(run_dir / "export_metrics.csv")
    assert float(rows[0][cols.index("vendi")]) == metrics["vendi"]


def test_export_missing(tmp_path):
    assert cli.main(["export", "--run", str(tmp_path / "nope"), "--what", "trace"]) == 2
    (tmp_path / "empty").mkdir()
    assert cli.main(["export", "--run", str(tmp_path / "empty"), "--what", "archive"]) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qdmoo.cli", "check", "--suite", "theorems",
                          "--trials", "0"], capture_output=True, text=True)
    assert res.returncode == 2
    res = subprocess.run([sys.executable, "-m", "qdmoo.cli", "frobnicate"],
                         capture_output=True, text=True)
    assert res.returncode == 2

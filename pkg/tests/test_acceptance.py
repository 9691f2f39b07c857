"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured values.
Run directly (``python tests/test_acceptance.py``) for the summary lines only.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from qdmoo import cli, oracle
from qdmoo.config import load_config
from qdmoo.objectives import generate_grid
from qdmoo.optimize import OptimConfig, run
from qdmoo.problem import toy_sphere_problem

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "qdmoo" / "configs"
SEEDS = (0, 1, 2)


def _desk():
    return load_config(CONFIGS / "desk.toml")


def _line(num, ok, title, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} | {detail}"


def crit1(tmp):
    t0 = time.perf_counter()
    rep = oracle.theorem_suite(seed=0, trials=10_000)
    secs = time.perf_counter() - t0
    bad = {k: v["failed"] for k, v in rep["checks"].items() if v["failed"]}
    ok = rep["passed"] and secs < 60
    return ok, _line(1, ok, "theorem property suite, 10^4 trials",
                     f"violations={rep['violations']} {bad or ''} runtime={secs:.1f}s")


def crit2(tmp):
    t0 = time.perf_counter()
    rep = oracle.gradient_suite(seed=0, points=20)
    secs = time.perf_counter() - t0
    worst = max((c["rel_error"] for c in rep["counterexamples"]), default=0.0)
    ok = rep["passed"] and secs < 30
    return ok, _line(2, ok, "gradient oracle (sphere + LP n=32, 20 points)",
                     f"violations={rep['violations']} worst_failing_rel_err={worst:.2e} "
                     f"runtime={secs:.1f}s")


def _mean_metrics(cfg, tmp, tag, key_values):
    reps = []
    for s in SEEDS:
        c = cfg
        for section, key, value in key_values:
            c = c.with_value(section, key, value)
        c = c.with_value("optimizer", "seed", s)
        reps.append(cli.execute(c, tmp / f"{tag}_{s}"))
    return reps


def crit3(tmp):
    t0 = time.perf_counter()
    cfg = _desk().with_value("optimizer", "iterations", 500)
    tch = _mean_metrics(cfg, tmp, "tch", [("scalarization", "kind", "tch-set")])
    stch = _mean_metrics(cfg, tmp, "stch", [("scalarization", "kind", "stch-set")])
    secs = time.perf_counter() - t0
    v_t, v_s = np.mean([r.vendi for r in tch]), np.mean([r.vendi for r in stch])
    c_t, c_s = np.mean([r.coverage for r in tch]), np.mean([r.coverage for r in stch])
    ok = v_s >= 3 * v_t and c_s >= 5 * c_t and secs < 300
    return ok, _line(3, ok, "smooth/hard collapse contrast on desk",
                     f"vendi stch={v_s:.2f} tch={v_t:.2f} ratio={v_s / v_t:.2f} (need >=3); "
                     f"coverage stch={c_s:.2f} tch={c_t:.2f} ratio={c_s / c_t:.2f} (need >=5); "
                     f"runtime={secs:.0f}s")


def crit4(tmp):
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "lp_hard.toml").with_value("problem", "n", 256)
    qd, qv = [], []
    for K in (64, 128, 256):
        reps = _mean_metrics(cfg, tmp, f"K{K}", [("optimizer", "K", K)])
        qd.append(np.mean([r.qd_score for r in reps]))
        qv.append(np.mean([r.qvs for r in reps]))
    secs = time.perf_counter() - t0
    ok = bool(np.all(np.diff(qd) > 0) and np.all(np.diff(qv) > 0) and secs < 900)
    return ok, _line(4, ok, "K-scaling trend on LP Hard n=256",
                     "qd_score=" + "/".join(f"{v:.0f}" for v in qd)
                     + " qvs=" + "/".join(f"{v:.1f}" for v in qv) + f" runtime={secs:.0f}s")


def crit5(tmp):
    t0 = time.perf_counter()
    cfg = _desk()
    lo = np.mean([r.qvs for r in _mean_metrics(cfg, tmp, "mu001", [("scalarization", "mu", 0.01)])])
    hi = np.mean([r.qvs for r in _mean_metrics(cfg, tmp, "mu1", [("scalarization", "mu", 1.0)])])
    secs = time.perf_counter() - t0
    gain = lo / hi - 1.0
    ok = gain >= 0.30 and secs < 600
    return ok, _line(5, ok, "mu-sensitivity on desk",
                     f"qvs mu=0.01: {lo:.1f} mu=1.0: {hi:.1f} gain={100 * gain:.1f}% "
                     f"(need >=30%) runtime={secs:.0f}s")


def crit6(tmp):
    t0 = time.perf_counter()
    rep = cli.execute(load_config(CONFIGS / "lp_hard.toml"), tmp / "lp_hard")
    secs = time.perf_counter() - t0
    ok = rep.mean_obj >= 65 and rep.qd_score >= 35_000 and rep.qvs >= 400
    return ok, _line(6, ok, "full-scale LP Hard spot check",
                     f"mean_obj={rep.mean_obj:.2f} (>=65) qd_score={rep.qd_score:.0f} (>=35000) "
                     f"qvs={rep.qvs:.1f} (>=400) runtime={secs:.0f}s")


def crit7(tmp):
    t0 = time.perf_counter()
    rep = oracle.metrics_suite(seed=0)
    secs = time.perf_counter() - t0
    ok = rep["passed"] and secs < 10
    return ok, _line(7, ok, "metric closed forms",
                     f"checks={sum(c['passed'] for c in rep['checks'].values())} "
                     f"violations={rep['violations']} runtime={secs:.1f}s")


def crit8(tmp):
    t0 = time.perf_counter()
    p = toy_sphere_problem(4, 2)
    cfg = OptimConfig(scalarization="ssom", K=4, iterations=500, batch_size=8, grid_M=8)
    grid = generate_grid(p.spec.behavior_bounds, 8)
    X, _ = run(cfg, p, grid=grid)
    pool = oracle.make_pool(X, p.spec.solution_bounds, 5000, 5000, seed=0)
    res = oracle.pareto_check(X, pool, oracle.vtilde_evaluator(p, grid, cfg.resolved_gamma_sq(2)))
    secs = time.perf_counter() - t0
    dominated = sum(r.status == "dominated" for r in res)
    ok = dominated == 0 and secs < 60
    return ok, _line(8, ok, "Pareto pool check after toy-sphere SSoM",
                     f"dominated={dominated}/4 pool={pool.shape[0]} runtime={secs:.1f}s")


def crit9(tmp):
    path = CONFIGS / "desk.toml"
    outs = [tmp / "det_a", tmp / "det_b"]
    codes = [cli.main(["run", "--config", str(path), "--out", str(o)]) for o in outs]
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("final_set.csv", "metrics.json"))
    ok = codes == [0, 0] and same
    return ok, _line(9, ok, "determinism of desk runs",
                     f"exit codes={codes} final_set.csv and metrics.json identical={same}")


CRITERIA = [crit1, crit2, crit3, crit4, crit5, crit6, crit7, crit8, crit9]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_criterion(crit, tmp_path, capsys):
    ok, line = crit(tmp_path)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    import tempfile
    with tempfile.TemporaryDirectory() as d:
        for crit in CRITERIA:
            print(crit(Path(d))[1], flush=True)

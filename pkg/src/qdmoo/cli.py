"""Command-line runner: ``run``, ``sweep``, ``check`` and ``export``.

Exit codes: 0 success, 1 runtime or property failure, 2 configuration error.
"""

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics, oracle
from .config import dump_toml, load_config
from .objectives import generate_grid
from .optimize import run as optimize_run
from .records import (header_line, read_csv, read_jsonl, read_matrix_csv, write_matrix_csv,
                      write_rows_csv)
from .validation import ConfigurationError, EvaluationError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

TRACE_COLUMNS = ("iter", "g_value", "qd_score", "qvs", "vendi", "coverage")
SWEEP_AXES = {"mu": ("scalarization", "mu", float),
              "K": ("optimizer", "K", int),
              "gamma_sq": ("objectives", "gamma_sq", float)}

FILES = {
    "trace": "trace.jsonl",
    "final_set": "final_set.csv",
    "metrics_json": "metrics.json",
    "metrics_csv": "metrics.csv",
    "archive": "archive.csv",
    "grid": "grid.csv",
    "meta": "metadata.json",
    "config": "config.toml",
}


def _err(msg):
    print(f"qdmoo: {msg}", file=sys.stderr)


# -- run ----------------------------------------------------------------------

def execute(cfg, out_dir):
    """Run one configuration into ``out_dir``; returns the final MetricsReport.

    Exceptions propagate after the trace and metadata have been flushed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.hash()
    head = header_line(chash)
    formats = set(cfg.output.formats)
    problem = cfg.make_problem()
    ocfg = cfg.optim_config()
    d = problem.d
    grid = generate_grid(problem.spec.behavior_bounds, ocfg.grid_M, ocfg.grid_method,
                         ocfg.grid_seed)
    archive = metrics.build_cvt(problem.spec.behavior_bounds, cfg.metrics.cells,
                                cfg.metrics.cvt_samples, cfg.metrics.archive_seed)
    sigma = cfg.metrics.sigma_soft
    if sigma is None:
        sigma = float(np.sqrt(ocfg.resolved_gamma_sq(d) / 2.0))
    last = {}

    def metrics_fn(X):
        ev = problem.evaluate(X)
        report, arc = metrics.compute_metrics(ev.f, ev.b, archive, sigma, grid, d=d)
        last["report"], last["archive"] = report, arc
        return report.to_dict()

    meta = {"config_hash": chash, "seeds": {"optimizer": ocfg.seed, "grid": ocfg.grid_seed,
                                            "archive": cfg.metrics.archive_seed},
            "sigma_soft": sigma, "gamma_sq": ocfg.resolved_gamma_sq(d), "status": "running",
            "config": cfg.to_dict()}
    (out / FILES["config"]).write_text(dump_toml(cfg))
    if "csv" in formats:
        grid.to_csv(out / FILES["grid"], head)
    trace_path = out / FILES["trace"]
    with open(trace_path, "w") as fh:
        fh.write(json.dumps({"type": "header", "config_hash": chash}) + "\n")
        try:
            X, _ = optimize_run(ocfg, problem, grid=grid, metrics_fn=metrics_fn, trace_file=fh)
        except Exception as exc:
            meta["status"] = "aborted"
            meta["error"] = f"{type(exc).__name__}: {exc}"
            (out / FILES["meta"]).write_text(json.dumps(meta, indent=2))
            raise
    report, arc = last["report"], last["archive"]
    if "csv" in formats:
        write_matrix_csv(out / FILES["final_set"], X, [f"x{i + 1}" for i in range(problem.n)],
                         head)
        report.to_csv(out / FILES["metrics_csv"], head)
        arc.to_csv(out / FILES["archive"], head)
    if "json" in formats:
        report.to_json(out / FILES["metrics_json"], {"config_hash": chash})
    meta["status"] = "complete"
    (out / FILES["meta"]).write_text(json.dumps(meta, indent=2))
    return report


def cmd_run(args):
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output.directory
    try:
        report = execute(cfg, out_dir)
    except (EvaluationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _err(f"run aborted: {exc} (partial outputs in {out_dir})")
        return EXIT_FAIL
    print(f"qd_score={report.qd_score:.6g} qvs={report.qvs:.6g} "
          f"mean_obj={report.mean_obj:.6g} coverage={report.coverage:.4g} "
          f"vendi={report.vendi:.6g} -> {out_dir}")
    return EXIT_OK


# -- sweep --------------------------------------------------------------------

def _parse_list(text, cast, name):
    try:
        values = [cast(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"--{name}: cannot parse {text!r}") from exc
    if not values:
        raise ConfigurationError(f"--{name}: no values given")
    return values


def _child(job):
    cfg, out_dir = job
    try:
        return out_dir, execute(cfg, out_dir).to_dict(), None
    except Exception as exc:
        return out_dir, None, f"{type(exc).__name__}: {exc}"


def worker_limit(requested=None):
    env = os.environ.get("QDMOO_WORKERS")
    limit = requested if requested is not None else (os.cpu_count() or 1)
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigurationError(f"QDMOO_WORKERS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigurationError("QDMOO_WORKERS must be >= 1")
        limit = min(limit, cap)
    return max(1, limit)


def cmd_sweep(args):
    cfg = load_config(args.config)
    section, key, cast = SWEEP_AXES[args.axis]
    values = _parse_list(args.values, cast, "values")
    seeds = _parse_list(args.seeds, int, "seeds")
    root = Path(args.out or cfg.output.directory) / f"sweep_{args.axis}"
    jobs = []
    for v in values:
        for s in seeds:
            child = cfg.with_value(section, key, v).with_value("optimizer", "seed", s)
            jobs.append((child, str(root / f"{args.axis}={v}" / f"seed={s}")))
    workers = min(worker_limit(args.workers), len(jobs))
    root.mkdir(parents=True, exist_ok=True)
    if workers == 1:
        results = [_child(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_child, jobs))
    failed = [(d, e) for d, _, e in results if e is not None]
    for d, e in failed:
        _err(f"child {d} failed: {e}")
    head = header_line(cfg.hash(), axis=args.axis)
    fields_ = list(metrics.REPORT_FIELDS)
    rows = []
    for (child, out_dir), (_, rep, _) in zip(jobs, results):
        if rep is not None:
            v = getattr(getattr(child, section), key)
            rows.append([args.axis, v, child.optimizer.seed] + [rep[f] for f in fields_])
    write_rows_csv(root / "runs.csv", ["axis", "value", "seed"] + fields_,
                   [[r[0], float(r[1]), r[2]] + r[3:] for r in rows], head)
    agg = []
    for v in values:
        sel = np.array([r[3:] for r in rows if r[1] == v], dtype=float)
        if sel.size == 0:
            continue
        std = sel.std(axis=0, ddof=1) if sel.shape[0] > 1 else np.zeros(sel.shape[1])
        row = [float(v), sel.shape[0]]
        for j in range(sel.shape[1]):
            row += [float(sel[:, j].mean()), float(std[j])]
        agg.append(row)
    cols = [args.axis, "n_seeds"] + [f"{f}_{s}" for f in fields_ for s in ("mean", "std")]
    write_rows_csv(root / "summary.csv", cols, agg, head)
    for row in agg:
        print(f"{args.axis}={row[0]:g} seeds={row[1]} qd_score={row[2 + 2 * 4]:.6g}"
              f"±{row[3 + 2 * 4]:.3g} qvs={row[2 + 2 * 5]:.6g}±{row[3 + 2 * 5]:.3g}")
    print(f"summary -> {root / 'summary.csv'}")
    return EXIT_FAIL if failed else EXIT_OK


# -- check --------------------------------------------------------------------

def cmd_check(args):
    if args.trials is not None and args.trials < 1:
        raise ConfigurationError(f"--trials must be >= 1, got {args.trials}")
    names = list(oracle.SUITES) if args.suite == "all" else [args.suite]
    out = Path(args.out)
    reports = {}
    for name in names:
        if name == "theorems":
            rep = oracle.theorem_suite(args.seed, args.trials or 10_000)
        else:
            rep = oracle.SUITES[name](args.seed)
        reports[name] = rep
        status = "pass" if rep["passed"] else "FAIL"
        print(f"{name}: {status} ({rep['violations']} violations, {rep['seconds']:.1f}s)")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"check_{args.suite}.json"
    path.write_text(json.dumps(reports, indent=2))
    failed = [n for n, r in reports.items() if not r["passed"]]
    if failed:
        _err(f"suite(s) failed: {', '.join(failed)}; counterexamples in {path}")
        return EXIT_FAIL
    print(f"report -> {path}")
    return EXIT_OK


# -- export -------------------------------------------------------------------

def _need(run_dir, key):
    path = Path(run_dir) / FILES[key]
    if not path.is_file():
        raise ConfigurationError(f"run directory {run_dir} has no {FILES[key]}")
    return path


def export_trace(run_dir):
    records = read_jsonl(_need(run_dir, "trace"))
    chash = next((r.get("config_hash") for r in records if r.get("type") == "header"), None)
    g = {r["iter"]: r["g_value"] for r in records if r.get("type") == "iter"}
    rows = []
    for r in records:
        if r.get("type") == "checkpoint":
            m = r["metrics"]
            rows.append([r["iter"], float(g.get(r["iter"], np.nan)), float(m["qd_score"]),
                         float(m["qvs"]), float(m["vendi"]), float(m["coverage"])])
    return header_line(chash), list(TRACE_COLUMNS), rows


def cmd_export(args):
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise ConfigurationError(f"run directory not found: {run_dir}")
    dest = Path(args.out) if args.out else run_dir / f"export_{args.what}.csv"
    if args.what == "trace":
        head, cols, rows = export_trace(run_dir)
        write_rows_csv(dest, cols, rows, head)
    elif args.what in ("archive", "grid"):
        comment, cols, data = read_matrix_csv(_need(run_dir, args.what))
        write_matrix_csv(dest, data, cols, comment)
    else:
        comment, cols, rows = read_csv(_need(run_dir, "metrics_csv"))
        write_rows_csv(dest, cols, rows, comment)
    print(dest)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="qdmoo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one configuration across values of one key")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", default="0", help="comma-separated optimizer seeds")
    p.add_argument("--workers", type=int, help="parallel runs (capped by QDMOO_WORKERS)")
    p.add_argument("--out", help="output root (overrides output.directory)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run the oracle suites")
    p.add_argument("--suite", required=True, choices=["gradients", "theorems", "metrics", "all"])
    p.add_argument("--trials", type=int, help="theorem-suite trials (default 10000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="qdmoo_check", help="report directory")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export", help="write plot-ready CSV from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--what", required=True, choices=["trace", "archive", "grid", "metrics"])
    p.add_argument("--out", help="destination CSV (default <run>/export_<what>.csv)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigurationError as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except Exception as exc:
        traceback.print_exc()
        _err(f"runtime error: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""Gradient-based optimization of a solution set against batched target objectives."""

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import scalarize
from .objectives import KernelParams, eval_matrix, generate_grid
from .scalarize import SCALARIZATIONS, STCH_FORMS, SmoothParams
from .validation import (ConfigurationError, EvaluationError, check_bounds,
                         check_count, check_positive)


@dataclass
class OptimConfig:
    """Hyperparameters of one set-optimization run.

    ``gamma_sq=None`` resolves to ``d / 6`` for the problem at hand.
    ``solution_batch_size=None`` updates every solution at every step.
    """

    scalarization: str = "stch-set"
    K: int = 1024
    iterations: int = 1000
    batch_size: int = 64
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    mu: float = 0.01
    mu_inner: float = None
    gamma_sq: float = None
    epsilon_ref: float = 0.1
    ref_refresh_interval: int = 1
    eq13_form: str = "appendix-d"
    lambda_mode: str = "uniform"
    seed: int = 0
    grid_M: int = 10_000
    grid_method: str = "sobol"
    grid_seed: int = 0
    checkpoint_interval: int = 100
    solution_batch_size: int = None

    def validate(self):
        if self.scalarization not in SCALARIZATIONS:
            raise ConfigurationError(
                f"scalarization must be one of {SCALARIZATIONS}, got {self.scalarization!r}")
        if self.eq13_form not in STCH_FORMS:
            raise ConfigurationError(f"eq13_form must be one of {STCH_FORMS}")
        if self.lambda_mode != "uniform":
            raise ConfigurationError("lambda_mode must be 'uniform'")
        check_count(self.K, "K")
        check_count(self.iterations, "iterations", minimum=0)
        check_count(self.batch_size, "batch_size")
        check_count(self.grid_M, "grid_M")
        if self.batch_size > self.grid_M:
            raise ConfigurationError("batch_size must not exceed the number of targets")
        check_count(self.checkpoint_interval, "checkpoint_interval")
        check_count(self.ref_refresh_interval, "ref_refresh_interval")
        for name in ("lr", "mu", "epsilon_ref", "eps_adam"):
            check_positive(getattr(self, name), name)
        if self.gamma_sq is not None:
            check_positive(self.gamma_sq, "gamma_sq")
        if self.mu_inner is not None:
            check_positive(self.mu_inner, "mu_inner")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1), got {value}")
        if self.solution_batch_size is not None:
            check_count(self.solution_batch_size, "solution_batch_size")
        return self

    def resolved_gamma_sq(self, d):
        return d / 6.0 if self.gamma_sq is None else float(self.gamma_sq)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    @classmethod
    def zeros_like(cls, X, cfg):
        return cls(m=np.zeros_like(X), v=np.zeros_like(X), t=0, lr=cfg.lr,
                   beta1=cfg.beta1, beta2=cfg.beta2, eps_adam=cfg.eps_adam)

    def update(self, grad, rows=None):
        """Return the parameter increment for ``grad`` and advance the moments.

        With ``rows`` given, only those solutions' moments move.
        """
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        sel = slice(None) if rows is None else rows
        g = grad[sel]
        self.m[sel] = b1 * self.m[sel] + (1.0 - b1) * g
        self.v[sel] = b2 * self.v[sel] + (1.0 - b2) * g * g
        m_hat = self.m[sel] / (1.0 - b1 ** self.t)
        v_hat = self.v[sel] / (1.0 - b2 ** self.t)
        delta = np.zeros_like(grad)
        delta[sel] = -self.lr * m_hat / (np.sqrt(v_hat) + self.eps_adam)
        return delta


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    header: dict = field(default_factory=dict)
    reference: object = None
    grid: object = None

    def g_values(self):
        return np.array([r["g_value"] for r in self.records])


def init_population(bounds, K, seed):
    """``K`` points drawn i.i.d. uniformly from the box ``bounds``."""
    K = check_count(K, "K")
    bounds = check_bounds(bounds, allow_degenerate=True)
    rng = np.random.default_rng(seed)
    lo, hi = bounds[:, 0], bounds[:, 1]
    return lo + rng.random((K, bounds.shape[0])) * (hi - lo)


def sample_batch(M, batch_size, rng):
    """Yield objective batches forever, walking a fresh permutation each epoch.

    Every epoch covers ``range(M)`` exactly once; when ``batch_size`` does not
    divide ``M`` the last batch of an epoch is shorter.
    """
    M = check_count(M, "M")
    batch_size = check_count(batch_size, "batch_size")
    if batch_size > M:
        raise ConfigurationError("batch_size must not exceed M")
    while True:
        perm = rng.permutation(M)
        for start in range(0, M, batch_size):
            yield perm[start:start + batch_size]


def _locate_nonfinite(V, W, grad):
    bad_k = np.flatnonzero(~np.all(np.isfinite(grad), axis=1))
    k = int(bad_k[0]) if bad_k.size else 0
    if V is None:
        return None, k
    col_bad = ~np.isfinite(V.values[:, k]) | ~np.isfinite(W[:, k])
    rows = np.flatnonzero(col_bad)
    i = int(rows[0]) if rows.size else int(np.argmax(np.abs(W[:, k])))
    return int(V.index_map[i]), k


def step(X, adam, batch, cfg, problem, grid, zref, lam=None, rows=None):
    """One optimizer step; returns ``(X_new, adam, zref, record)``.

    ``rows`` optionally restricts the step to a subset of solutions.
    """
    t0 = time.perf_counter()
    kernel = KernelParams(cfg.resolved_gamma_sq(problem.d))
    sub = X if rows is None else X[rows]
    evals = problem.evaluate(sub)
    V = None
    W = None
    kind = cfg.scalarization
    if kind == "squad":
        value, ascent = scalarize.squad_value(evals, kernel.gamma_sq)
        # SQUAD is maximized; descend on its negation and trace that
        grad_sub = -ascent
        value = -value
    else:
        V = eval_matrix(sub, grid, batch, kernel, problem, evals=evals)
        lam_b = None if lam is None else np.asarray(lam)[V.index_map]
        if kind in ("tch-set", "stch-set"):
            stale = not np.all(np.isfinite(zref.z[V.index_map]))
            if stale or adam.t % cfg.ref_refresh_interval == 0:
                zref = scalarize.update_reference_point(V, cfg.epsilon_ref, prior=zref)
        sp = SmoothParams(cfg.mu, cfg.mu_inner)
        res = scalarize.scalarize(kind, V, z=zref, sp=sp, lam=lam_b, form=cfg.eq13_form)
        value, W = res.value, res.weight_matrix
        grad_sub = V.compose_gradient(W)
    if not np.all(np.isfinite(grad_sub)):
        m, k = _locate_nonfinite(V, W, grad_sub)
        k_global = k if rows is None else int(np.asarray(rows)[k])
        raise EvaluationError(
            f"non-finite gradient at step {adam.t + 1}: objective m={m}, solution k={k_global}")
    if rows is None:
        grad = grad_sub
    else:
        grad = np.zeros_like(X)
        grad[rows] = grad_sub
    delta = adam.update(grad, rows=rows)
    lo, hi = problem.spec.solution_bounds[:, 0], problem.spec.solution_bounds[:, 1]
    X_new = np.clip(X + delta, lo, hi)
    record = {"iter": adam.t, "g_value": float(value),
              "wall_ms": (time.perf_counter() - t0) * 1e3,
              "batch": np.asarray(batch).tolist()}
    return X_new, adam, zref, record


def run(cfg, problem, grid=None, metrics_fn=None, trace_file=None, X0=None):
    """Run the full optimization loop.

    Parameters
    ----------
    cfg : OptimConfig
    problem : Problem
    grid : BehaviorGrid, optional
        Target behaviors; generated from ``cfg`` when omitted.
    metrics_fn : callable, optional
        ``metrics_fn(X) -> dict`` evaluated on the initial set, every
        ``checkpoint_interval`` steps and after the final step.
    trace_file : file object, optional
        Receives one JSON line per iteration and per checkpoint, flushed as written.
    X0 : ndarray, optional
        Initial population; drawn uniformly in bounds otherwise.

    Returns
    -------
    X : ndarray of shape (K, n)
    trace : RunTrace
    """
    cfg.validate()
    if grid is None:
        grid = generate_grid(problem.spec.behavior_bounds, cfg.grid_M, cfg.grid_method,
                             cfg.grid_seed)
    if cfg.batch_size > grid.M:
        raise ConfigurationError("batch_size must not exceed the number of targets")
    pop_seq, batch_seq, sub_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    X = init_population(problem.spec.solution_bounds, cfg.K, pop_seq) if X0 is None \
        else np.array(X0, dtype=float)
    adam = AdamState.zeros_like(X, cfg)
    zref = scalarize.ReferencePoint(z=np.full(grid.M, np.inf), epsilon=cfg.epsilon_ref)
    batches = sample_batch(grid.M, cfg.batch_size, np.random.default_rng(batch_seq))
    sub_rng = np.random.default_rng(sub_seq)
    trace = RunTrace()

    def emit(rec):
        if trace_file is not None:
            trace_file.write(json.dumps(rec) + "\n")
            trace_file.flush()

    def checkpoint(it):
        snap = {"type": "checkpoint", "iter": it, "metrics": metrics_fn(X.copy())}
        trace.checkpoints.append(snap)
        emit(snap)

    if metrics_fn is not None:
        checkpoint(0)
    for it in range(1, cfg.iterations + 1):
        batch = next(batches)
        rows = None
        if cfg.solution_batch_size is not None and cfg.solution_batch_size < cfg.K:
            rows = np.sort(sub_rng.choice(cfg.K, cfg.solution_batch_size, replace=False))
        X, adam, zref, rec = step(X, adam, batch, cfg, problem, grid, zref, rows=rows)
        trace.records.append(rec)
        emit({"type": "iter", **rec})
        if metrics_fn is not None and (it % cfg.checkpoint_interval == 0 or it == cfg.iterations):
            checkpoint(it)
    trace.reference = zref
    trace.grid = grid
    return X, trace

"""Brute-force and finite-difference verifiers for the scalarizations, gradients and metrics.

The suites return plain-dict reports (JSON serializable). A report passes only when
every check has zero failures; failed checks carry their counterexamples.
"""

import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import metrics, scalarize
from .objectives import (BehaviorGrid, KernelParams, eval_matrix, eval_vtilde,
                         generate_grid, grad_vtilde)
from .problem import LinearProjection, ShiftedSphereProblem, toy_sphere_problem
from .validation import ConfigurationError, EvaluationError, check_count, check_positive

RELATIONS = ("strictly-dominates", "dominates", "equal", "dominated", "strictly-dominated",
             "incomparable")
MAX_COUNTEREXAMPLES = 20


def finite_diff_gradient(fn, x, h=1e-5):
    """Central differences ``(fn(x + h e_i) - fn(x - h e_i)) / 2h`` for every coordinate."""
    check_positive(h, "h")
    x = np.array(x, dtype=float)
    flat = x.ravel()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"non-finite function value near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def rel_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.linalg.norm(a), floor))


# -- dominance --------------------------------------------------------------

@dataclass(frozen=True)
class DominanceVerdict:
    """Relation of ``va`` to ``vb`` under minimization.

    ``better`` lists objectives where ``va`` is strictly lower, ``worse`` where it
    is strictly higher.
    """

    relation: str
    better: tuple = ()
    worse: tuple = ()

    @property
    def dominates(self):
        return self.relation in ("dominates", "strictly-dominates")


def dominance(va, vb):
    va = np.asarray(va, dtype=float).ravel()
    vb = np.asarray(vb, dtype=float).ravel()
    if va.shape != vb.shape:
        raise ConfigurationError(f"vectors differ in length: {va.size} vs {vb.size}")
    better = tuple(int(i) for i in np.flatnonzero(va < vb))
    worse = tuple(int(i) for i in np.flatnonzero(va > vb))
    if not better and not worse:
        rel = "equal"
    elif not worse:
        rel = "strictly-dominates" if len(better) == va.size else "dominates"
    elif not better:
        rel = "strictly-dominated" if len(worse) == va.size else "dominated"
    else:
        rel = "incomparable"
    return DominanceVerdict(rel, better, worse)


@dataclass
class ParetoResult:
    status: str
    witness: int = None
    verdict: DominanceVerdict = None


def pareto_check(candidates, pool, evaluator, chunk=4096):
    """Scan ``pool`` for members dominating each candidate.

    ``evaluator(X)`` maps an ``(N, n)`` batch to ``(N, M)`` objective values
    (lower is better). The scan is exact; the first dominating pool index is
    reported as the witness.
    """
    Vc = np.atleast_2d(evaluator(np.atleast_2d(candidates)))
    pool = np.atleast_2d(pool)
    out = []
    found = [None] * Vc.shape[0]
    for start in range(0, pool.shape[0], chunk):
        Vp = np.atleast_2d(evaluator(pool[start:start + chunk]))
        for c in range(Vc.shape[0]):
            if found[c] is not None:
                continue
            le = np.all(Vp <= Vc[c], axis=1)
            lt = np.any(Vp < Vc[c], axis=1)
            hit = np.flatnonzero(le & lt)
            if hit.size:
                found[c] = start + int(hit[0])
    for c, w in enumerate(found):
        if w is None:
            out.append(ParetoResult("non-dominated-in-pool"))
        else:
            v = dominance(evaluator(pool[w:w + 1])[0], Vc[c])
            out.append(ParetoResult("dominated", w, v))
    return out


def make_pool(candidates, bounds, n_uniform=5000, n_perturb=5000, seed=0, scale=0.01):
    """Uniform box samples plus Gaussian perturbations of the candidates, clipped to bounds."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    rng = np.random.default_rng(seed)
    uni = lo + rng.random((n_uniform, lo.size)) * (hi - lo)
    base = candidates[rng.integers(0, candidates.shape[0], n_perturb)]
    pert = base + rng.normal(0.0, scale * (hi - lo), base.shape)
    return np.vstack([uni, np.clip(pert, lo, hi)])


def vtilde_evaluator(problem, grid, gamma_sq):
    """Per-solution objective vectors ``v_m(x)`` over every grid target."""
    k = KernelParams(gamma_sq)
    idx = np.arange(grid.M)

    def evaluate(X):
        return eval_matrix(X, grid, idx, k, problem).values.T
    return evaluate


# -- theorem suite ----------------------------------------------------------

class _Tally:
    def __init__(self):
        self.checks = {}
        self.counterexamples = []

    def record(self, name, ok, payload):
        c = self.checks.setdefault(name, {"passed": 0, "failed": 0})
        if ok:
            c["passed"] += 1
        else:
            c["failed"] += 1
            if len(self.counterexamples) < MAX_COUNTEREXAMPLES:
                self.counterexamples.append({"check": name, **payload})

    def report(self, suite, t0, **extra):
        failed = sum(c["failed"] for c in self.checks.values())
        return {"suite": suite, "passed": failed == 0, "violations": failed,
                "checks": self.checks, "counterexamples": self.counterexamples,
                "seconds": time.perf_counter() - t0, **extra}


def _tol(*vals):
    return 1e-10 * (1.0 + max(abs(float(v)) for v in vals))


def _values(V, z, sp):
    return {
        "som": scalarize.som_value(V).value,
        "ssom": scalarize.ssom_value(V, sp).value,
        "stch-set": scalarize.stch_set_value(V, z, sp).value,
        "tch-set": scalarize.tch_set_value(V, z).value,
    }


def _tch_existence_trial(rng):
    """Brute-force TCH-Set optimum over pairs of 5 candidates contains a Pareto-optimal set."""
    V = rng.normal(size=(3, 5))
    z = np.min(V, axis=1) - 0.1
    sets = list(itertools.combinations(range(5), 2))
    vecs = np.array([np.min(V[:, s], axis=1) for s in sets])
    vals = np.array([np.max(v - z) for v in vecs])
    best = np.flatnonzero(vals <= vals.min())
    for i in best:
        if not any(dominance(vecs[j], vecs[i]).dominates for j in range(len(sets))):
            return True, V
    return False, V


def theorem_suite(seed=0, trials=10_000, mus=(1.0, 0.1, 0.01)):
    """Randomized checks of monotonicity, supermodularity and the smoothing sandwich.

    Each trial draws ``V`` with 2-20 objectives and a set ``W`` of 2-10 solutions,
    a nested subset ``U`` and an extra column ``x'``. TCH-Set monotonicity uses a
    shared scalar reference point; TCH-Set supermodularity is checked on instances
    whose argmax objective is aligned by construction.
    """
    trials = check_count(trials, "trials")
    t0 = time.perf_counter()
    tally = _Tally()
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        M = int(rng.integers(2, 21))
        Wn = int(rng.integers(2, 11))
        Un = int(rng.integers(1, Wn + 1))
        mu = float(mus[trial % len(mus)])
        sp = scalarize.SmoothParams(mu)
        V = rng.normal(size=(M, Wn + 1))
        extra = V[:, Wn:]
        VW = V[:, :Wn]
        U = np.sort(rng.choice(Wn, Un, replace=False))
        VU = VW[:, U]
        z_vec = rng.normal(size=M) - 3.0
        z_eq = float(rng.normal()) - 3.0
        payload = {"trial": trial, "seed": seed, "mu": mu, "U": U.tolist(),
                   "V": V.tolist(), "z": z_vec.tolist(), "z_equal": z_eq}

        gU = _values(VU, z_vec, sp)
        gW = _values(VW, z_vec, sp)
        gU1 = _values(np.hstack([VU, extra]), z_vec, sp)
        gW1 = _values(np.hstack([VW, extra]), z_vec, sp)
        for name in ("som", "ssom", "stch-set"):
            tol = _tol(gU[name], gW[name])
            tally.record(f"monotonicity/{name}", gU[name] >= gW[name] - tol, payload)
            lhs = gU[name] - gU1[name]
            rhs = gW[name] - gW1[name]
            tol = _tol(gU[name], gW[name], gU1[name], gW1[name])
            tally.record(f"supermodularity/{name}", lhs >= rhs - tol, payload)

        tU = scalarize.tch_set_value(VU, z_eq).value
        tW = scalarize.tch_set_value(VW, z_eq).value
        tally.record("monotonicity/tch-set", tU >= tW - _tol(tU, tW), payload)

        # aligned instance: one objective dominates the max for every subset
        Va = V.copy()
        row = int(rng.integers(0, M))
        Va[row] += 100.0
        tcu = scalarize.tch_set_value(Va[:, :Wn][:, U], z_eq).value
        tcu1 = scalarize.tch_set_value(np.hstack([Va[:, :Wn][:, U], Va[:, Wn:]]), z_eq).value
        tcw = scalarize.tch_set_value(Va[:, :Wn], z_eq).value
        tcw1 = scalarize.tch_set_value(Va, z_eq).value
        tally.record("supermodularity/tch-set-aligned",
                     tcu - tcu1 >= tcw - tcw1 - _tol(tcu, tcu1, tcw, tcw1),
                     {**payload, "aligned_row": row})

        K = Wn
        gap = gW["som"] - gW["ssom"]
        bound = mu * M * np.log(K)
        tally.record("sandwich/ssom", -_tol(gW["som"]) <= gap <= bound + _tol(gW["som"]),
                     payload)
        gap = gW["stch-set"] - gW["tch-set"]
        tally.record("sandwich/stch-set",
                     -mu * np.log(K) - _tol(gW["tch-set"]) <= gap
                     <= mu * np.log(M) + _tol(gW["tch-set"]), payload)

        ok, Vt = _tch_existence_trial(rng)
        tally.record("existence/tch-set", ok, {"trial": trial, "seed": seed, "V": Vt.tolist()})
    return tally.report("theorems", t0, trials=trials, seed=seed)


# -- gradient suite ---------------------------------------------------------

def _set_value_fn(problem, grid, batch, kernel, kind, sp, z):
    def fn(Xflat):
        X = Xflat.reshape(-1, problem.n)
        V = eval_matrix(X, grid, batch, kernel, problem)
        return scalarize.scalarize(kind, V, z=z, sp=sp).value
    return fn


def _composed_grad(problem, X, grid, batch, kernel, kind, sp, z):
    V = eval_matrix(X, grid, batch, kernel, problem)
    if kind == "ssom":
        res = scalarize.ssom_value(V, sp)
    elif kind == "som":
        res = scalarize.som_value(V)
    else:
        res = scalarize.stch_set_value(V, z, sp)
    return V.compose_gradient(res.weight_matrix)


def _interior(rng, lo, hi, shape, margin=1e-3):
    return lo + margin + rng.random(shape) * (hi - lo - 2 * margin)


def _near_targets(rng, problem, X, count, gamma_sq):
    """Targets mostly within a kernel width of the set's behaviors.

    Far targets contribute kernels that underflow, leaving gradients below
    finite-difference roundoff, so only a third are drawn uniformly.
    """
    bb = problem.spec.behavior_bounds
    b = problem.evaluate(X).b
    n_far = count // 3
    near = b[rng.integers(0, b.shape[0], count - n_far)]
    near = near + rng.normal(0.0, 0.5 * np.sqrt(gamma_sq), near.shape)
    far = bb[:, 0] + rng.random((n_far, bb.shape[0])) * (bb[:, 1] - bb[:, 0])
    pts = np.clip(np.vstack([near, far]), bb[:, 0], bb[:, 1])
    return BehaviorGrid(points=pts, bounds=bb, method="near", seed=0)


def gradient_suite(seed=0, points=20, K=3, batch=6, mu=0.01, tol=1e-4):
    """Analytic gradients against central differences on the toy sphere and LP (n = 32)."""
    points = check_count(points, "points")
    t0 = time.perf_counter()
    tally = _Tally()
    cases = [("sphere", toy_sphere_problem(4, 2), ShiftedSphereProblem(4, 2)),
             ("lp", LinearProjection(32, 4), None)]
    sp = scalarize.SmoothParams(mu)
    for label, problem, squad_problem in cases:
        rng = np.random.default_rng([seed, len(label)])
        kernel = KernelParams.default_for(problem.d)
        lo, hi = problem.spec.solution_bounds[:, 0], problem.spec.solution_bounds[:, 1]
        for p in range(points):
            X = _interior(rng, lo, hi, (K, problem.n))
            grid = _near_targets(rng, problem, X, batch, kernel.gamma_sq)
            idx = np.arange(grid.M)
            info = {"problem": label, "point": p, "X": X.tolist(),
                    "targets": grid.points.tolist()}

            ev = problem.evaluate_one(X[0])
            b_m = grid.points[idx[0]]
            fd = finite_diff_gradient(
                lambda x: eval_vtilde(problem.evaluate_one(x), b_m, kernel), X[0], h=1e-5)
            err = rel_error(grad_vtilde(ev, b_m, kernel), fd)
            tally.record(f"vtilde/{label}", err <= tol, {**info, "rel_error": err})

            V0 = eval_matrix(X, grid, idx, kernel, problem)
            z = scalarize.update_reference_point(V0, 0.1).z[idx]
            for kind in ("som", "ssom", "stch-set"):
                fn = _set_value_fn(problem, grid, idx, kernel, kind, sp, z)
                fd = finite_diff_gradient(fn, X.ravel(), h=1e-6).reshape(X.shape)
                an = _composed_grad(problem, X, grid, idx, kernel, kind, sp, z)
                err = rel_error(an, fd)
                tally.record(f"{kind}/{label}", err <= tol, {**info, "rel_error": err})

            sq = squad_problem or problem
            Xs = _interior(rng, sq.spec.solution_bounds[:, 0], sq.spec.solution_bounds[:, 1],
                           (K, sq.n))
            _, an = scalarize.squad_value(sq.evaluate(Xs), kernel.gamma_sq)
            fd = finite_diff_gradient(
                lambda xf: scalarize.squad_value(sq.evaluate(xf.reshape(K, -1)),
                                                 kernel.gamma_sq)[0],
                Xs.ravel(), h=1e-6).reshape(Xs.shape)
            err = rel_error(an, fd)
            tally.record(f"squad/{label}", err <= tol,
                         {**info, "X": Xs.tolist(), "rel_error": err})
    return tally.report("gradients", t0, points=points, seed=seed)


# -- metrics suite ----------------------------------------------------------

def _trapezoid_soft_qd(f, b, sigma, lo, hi, n=1_000_001):
    grid = np.linspace(lo, hi, n)
    v = np.max(f[None, :] * np.exp(-(grid[:, None] - b[None, :]) ** 2 / (2 * sigma ** 2)),
               axis=1)
    return float(np.trapezoid(v, grid))


def metrics_suite(seed=0):
    """Closed-form and quadrature checks of the metric implementations."""
    t0 = time.perf_counter()
    tally = _Tally()
    rng = np.random.default_rng(seed)

    B = np.tile(rng.normal(size=3), (7, 1))
    vs = metrics.vendi_score(B, 3)
    tally.record("vendi/identical", abs(vs - 1.0) <= 1e-10, {"vendi": vs})

    B = np.arange(6)[:, None] * np.full((1, 2), 1e3)
    vs = metrics.vendi_score(B, 2)
    tally.record("vendi/identity", abs(vs - 6.0) <= 1e-10, {"vendi": vs})

    for trial in range(5):
        dist_sq = float(rng.uniform(0.01, 2.0))
        sig = 1.0 / 6.0
        rho = np.exp(-dist_sq / sig)
        B = np.array([[0.0], [np.sqrt(dist_sq)]])
        lam = np.array([(1 + rho) / 2, (1 - rho) / 2])
        lam = lam[lam > 0]
        expected = float(np.exp(-np.sum(lam * np.log(lam))))
        vs = metrics.vendi_score(B, 1)
        tally.record("vendi/2x2", abs(vs - expected) <= 1e-10,
                     {"rho": rho, "vendi": vs, "expected": expected})

    tally.record("qvs/floor", metrics.qvs(3.0, -2.0) == 0.0, {})
    tally.record("qvs/product", metrics.qvs(4.0, 50.0) == 200.0, {})

    lo, hi = -5.12, 5.12
    mc = np.linspace(lo, hi, 200_001)[:, None]
    for trial in range(3):
        f = rng.uniform(10, 100, 2)
        b = rng.uniform(lo, hi, 2)
        sigma = float(rng.uniform(0.2, 1.0))
        est, _ = metrics.soft_qd_estimate(f, b[:, None], sigma, mc, bounds=[[lo, hi]])
        ref = _trapezoid_soft_qd(f, b, sigma, lo, hi)
        rel = abs(est - ref) / ref
        tally.record("soft_qd/quadrature", rel <= 0.01,
                     {"f": f.tolist(), "b": b.tolist(), "sigma": sigma, "rel_error": rel})

    arc = metrics.build_cvt([[0.0, 1.0], [0.0, 1.0]], cells=16, seed=seed)
    Bs = rng.random((100, 2))
    Fs = rng.uniform(0, 10, 100)
    metrics.archive_insert_batch(arc, Bs, Fs)
    cells = np.argmin(((Bs[:, None, :] - arc.centroids[None]) ** 2).sum(-1), axis=1)
    brute = np.full(16, np.nan)
    for c, fv in zip(cells, Fs):
        brute[c] = fv if np.isnan(brute[c]) else max(brute[c], fv)
    ok = np.array_equal(np.isnan(brute), np.isnan(arc.best_f)) and \
        np.allclose(np.nan_to_num(brute), np.nan_to_num(arc.best_f), rtol=0, atol=0)
    tally.record("archive/brute-force", bool(ok), {})
    return tally.report("metrics", t0, seed=seed)


SUITES = {"theorems": theorem_suite, "gradients": gradient_suite, "metrics": metrics_suite}

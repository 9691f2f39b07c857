"""Target behavior grids and the kernel-weighted objectives built on them.

Every target ``b_m`` defines one minimization objective

    v_m(x) = -f(x) * exp(-||b_m - b(x)||^2 / gamma_sq)

so a dense grid of targets turns QD into a many-objective problem.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .validation import (ConfigurationError, check_bounds, check_count,
                         check_positive)

GRID_METHODS = ("sobol", "uniform", "lattice")


@dataclass(frozen=True)
class KernelParams:
    gamma_sq: float

    def __post_init__(self):
        check_positive(self.gamma_sq, "gamma_sq")

    @classmethod
    def default_for(cls, d):
        return cls(gamma_sq=d / 6.0)


@dataclass(frozen=True)
class BehaviorGrid:
    points: np.ndarray
    bounds: np.ndarray
    method: str = "sobol"
    seed: int = 0

    @property
    def M(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def to_csv(self, path, header_comment=None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow([f"b{j + 1}" for j in range(self.d)])
            for row in self.points:
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, bounds, method="sobol", seed=0):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        points = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        return cls(points=points, bounds=check_bounds(bounds, points.shape[1]),
                   method=method, seed=seed)


def _unit_points(M, d, method, seed):
    if method == "sobol":
        # unscrambled, skipping the origin: the first point is the box center
        engine = qmc.Sobol(d, scramble=False)
        engine.fast_forward(1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return engine.random(M)
    if method == "uniform":
        return np.random.default_rng(seed).random((M, d))
    if method == "lattice":
        # Kronecker lattice with generalized golden-ratio increments, centered at i=0
        phi = 2.0
        for _ in range(64):
            phi = (1.0 + phi) ** (1.0 / (d + 1))
        alpha = (1.0 / phi) ** np.arange(1, d + 1)
        return np.mod(0.5 + np.arange(M)[:, None] * alpha[None, :], 1.0)
    raise ConfigurationError(f"unknown grid method {method!r}; choose from {GRID_METHODS}")


def generate_grid(bounds, M, method="sobol", seed=0):
    """Sample ``M`` target behaviors covering the ``bounds`` box.

    ``sobol`` and ``lattice`` are deterministic and place their first point at the
    box center; ``uniform`` depends on ``seed``.
    """
    if isinstance(M, (int, np.integer)) and M == 0:
        raise ConfigurationError("M must be >= 1")
    M = check_count(M, "M")
    bounds = check_bounds(bounds)
    unit = _unit_points(M, bounds.shape[0], method, seed)
    lo, hi = bounds[:, 0], bounds[:, 1]
    points = lo + unit * (hi - lo)
    return BehaviorGrid(points=np.ascontiguousarray(points), bounds=bounds.copy(),
                        method=method, seed=int(seed))


def eval_vtilde(ev, b_m, k):
    """Kernel-weighted negative quality of one evaluation for target ``b_m``."""
    r = np.asarray(b_m, dtype=float) - ev.b
    return float(-ev.f * np.exp(-np.sum(r * r) / k.gamma_sq))


def grad_vtilde(ev, b_m, k):
    """Exact gradient of :func:`eval_vtilde` with respect to ``x``."""
    r = np.asarray(b_m, dtype=float) - ev.b
    e = np.exp(-np.sum(r * r) / k.gamma_sq)
    return -e * ev.grad_f - (2.0 * ev.f * e / k.gamma_sq) * (ev.jac_b.T @ r)


@dataclass
class ObjectiveMatrix:
    """Objective values for a batch of targets against a solution set.

    ``values[i, k]`` is ``v_{index_map[i]}(x_k)``. The kernel factors and
    batch targets are cached so that :meth:`compose_gradient` can turn any weight
    matrix into per-solution gradients without re-evaluating the problem.
    """

    values: np.ndarray
    index_map: np.ndarray
    evals: object
    kernel: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    gamma_sq: float = 1.0

    @property
    def shape(self):
        return self.values.shape

    def compose_gradient(self, W):
        """Return ``(K, n)`` rows ``sum_i W[i, k] * grad v_{m(i)}(x_k)``."""
        W = np.asarray(W, dtype=float)
        if W.shape != self.values.shape:
            raise ConfigurationError(f"weight matrix shape {W.shape} != {self.values.shape}")
        WE = W * self.kernel                                    # (B, K)
        a = WE.sum(axis=0)                                      # (K,)
        # sum_i WE[i,k] (b_i - b_k) = WE^T b - a_k b_k
        pull = WE.T @ self.targets - a[:, None] * self.evals.b  # (K, d)
        coef = 2.0 * self.evals.f / self.gamma_sq
        return -a[:, None] * self.evals.grad_f - self.evals.jac_b_T(coef[:, None] * pull)


def eval_matrix(solutions, grid, batch, k, problem, evals=None):
    """Evaluate the batch objectives on every solution (each solution evaluated once).

    ``evals`` may carry a precomputed :class:`~qdmoo.problem.BatchEvaluation` of
    ``solutions``.
    """
    idx = np.asarray(batch, dtype=np.intp).ravel()
    if idx.size == 0:
        raise ConfigurationError("batch must contain at least one objective index")
    if idx.min() < 0 or idx.max() >= grid.M:
        raise ConfigurationError(f"batch indices must lie in [0, {grid.M})")
    if evals is None:
        evals = problem.evaluate(solutions)
    targets = grid.points[idx]
    diff = targets[:, None, :] - evals.b[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    kernel = np.exp(-sq / k.gamma_sq)
    values = -evals.f[None, :] * kernel
    return ObjectiveMatrix(values=values, index_map=idx, evals=evals, kernel=kernel,
                           targets=targets, gamma_sq=k.gamma_sq)

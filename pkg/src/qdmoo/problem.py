"""Differentiable QD problems: quality ``f``, behavior ``b`` and their derivatives.

Two problems ship with the package:

* :class:`LinearProjection`, the shifted-Rastrigin benchmark whose behavior is a
  block-wise aggregate of clipped solution components;
* :func:`toy_sphere_problem`, a closed-form problem used by the oracle tests.

All evaluations are pure functions of their inputs.
"""

import functools
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .validation import (ConfigurationError, check_bounds, check_count,
                         check_solutions, check_vector)

LP_BOUND = 5.12
LP_SHIFT = 2.048

DESCRIPTOR_FACTORS = ("mean", "paper-literal")


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    d: int
    solution_bounds: np.ndarray
    behavior_bounds: np.ndarray

    def __post_init__(self):
        check_count(self.n, "n")
        check_count(self.d, "d")
        if self.d > self.n:
            raise ConfigurationError(f"need n >= d, got n={self.n}, d={self.d}")
        object.__setattr__(self, "solution_bounds", check_bounds(
            self.solution_bounds, self.n, "solution_bounds"))
        object.__setattr__(self, "behavior_bounds", check_bounds(
            self.behavior_bounds, self.d, "behavior_bounds"))


@dataclass(frozen=True)
class Evaluation:
    """Quality, behavior and their derivatives at a single point."""

    f: float
    grad_f: np.ndarray
    b: np.ndarray
    jac_b: np.ndarray


@dataclass(frozen=True)
class BatchEvaluation:
    """Evaluations of ``K`` solutions, with the Jacobian kept implicit.

    ``jac_b_T(cot)`` returns ``J_b(x_k)^T cot_k`` for every solution, which is the
    only Jacobian product the set gradients need.
    """

    x: np.ndarray
    f: np.ndarray
    grad_f: np.ndarray
    b: np.ndarray
    problem: "Problem"

    def __len__(self):
        return self.f.shape[0]

    def jac_b_T(self, cot):
        return self.problem.behavior_vjp(self.x, cot)

    def __getitem__(self, k):
        return Evaluation(f=float(self.f[k]), grad_f=self.grad_f[k], b=self.b[k],
                          jac_b=self.problem.behavior_jacobian(self.x[k]))


class Problem(ABC):
    """Base class for differentiable QD problems."""

    spec: ProblemSpec
    name = "problem"

    @property
    def n(self):
        return self.spec.n

    @property
    def d(self):
        return self.spec.d

    @abstractmethod
    def _quality(self, X):
        """Return ``(f, grad_f)`` for a ``(K, n)`` batch."""

    @abstractmethod
    def _behavior(self, X):
        """Return the ``(K, d)`` behavior descriptors."""

    @abstractmethod
    def behavior_vjp(self, X, cot):
        """Return ``(K, n)`` rows ``J_b(x_k)^T cot_k`` for ``cot`` of shape ``(K, d)``."""

    def behavior_jacobian(self, x):
        """Dense ``(d, n)`` Jacobian at a single point (built from the VJP)."""
        x = np.asarray(x, dtype=float)
        rows = [self.behavior_vjp(x[None, :], e[None, :])[0] for e in np.eye(self.d)]
        return np.stack(rows)

    def evaluate(self, X):
        X = check_solutions(X, self.n)
        f, grad_f = self._quality(X)
        return BatchEvaluation(x=X, f=f, grad_f=grad_f, b=self._behavior(X), problem=self)

    def evaluate_one(self, x):
        x = check_vector(x, self.n)
        return self.evaluate(x[None, :])[0]


# -- Linear Projection ------------------------------------------------------

def _rastrigin_terms(s):
    return s * s - 10.0 * np.cos(2.0 * np.pi * s) + 10.0


@functools.lru_cache(maxsize=None)
def _rastrigin_dim_max():
    grid = np.linspace(-LP_BOUND, LP_BOUND, 1_000_001)
    vals = _rastrigin_terms(grid - LP_SHIFT)
    i = int(np.argmax(vals))
    step = grid[1] - grid[0]
    lo, hi = max(-LP_BOUND, grid[i] - step), min(LP_BOUND, grid[i] + step)
    res = minimize_scalar(lambda t: -_rastrigin_terms(t - LP_SHIFT), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return float(max(vals[i], -res.fun))


def lp_max_rastrigin(n):
    """Maximum of the shifted Rastrigin function over ``[-5.12, 5.12]^n``."""
    check_count(n, "n")
    return n * _rastrigin_dim_max()


def lp_objective(x, n=None):
    """Normalized shifted-Rastrigin quality in ``[0, 100]`` and its gradient."""
    x = check_vector(x, n)
    f, g = _lp_quality(x[None, :])
    return float(f[0]), g[0]


def _lp_quality(X):
    n = X.shape[1]
    s = X - LP_SHIFT
    total = _rastrigin_terms(s).sum(axis=1)
    m = lp_max_rastrigin(n)
    f = 100.0 * (m - total) / m
    grad = (-100.0 / m) * (2.0 * s + 20.0 * np.pi * np.sin(2.0 * np.pi * s))
    return f, grad


def lp_clip(x):
    """Clip with the reciprocal fold: returns ``(y, dy/dx)``."""
    x = float(x)
    if abs(x) <= LP_BOUND:
        return x, 1.0
    return LP_BOUND / x, -LP_BOUND / (x * x)


def _clip_array(X):
    inside = np.abs(X) <= LP_BOUND
    safe = np.where(inside, 1.0, X)
    y = np.where(inside, X, LP_BOUND / safe)
    dy = np.where(inside, 1.0, -LP_BOUND / (safe * safe))
    return y, dy


def _descriptor_scale(n, d, descriptor_factor):
    if descriptor_factor == "mean":
        return d / n
    if descriptor_factor == "paper-literal":
        return 1.0 / d
    raise ConfigurationError(
        f"descriptor_factor must be one of {DESCRIPTOR_FACTORS}, got {descriptor_factor!r}")


def lp_behavior(x, d, descriptor_factor="mean"):
    """Block descriptors of ``x`` and their ``(d, n)`` Jacobian."""
    x = check_vector(x)
    n = x.shape[0]
    if n % d:
        raise ConfigurationError(f"d={d} does not divide n={n}")
    scale = _descriptor_scale(n, d, descriptor_factor)
    y, dy = _clip_array(x)
    b = scale * y.reshape(d, n // d).sum(axis=1)
    jac = np.zeros((d, n))
    block = n // d
    for k in range(d):
        jac[k, k * block:(k + 1) * block] = scale * dy[k * block:(k + 1) * block]
    return b, jac


class LinearProjection(Problem):
    """Shifted Rastrigin with block-aggregated clipped descriptors.

    Parameters
    ----------
    n : int
        Solution dimension, a multiple of ``d``.
    d : int
        Behavior dimension.
    descriptor_factor : {"mean", "paper-literal"}
        Block aggregation factor: ``d/n`` (block mean) or ``1/d``.
    """

    name = "lp"

    def __init__(self, n=1024, d=4, descriptor_factor="mean"):
        check_count(n, "n")
        check_count(d, "d")
        if n % d:
            raise ConfigurationError(f"d={d} does not divide n={n}")
        self.scale = _descriptor_scale(n, d, descriptor_factor)
        self.descriptor_factor = descriptor_factor
        self.spec = ProblemSpec(n=n, d=d,
                                solution_bounds=np.tile([-LP_BOUND, LP_BOUND], (n, 1)),
                                behavior_bounds=np.tile([-LP_BOUND, LP_BOUND], (d, 1)))

    def __repr__(self):
        return (f"LinearProjection(n={self.n}, d={self.d}, "
                f"descriptor_factor={self.descriptor_factor!r})")

    def _quality(self, X):
        return _lp_quality(X)

    def _behavior(self, X):
        y, _ = _clip_array(X)
        return self.scale * y.reshape(X.shape[0], self.d, -1).sum(axis=2)

    def behavior_vjp(self, X, cot):
        _, dy = _clip_array(X)
        block = self.n // self.d
        return self.scale * dy * np.repeat(cot, block, axis=1)


# -- toy problem ------------------------------------------------------------

class SphereProblem(Problem):
    """``f = -||x||^2`` with the first ``d`` coordinates as behavior, on ``[-1, 1]^n``."""

    name = "sphere"

    def __init__(self, n=4, d=2):
        self.spec = ProblemSpec(n=n, d=d, solution_bounds=np.tile([-1.0, 1.0], (n, 1)),
                                behavior_bounds=np.tile([-1.0, 1.0], (d, 1)))

    def __repr__(self):
        return f"SphereProblem(n={self.n}, d={self.d})"

    def _quality(self, X):
        return -np.sum(X * X, axis=1), -2.0 * X

    def _behavior(self, X):
        return X[:, :self.d].copy()

    def behavior_vjp(self, X, cot):
        out = np.zeros_like(X)
        out[:, :self.d] = cot
        return out


def toy_sphere_problem(n, d=2):
    check_count(n, "n")
    check_count(d, "d")
    if n < d:
        raise ConfigurationError(f"need n >= d, got n={n}, d={d}")
    return SphereProblem(n=n, d=d)


class ShiftedSphereProblem(SphereProblem):
    """Sphere variant with non-negative quality ``f = c - ||x||^2``.

    SQUAD needs ``f >= 0``; the offset keeps the toy problem in its domain.
    """

    name = "shifted-sphere"

    def __init__(self, n=4, d=2, offset=None):
        super().__init__(n=n, d=d)
        self.offset = float(n) if offset is None else float(offset)

    def _quality(self, X):
        f, g = super()._quality(X)
        return f + self.offset, g


PROBLEMS = {"lp": LinearProjection, "sphere": toy_sphere_problem}


def make_problem(benchmark, n, d, descriptor_factor="mean"):
    if benchmark == "lp":
        return LinearProjection(n=n, d=d, descriptor_factor=descriptor_factor)
    if benchmark == "sphere":
        return toy_sphere_problem(n, d)
    raise ConfigurationError(f"unknown benchmark {benchmark!r}; choose from {sorted(PROBLEMS)}")

"""Set scalarizations of the many-objective QD problem.

Each scalarization maps an objective matrix ``V`` (targets x solutions, lower is
better) to a scalar ``g`` plus a weight matrix ``W`` of the same shape with

    d g / d x_k = sum_m W[m, k] * grad v_m(x_k)

so the optimizer never differentiates through the reductions itself. The hard
variants (SoM, TCH-Set) return 0/1 subgradient selections with lowest-index
tie-breaking; the smooth variants (SSoM, STCH-Set) return dense softmin/softmax
products. All log-sum-exp reductions are max-shifted.
"""

from dataclasses import dataclass

import numpy as np

from .validation import ConfigurationError, check_positive

SCALARIZATIONS = ("som", "tch-set", "ssom", "stch-set", "squad")
STCH_FORMS = ("appendix-d", "printed-eq13")


@dataclass(frozen=True)
class SmoothParams:
    mu: float = 0.01
    mu_inner: object = None

    def __post_init__(self):
        check_positive(self.mu, "mu")
        if self.mu_inner is not None:
            inner = np.asarray(self.mu_inner, dtype=float)
            if not np.all(np.isfinite(inner)) or np.any(inner <= 0):
                raise ConfigurationError("mu_inner must be > 0")

    def inner(self):
        return self.mu if self.mu_inner is None else np.asarray(self.mu_inner, dtype=float)


@dataclass
class ReferencePoint:
    z: np.ndarray
    epsilon: float = 0.1


@dataclass(frozen=True)
class Weights:
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ConfigurationError("lambda must be a finite non-negative vector")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def ones(cls, M):
        return cls(np.ones(M))


@dataclass
class ScalarizationResult:
    value: float
    weight_matrix: np.ndarray


# -- smooth operators ---------------------------------------------------------

def _logsumexp(a, axis=None):
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


def _softmax(a, axis):
    a = np.asarray(a, dtype=float)
    e = np.exp(a - np.max(a, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_nonempty(values):
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("smooth reductions need at least one value")
    return values


def smooth_min(values, mu):
    """``-mu * log(sum(exp(-a / mu)))``, a lower bound on ``min(a)``."""
    values = _check_nonempty(values)
    check_positive(mu, "mu")
    return float(-mu * _logsumexp(-values / mu))


def smooth_max(values, mu):
    """``mu * log(sum(exp(a / mu)))``, an upper bound on ``max(a)``."""
    values = _check_nonempty(values)
    check_positive(mu, "mu")
    return float(mu * _logsumexp(values / mu))


# -- argument plumbing -----------------------------------------------------------

def _matrix(V):
    vals = getattr(V, "values", V)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim != 2 or vals.size == 0:
        raise ConfigurationError(f"objective matrix must be a non-empty 2-D array, got {vals.shape}")
    return vals


def _lam(lam, B):
    if lam is None:
        return np.ones(B)
    lam = lam.lam if isinstance(lam, Weights) else np.asarray(lam, dtype=float)
    if lam.shape != (B,):
        raise ConfigurationError(f"lambda has shape {lam.shape}, expected ({B},)")
    return lam


def _ref(z, V, B):
    """Reference values aligned with the rows of ``V``.

    A full-length reference point is indexed through ``V.index_map`` when ``V``
    is an objective matrix; plain arrays must already match the rows.
    """
    zz = z.z if isinstance(z, ReferencePoint) else z
    if zz is None:
        raise ConfigurationError("this scalarization needs a reference point")
    zz = np.atleast_1d(np.asarray(zz, dtype=float))
    if zz.size == 1:
        return np.full(B, zz[0])
    idx = getattr(V, "index_map", None)
    if idx is not None and zz.shape[0] > int(np.max(idx)):
        return zz[idx]
    if zz.shape[0] == B:
        return zz
    raise ConfigurationError(f"reference point of length {zz.shape[0]} does not cover {B} rows")


# -- scalarizations ----------------------------------------------------------------

def som_value(V, lam=None):
    """Sum-of-Minimum: ``sum_m lam_m * min_k V[m, k]``."""
    vals = _matrix(V)
    B = vals.shape[0]
    lam = _lam(lam, B)
    kstar = np.argmin(vals, axis=1)
    rows = np.arange(B)
    W = np.zeros_like(vals)
    W[rows, kstar] = lam
    return ScalarizationResult(float(np.sum(lam * vals[rows, kstar])), W)


def tch_set_value(V, z, lam=None):
    """Tchebycheff Set: ``max_m lam_m * (min_k V[m, k] - z_m)``."""
    vals = _matrix(V)
    B = vals.shape[0]
    lam = _lam(lam, B)
    zz = _ref(z, V, B)
    kstar = np.argmin(vals, axis=1)
    rows = np.arange(B)
    per_row = lam * (vals[rows, kstar] - zz)
    mstar = int(np.argmax(per_row))
    W = np.zeros_like(vals)
    W[mstar, kstar[mstar]] = lam[mstar]
    return ScalarizationResult(float(per_row[mstar]), W)


def ssom_value(V, sp, lam=None):
    """Smooth Sum-of-Minimum: ``sum_m lam_m * smin_mu(V[m, :])``."""
    vals = _matrix(V)
    B = vals.shape[0]
    lam = _lam(lam, B)
    mu = sp.mu
    smin = -mu * _logsumexp(-vals / mu, axis=1)
    W = lam[:, None] * _softmax(-vals / mu, axis=1)
    return ScalarizationResult(float(np.sum(lam * smin)), W)


def stch_set_value(V, z, sp, lam=None, form="appendix-d"):
    """Smooth Tchebycheff Set scalarization.

    ``appendix-d`` evaluates ``smax_mu(lam_m * (smin_{mu_m}(V[m, :]) - z_m))``.
    ``printed-eq13`` keeps the reference point outside the ``1/mu`` scaling:
    ``mu * log sum_m exp(lam_m * (smin_{mu_m}(V[m, :]) / mu - z_m))``.
    """
    vals = _matrix(V)
    B = vals.shape[0]
    lam = _lam(lam, B)
    zz = _ref(z, V, B)
    mu = sp.mu
    mu_in = np.broadcast_to(sp.inner(), (B,)) if np.ndim(sp.inner()) else \
        np.full(B, float(sp.inner()))
    smin = -mu_in * _logsumexp(-vals / mu_in[:, None], axis=1)
    inner_w = _softmax(-vals / mu_in[:, None], axis=1)
    if form == "appendix-d":
        h = lam * (smin - zz) / mu
    elif form == "printed-eq13":
        h = lam * (smin / mu - zz)
    else:
        raise ConfigurationError(f"form must be one of {STCH_FORMS}, got {form!r}")
    value = mu * _logsumexp(h)
    outer_w = _softmax(h, axis=0)
    W = (outer_w * lam)[:, None] * inner_w
    return ScalarizationResult(float(value), W)


def squad_value(evals, gamma_sq):
    """SQUAD lower bound on the soft QD score and its per-solution gradients.

    Returns ``(value, grads)`` where ``grads`` has shape ``(K, n)`` and points in
    the ascent direction (SQUAD is maximized).
    """
    check_positive(gamma_sq, "gamma_sq")
    f = np.asarray(evals.f, dtype=float)
    if np.any(f < 0):
        raise ConfigurationError(
            "SQUAD needs non-negative quality (sqrt(f_i f_j)); shift or clamp the "
            "quality function before using it")
    b = evals.b
    sq = np.sum(b * b, axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (b @ b.T), 0.0)
    E = np.exp(-D / gamma_sq)
    np.fill_diagonal(E, 0.0)
    sf = np.sqrt(f)
    R = E * np.outer(sf, sf)
    value = float(np.sum(f) - 0.5 * np.sum(R))
    # d sqrt(f_i f_j) / d f_i = sqrt(f_j) / (2 sqrt(f_i)); guard f_i = 0
    quality_coef = 1.0 - (E @ sf) / (2.0 * np.maximum(sf, 1e-12))
    r = R.sum(axis=1)
    pull = r[:, None] * b - R @ b
    grads = quality_coef[:, None] * evals.grad_f + evals.jac_b_T((2.0 / gamma_sq) * pull)
    return value, grads


def update_reference_point(V, epsilon, prior=None, M=None):
    """Refresh ``z_m <- min(z_m, min_k V[m, k] - epsilon)`` on the rows of ``V``.

    Rows outside the batch keep their prior values. Without a prior, untouched
    rows start at ``+inf``.
    """
    check_positive(epsilon, "epsilon")
    vals = _matrix(V)
    B = vals.shape[0]
    idx = getattr(V, "index_map", None)
    if idx is None:
        idx = np.arange(B)
    if prior is not None:
        z = np.array(prior.z if isinstance(prior, ReferencePoint) else prior, dtype=float)
    else:
        size = M if M is not None else int(np.max(idx)) + 1
        z = np.full(size, np.inf)
    candidate = np.min(vals, axis=1) - epsilon
    z[idx] = np.minimum(z[idx], candidate)
    return ReferencePoint(z=z, epsilon=float(epsilon))


def scalarize(kind, V, *, z=None, sp=None, lam=None, form="appendix-d"):
    """Dispatch to the matrix scalarization named ``kind``."""
    if kind == "som":
        return som_value(V, lam)
    if kind == "tch-set":
        return tch_set_value(V, z, lam)
    if kind == "ssom":
        return ssom_value(V, sp, lam)
    if kind == "stch-set":
        return stch_set_value(V, z, sp, lam, form)
    raise ConfigurationError(f"unknown scalarization {kind!r}; choose from {SCALARIZATIONS}")

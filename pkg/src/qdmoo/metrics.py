"""Quality, diversity and QD metrics for a final solution set."""

import csv
import functools
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .validation import (ConfigurationError, EvaluationError, check_bounds,
                         check_count, check_positive)

REPORT_FIELDS = ("mean_obj", "max_obj", "coverage", "vendi", "qd_score", "qvs",
                 "soft_qd", "soft_qd_stderr")


def _sq_dists(A, B):
    """Squared distances via the Gram expansion (fast path, clipped at zero)."""
    d = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.maximum(d, 0.0)


@dataclass
class CvtArchive:
    centroids: np.ndarray
    best_f: np.ndarray
    bounds: np.ndarray
    seed: int = 0

    @property
    def cells(self):
        return self.centroids.shape[0]

    @property
    def occupied(self):
        return ~np.isnan(self.best_f)

    def empty_copy(self):
        return CvtArchive(self.centroids, np.full(self.cells, np.nan), self.bounds, self.seed)

    def cell_of(self, b):
        """Nearest centroid, lowest index on ties."""
        b = np.asarray(b, dtype=float)
        return int(np.argmin(np.sum((self.centroids - b) ** 2, axis=1)))

    def to_csv(self, path, header_comment=None):
        d = self.centroids.shape[1]
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow([f"s{j + 1}" for j in range(d)] + ["best_f"])
            for c, f in zip(self.centroids, self.best_f):
                w.writerow([f"{v:.17g}" for v in c] + ["" if np.isnan(f) else f"{f:.17g}"])


def _lloyd(samples, cells, rng, max_iter, tol):
    centroids = samples[rng.choice(samples.shape[0], cells, replace=False)].copy()
    for _ in range(max_iter):
        labels = np.argmin(_sq_dists(samples, centroids), axis=1)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, samples)
        counts = np.bincount(labels, minlength=cells)
        new = centroids.copy()
        nz = counts > 0
        new[nz] = sums[nz] / counts[nz, None]
        shift = np.max(np.linalg.norm(new - centroids, axis=1))
        centroids = new
        if shift < tol:
            break
    return centroids


@functools.lru_cache(maxsize=16)
def _cvt_centroids(bounds_key, cells, n_samples, seed, max_iter, tol):
    bounds = np.array(bounds_key, dtype=float)
    rng = np.random.default_rng(seed)
    lo, hi = bounds[:, 0], bounds[:, 1]
    samples = lo + rng.random((n_samples, bounds.shape[0])) * (hi - lo)
    centroids = _lloyd(samples, cells, rng, max_iter, tol)
    centroids.setflags(write=False)
    return centroids


def build_cvt(bounds, cells=512, n_samples=None, seed=0, max_iter=200, tol=1e-6):
    """Centroidal Voronoi tessellation of a box by Lloyd iterations on uniform samples.

    ``n_samples`` defaults to ``50 * cells``. Centroids are cached per argument set.
    """
    bounds = check_bounds(bounds)
    cells = check_count(cells, "cells")
    n_samples = 50 * cells if n_samples is None else check_count(n_samples, "n_samples")
    if cells > n_samples:
        raise ConfigurationError(f"cells ({cells}) exceeds n_samples ({n_samples})")
    key = tuple(map(tuple, bounds.tolist()))
    centroids = _cvt_centroids(key, cells, n_samples, int(seed), int(max_iter), float(tol))
    return CvtArchive(centroids=centroids, best_f=np.full(cells, np.nan), bounds=bounds,
                      seed=int(seed))


def archive_insert(archive, b, f):
    """Insert one solution: its cell keeps the larger quality. Returns ``archive``."""
    b = np.asarray(b, dtype=float)
    lo, hi = archive.bounds[:, 0], archive.bounds[:, 1]
    if np.any(b < lo) or np.any(b > hi):
        warnings.warn("descriptor outside archive bounds; clamped", RuntimeWarning,
                      stacklevel=2)
        b = np.clip(b, lo, hi)
    cell = archive.cell_of(b)
    if np.isnan(archive.best_f[cell]) or f > archive.best_f[cell]:
        archive.best_f[cell] = float(f)
    return archive


def archive_insert_batch(archive, B, F):
    B = np.asarray(B, dtype=float)
    F = np.asarray(F, dtype=float)
    lo, hi = archive.bounds[:, 0], archive.bounds[:, 1]
    if np.any(B < lo) or np.any(B > hi):
        warnings.warn("descriptors outside archive bounds; clamped", RuntimeWarning,
                      stacklevel=2)
        B = np.clip(B, lo, hi)
    # exact residual norms so ties resolve identically to cell_of
    cells = np.empty(B.shape[0], dtype=np.intp)
    for start in range(0, B.shape[0], 256):
        chunk = B[start:start + 256]
        diff = chunk[:, None, :] - archive.centroids[None, :, :]
        cells[start:start + 256] = np.argmin(np.sum(diff * diff, axis=-1), axis=1)
    for c, f in zip(cells, F):
        if np.isnan(archive.best_f[c]) or f > archive.best_f[c]:
            archive.best_f[c] = f
    return archive


def coverage(archive):
    return 100.0 * np.count_nonzero(archive.occupied) / archive.cells


def qd_score(archive):
    return float(np.sum(archive.best_f[archive.occupied]))


def vendi_score(behaviors, d=None, sigma_sq=None):
    """Effective number of distinct behaviors (exp of the kernel eigen-entropy).

    The Gaussian kernel bandwidth is ``sigma_sq = d / 6`` unless given.
    """
    B = np.atleast_2d(np.asarray(behaviors, dtype=float))
    K = B.shape[0]
    if K < 1:
        raise ConfigurationError("vendi_score needs at least one behavior")
    if sigma_sq is None:
        sigma_sq = (B.shape[1] if d is None else d) / 6.0
    check_positive(sigma_sq, "sigma_sq")
    diff = B[:, None, :] - B[None, :, :] if K <= 256 else None
    sq = np.sum(diff * diff, axis=-1) if diff is not None else _sq_dists(B, B)
    kern = np.exp(-sq / sigma_sq)
    kern = 0.5 * (kern + kern.T)
    try:
        lam = np.linalg.eigvalsh(kern / K)
    except np.linalg.LinAlgError as exc:
        raise EvaluationError(f"kernel eigen-solve failed: {exc}") from exc
    lam = np.where(lam > 0.0, lam, 0.0)
    nz = lam[lam > 0.0]
    entropy = -np.sum(nz * np.log(nz))
    return float(np.clip(np.exp(entropy), 1.0, K))


def qvs(vendi, mean_obj):
    """Vendi score weighted by mean quality, reported as 0 for negative means."""
    if mean_obj < 0:
        return 0.0
    return float(vendi * mean_obj)


def soft_qd_estimate(f, b, sigma, mc_points, bounds=None, chunk=2048):
    """Monte-Carlo estimate of the integrated illumination over the behavior box.

    Parameters
    ----------
    f : array of shape (K,)
        Qualities.
    b : array of shape (K, d)
        Behaviors.
    sigma : float
        Kernel width of the illumination ``f_k * exp(-||b - b_k||^2 / (2 sigma^2))``.
    mc_points : BehaviorGrid or array of shape (P, d)
        Integration points; a grid also supplies the box.
    bounds : array of shape (d, 2), optional
        Box volume source when ``mc_points`` is a plain array.

    Returns
    -------
    estimate, stderr : float
    """
    check_positive(sigma, "sigma")
    pts = getattr(mc_points, "points", mc_points)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] == 0:
        raise ConfigurationError("mc_points must not be empty")
    if bounds is None:
        bounds = getattr(mc_points, "bounds", None)
    if bounds is None:
        raise ConfigurationError("soft_qd_estimate needs behavior bounds")
    bounds = check_bounds(bounds, pts.shape[1])
    volume = float(np.prod(bounds[:, 1] - bounds[:, 0]))
    f = np.asarray(f, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    illum = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        p = pts[start:start + chunk]
        illum[start:start + chunk] = np.max(
            f[None, :] * np.exp(-_sq_dists(p, b) / (2.0 * sigma * sigma)), axis=1)
    est = volume * float(np.mean(illum))
    P = pts.shape[0]
    stderr = volume * float(np.std(illum, ddof=1) / np.sqrt(P)) if P > 1 else 0.0
    return est, stderr


@dataclass
class MetricsReport:
    mean_obj: float
    max_obj: float
    coverage: float
    vendi: float
    qd_score: float
    qvs: float
    soft_qd: float
    soft_qd_stderr: float = 0.0

    def to_dict(self):
        return asdict(self)

    def to_json(self, path, extra=None):
        payload = dict(extra or {})
        payload["metrics"] = self.to_dict()
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)

    def csv_row(self):
        return [f"{getattr(self, k):.17g}" for k in REPORT_FIELDS]

    def to_csv(self, path, header_comment=None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(REPORT_FIELDS)
            w.writerow(self.csv_row())


def compute_metrics(f, b, archive, sigma, mc_points, d=None):
    """All metrics for one solution set; ``archive`` is not modified."""
    f = np.asarray(f, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    arc = archive_insert_batch(archive.empty_copy(), b, f)
    mean_obj = float(np.mean(f))
    vs = vendi_score(b, d=d)
    soft, soft_err = soft_qd_estimate(f, b, sigma, mc_points, bounds=archive.bounds)
    return MetricsReport(mean_obj=mean_obj, max_obj=float(np.max(f)), coverage=coverage(arc),
                         vendi=vs, qd_score=qd_score(arc), qvs=qvs(vs, mean_obj),
                         soft_qd=soft, soft_qd_stderr=soft_err), arc

"""Alignment and task metrics.

Everything here is numpy-only and deterministic given its seed arguments:
projection directions come from one named substream per call, kernel-grid
sweeps run in a fixed order, and reductions are ordinary sequential sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import substream

WHITEN_RIDGE_SCALE = 1e-6
SEPARABILITY_GAMMA_STEPS = (-2, -1, 0, 1, 2)
SEPARABILITY_RIDGES = (1e-3, 1e-2, 1e-1)


@dataclass(frozen=True)
class SampleSet:
    """Points with a domain label per row."""

    points: np.ndarray
    domain: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        dom = np.asarray(self.domain)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be [n, dim], got shape {pts.shape}")
        if dom.shape != (pts.shape[0],):
            raise ValueError("need one domain label per point")
        if not np.issubdtype(dom.dtype, np.integer):
            raise ValueError("domain labels must be integers")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "domain", dom)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def per_domain(self):
        for dom in np.unique(self.domain):
            yield int(dom), self.points[self.domain == dom]


def whitening_transform(points: np.ndarray):
    """Mean and symmetric inverse-sqrt-covariance transform of a point set.

    The covariance is the population (divide-by-n) estimate plus a relative
    ridge of 1e-6 * trace / dim, so rank-deficient inputs stay finite and the
    transform commutes exactly with global rescaling.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("whitening needs at least 2 points of shape [n, dim]")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / pts.shape[0]
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance is non-finite")
    dim = pts.shape[1]
    eps = WHITEN_RIDGE_SCALE * np.trace(cov) / dim
    if eps <= 0.0:
        eps = WHITEN_RIDGE_SCALE
    vals, vecs = np.linalg.eigh(cov + eps * np.eye(dim))
    transform = (vecs / np.sqrt(vals)) @ vecs.T
    return mean, transform


def whiten(s: SampleSet) -> SampleSet:
    """Pooled whitening: subtract the pooled mean, map pooled covariance to I.

    Every domain in the set must contribute at least 2 points so the pooled
    statistics are not dominated by singletons.
    """
    for dom, pts in s.per_domain():
        if pts.shape[0] < 2:
            raise ValueError(f"domain {dom} has fewer than 2 points")
    mean, transform = whitening_transform(s.points)
    return SampleSet((s.points - mean) @ transform, s.domain)


def _as_points(a, label: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"{label} must be a non-empty [n, dim] set")
    return a


def _w1_sorted_equal(sa: np.ndarray, sb: np.ndarray) -> np.ndarray:
    return np.abs(sa - sb).mean(axis=0)


def _quantile_knots(n: int) -> np.ndarray:
    if n == 1:
        return np.array([0.0, 1.0])
    return np.linspace(0.0, 1.0, n)


def _w1_quantile(sa: np.ndarray, sb: np.ndarray) -> float:
    """Exact integral of |Qa - Qb| for piecewise-linear quantile functions.

    Segments where the difference changes sign are split at the crossing, so
    the result is the true integral of the interpolants, not a trapezoid
    approximation of the absolute value.
    """
    ua = _quantile_knots(sa.size)
    ub = _quantile_knots(sb.size)
    va = sa if sa.size > 1 else np.repeat(sa, 2)
    vb = sb if sb.size > 1 else np.repeat(sb, 2)
    grid = np.union1d(ua, ub)
    d = np.interp(grid, ua, va) - np.interp(grid, ub, vb)
    d0, d1 = d[:-1], d[1:]
    du = np.diff(grid)
    crossing = d0 * d1 < 0.0
    straight = 0.5 * (np.abs(d0) + np.abs(d1)) * du
    denom = np.where(crossing, np.abs(d0 - d1), 1.0)
    split = 0.5 * du * (d0 * d0 + d1 * d1) / denom
    return float(np.where(crossing, split, straight).sum())


def swd(a, b, n_proj: int = 1000, seed: int = 0) -> float:
    """Sliced 1-Wasserstein distance: mean 1D W1 over random unit directions.

    Equal-size sets use the sorted-sample L1 mean; unequal sizes integrate the
    piecewise-linear empirical quantile functions exactly.
    """
    a = _as_points(a, "first set")
    b = _as_points(b, "second set")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    rng = substream(seed, "swd-projections")
    dirs = rng.normal(size=(n_proj, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    if a.shape[0] == b.shape[0]:
        return float(_w1_sorted_equal(pa, pb).mean())
    total = 0.0
    for j in range(n_proj):
        total += _w1_quantile(pa[:, j], pb[:, j])
    return total / n_proj


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def _median_gamma(train: np.ndarray) -> float:
    d2 = _sq_dists(train, train)[np.triu_indices(train.shape[0], k=1)]
    d2 = d2[d2 > 0.0]
    if d2.size == 0:
        return 1.0
    return 1.0 / float(np.median(d2))


def _fit_kernel_logistic(scores_basis, y01, ridge, max_iter=50, tol=1e-8):
    """Newton iterations for ridge-penalized logistic regression on a fixed
    feature basis; converges to the strictly convex optimum."""
    n, r = scores_basis.shape
    beta = np.zeros(r)
    bias = 0.0

    def _obj(bt, bs):
        s = scores_basis @ bt + bs
        # log(1 + e^s) - y*s, computed stably
        ce = np.logaddexp(0.0, s) - y01 * s
        return ce.mean() + 0.5 * ridge * (bt @ bt)

    current = _obj(beta, bias)
    for _ in range(max_iter):
        s = scores_basis @ beta + bias
        p = 1.0 / (1.0 + np.exp(-s))
        resid = p - y01
        grad_beta = scores_basis.T @ resid / n + ridge * beta
        grad_bias = resid.mean()
        if max(np.abs(grad_beta).max(initial=0.0), abs(grad_bias)) < tol:
            break
        w = np.maximum(p * (1.0 - p), 1e-12)
        gw = scores_basis * w[:, None]
        h = np.empty((r + 1, r + 1))
        h[:r, :r] = scores_basis.T @ gw / n + ridge * np.eye(r)
        h[:r, r] = gw.sum(axis=0) / n
        h[r, :r] = h[:r, r]
        h[r, r] = w.mean()
        step = np.linalg.solve(h, np.concatenate([grad_beta, [grad_bias]]))
        scale = 1.0
        for _ in range(30):
            nb = beta - scale * step[:r]
            ns = bias - scale * step[r]
            trial = _obj(nb, ns)
            if trial <= current:
                beta, bias, current = nb, ns, trial
                break
            scale *= 0.5
        else:
            break
    return beta, bias


def domain_separability(s: SampleSet, split_seed: int = 0) -> float:
    """Held-out accuracy of an RBF-kernel logistic probe predicting domain.

    A kernel classifier stands in for a kernel SVM: same kernel grid, but the
    ridge-penalized logistic objective is strictly convex, so deterministic
    Newton iterations reach its unique optimum (gradient norm 1e-8). Grid:
    gamma = median-heuristic * 4^k for k in -2..2, ridge in {1e-3, 1e-2,
    1e-1}; 80/20 split; returns the best held-out accuracy over the grid.
    """
    labels = np.unique(s.domain)
    if labels.size < 2:
        raise ValueError("separability needs at least 2 domains")
    n = s.n
    if n < 5:
        raise ValueError("separability needs at least 5 points for an 80/20 split")
    perm = substream(split_seed, "separability-split").permutation(n)
    n_train = int(round(0.8 * n))
    tr, te = perm[:n_train], perm[n_train:]
    x_tr, x_te = s.points[tr], s.points[te]
    y_tr, y_te = s.domain[tr], s.domain[te]
    gamma0 = _median_gamma(x_tr)
    best = 0.0
    for k in SEPARABILITY_GAMMA_STEPS:
        gamma = gamma0 * 4.0**k
        k_tr = np.exp(-gamma * _sq_dists(x_tr, x_tr))
        k_te = np.exp(-gamma * _sq_dists(x_te, x_tr))
        # low-rank basis of the PSD kernel keeps Newton solves small
        vals, vecs = np.linalg.eigh(k_tr)
        keep = vals > 1e-10 * vals.max()
        basis_tr = vecs[:, keep] * vals[keep]
        basis_te = k_te @ vecs[:, keep]
        for ridge in SEPARABILITY_RIDGES:
            if labels.size == 2:
                beta, bias = _fit_kernel_logistic(
                    basis_tr, (y_tr == labels[1]).astype(np.float64), ridge
                )
                pred = np.where(basis_te @ beta + bias > 0.0, labels[1], labels[0])
            else:
                scores = np.empty((te.size, labels.size))
                for c, lab in enumerate(labels):
                    beta, bias = _fit_kernel_logistic(
                        basis_tr, (y_tr == lab).astype(np.float64), ridge
                    )
                    scores[:, c] = basis_te @ beta + bias
                pred = labels[np.argmax(scores, axis=1)]
            best = max(best, float(np.mean(pred == y_te)))
    return best


def histogram_jsd(a, b, bins: int = 50) -> float:
    """Discrete JSD between normalized histograms on shared bin edges."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("histogram_jsd needs non-empty samples")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    pa = pa / pa.sum()
    pb = pb / pb.sum()
    m = 0.5 * (pa + pb)

    def _half_kl(p):
        mask = p > 0.0
        return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(m[mask]))))

    return 0.5 * _half_kl(pa) + 0.5 * _half_kl(pb)


def dp_gap(predictions, domains) -> float:
    """Demographic-parity gap: |P(pred=1 | d=0) - P(pred=1 | d=1)|."""
    pred = np.asarray(predictions)
    dom = np.asarray(domains)
    if pred.shape != dom.shape or pred.ndim != 1:
        raise ValueError("predictions and domains must be matching 1D arrays")
    if not np.all(np.isin(pred, (0, 1))):
        raise ValueError("predictions must be binary 0/1")
    rates = []
    for d in (0, 1):
        rows = dom == d
        if not rows.any():
            raise ValueError(f"no rows for domain {d}")
        rates.append(float(np.mean(pred[rows] == 1)))
    return abs(rates[0] - rates[1])

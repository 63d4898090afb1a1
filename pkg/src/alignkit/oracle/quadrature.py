"""Trapezoid quadrature over 1D grids: entropies, smoothed Jensen-Shannon
divergences, offset landscapes, and the noisy-bound cross-check against the
discrete oracle.

Densities are any objects exposing ``log_density(x) -> np.ndarray`` and
``grid_bounds(k_sigma) -> (lo, hi)``; the package's DiagGaussian and GmmPrior
both qualify.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..distributions import GmmPrior, convolve_gaussian
from .discrete import DiscreteWorld, _entropy

DENSITY_FLOOR = 1e-300
DEFAULT_POINTS = 20001
DEFAULT_K_SIGMA = 10.0
COVERAGE_K_SIGMA = 8.0


class GridCoverageWarning(UserWarning):
    """Raised when a grid covers less than 8 effective sigmas of a density."""


@dataclass(frozen=True)
class Quadrature1D:
    """Uniform trapezoid grid on [lo, hi]."""

    lo: float
    hi: float
    n: int = DEFAULT_POINTS

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty integration range [{self.lo}, {self.hi}]")
        if self.n < 1001:
            raise ValueError(f"need at least 1001 grid points, got {self.n}")

    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.trapezoid(values, dx=(self.hi - self.lo) / (self.n - 1)))


def default_grid(*densities, n: int = DEFAULT_POINTS, k_sigma: float = DEFAULT_K_SIGMA):
    """Grid spanning every component mean +- k_sigma effective sigmas."""
    bounds = [d.grid_bounds(k_sigma) for d in densities]
    return Quadrature1D(min(b[0] for b in bounds), max(b[1] for b in bounds), n)


def _warn_coverage(q: Quadrature1D, densities) -> None:
    for d in densities:
        lo8, hi8 = d.grid_bounds(COVERAGE_K_SIGMA)
        if q.lo > lo8 or q.hi < hi8:
            warnings.warn(
                f"grid [{q.lo}, {q.hi}] covers less than "
                f"{COVERAGE_K_SIGMA} sigmas of a density spanning [{lo8}, {hi8}]",
                GridCoverageWarning,
                stacklevel=3,
            )


def _neg_plogp(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    mask = p > DENSITY_FLOOR
    out[mask] = -p[mask] * np.log(p[mask])
    return out


def entropy_quadrature(density, q: Quadrature1D | None = None) -> float:
    """Differential entropy -integral p log p on the grid."""
    if q is None:
        q = default_grid(density)
    p = np.exp(density.log_density(q.grid()))
    return q.integrate(_neg_plogp(p))


def gjsd_quadrature(densities, weights, q: Quadrature1D | None = None) -> float:
    """Weighted mixture entropy minus weighted entropies, all on one grid."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(densities) != weights.size or weights.size == 0:
        raise ValueError("need one weight per density")
    if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a distribution")
    if q is None:
        q = default_grid(*densities)
    _warn_coverage(q, densities)
    grid = q.grid()
    ps = [np.exp(d.log_density(grid)) for d in densities]
    mix = sum(w * p for w, p in zip(weights, ps))
    h_mix = q.integrate(_neg_plogp(mix))
    h_each = [q.integrate(_neg_plogp(p)) for p in ps]
    return h_mix - float(sum(w * h for w, h in zip(weights, h_each)))


def jsd_quadrature(pa, pb, q: Quadrature1D | None = None) -> float:
    """Jensen-Shannon divergence H((pa+pb)/2) - (H(pa)+H(pb))/2 by trapezoid."""
    return gjsd_quadrature((pa, pb), (0.5, 0.5), q)


def njsd_quadrature(pa, pb, sigma2: float, q: Quadrature1D | None = None) -> float:
    """JSD after convolving both densities with N(0, sigma2)."""
    if sigma2 < 0.0:
        raise ValueError("sigma2 must be >= 0")
    ca = convolve_gaussian(pa, sigma2)
    cb = convolve_gaussian(pb, sigma2)
    if q is not None:
        pad = DEFAULT_K_SIGMA * float(np.sqrt(sigma2))
        q = Quadrature1D(q.lo - pad, q.hi + pad, q.n)
    return jsd_quadrature(ca, cb, q)


def nsj(pa, pb, sigma2s, weights, q: Quadrature1D | None = None) -> float:
    """Weighted sum of smoothed JSDs across noise scales."""
    sigma2s = list(sigma2s)
    weights = np.asarray(weights, dtype=np.float64)
    if len(sigma2s) == 0 or weights.size != len(sigma2s):
        raise ValueError("need a non-empty sigma2 list with matching weights")
    if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a distribution")
    total = 0.0
    for s2, w in zip(sigma2s, weights):
        total += float(w) * njsd_quadrature(pa, pb, s2, q)
    return total


def _gmm_1d(weights, means, sigma2) -> GmmPrior:
    weights = np.asarray(weights, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64).reshape(-1, 1)
    log_vars = np.full_like(means, np.log(sigma2))
    return GmmPrior(np.log(np.maximum(weights, DENSITY_FLOOR)), means, log_vars)


@dataclass
class Landscape:
    """Divergence-vs-offset table, one row per noise scale."""

    family: str
    offsets: np.ndarray
    sigma2s: tuple
    values: np.ndarray  # [n_sigmas, n_offsets]
    slopes: np.ndarray  # central differences along offsets; nan at the ends

    def rows(self):
        """CSV-friendly rows: offset followed by (value, slope) per sigma2."""
        for i, off in enumerate(self.offsets):
            row = [float(off)]
            for s in range(len(self.sigma2s)):
                row.extend([float(self.values[s, i]), float(self.slopes[s, i])])
            yield row


LANDSCAPE_FAMILIES = ("two-gaussian", "shifted-gmm")


def _landscape_pair(family: str, offset: float):
    from ..distributions import DiagGaussian

    if family == "two-gaussian":
        return (
            DiagGaussian(np.zeros(1), np.zeros(1)),
            DiagGaussian(np.array([offset]), np.zeros(1)),
        )
    if family == "shifted-gmm":
        base = np.array([0.0, 8.0])
        return (
            _gmm_1d(np.array([0.5, 0.5]), base, 1.0),
            _gmm_1d(np.array([0.5, 0.5]), base + offset, 1.0),
        )
    raise ValueError(f"unknown landscape family {family!r}; use {LANDSCAPE_FAMILIES}")


def njsd_landscape(
    family: str, offsets, sigma2s, n: int = DEFAULT_POINTS
) -> Landscape:
    """Smoothed divergence as a function of the offset between two densities,
    one curve per noise scale, with central-difference slopes."""
    offsets = np.asarray(offsets, dtype=np.float64)
    sigma2s = tuple(float(s) for s in sigma2s)
    values = np.empty((len(sigma2s), offsets.size))
    for s, sigma2 in enumerate(sigma2s):
        for i, off in enumerate(offsets):
            pa, pb = _landscape_pair(family, float(off))
            grid = default_grid(
                convolve_gaussian(pa, sigma2), convolve_gaussian(pb, sigma2), n=n
            )
            values[s, i] = jsd_quadrature(
                convolve_gaussian(pa, sigma2), convolve_gaussian(pb, sigma2), grid
            )
    slopes = np.full_like(values, np.nan)
    if offsets.size >= 3:
        slopes[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / (
            offsets[2:] - offsets[:-2]
        )[None, :]
    return Landscape(family, offsets, sigma2s, values, slopes)


def count_local_minima(values: np.ndarray, tol: float = 1e-9) -> int:
    """Interior strict local minima, ignoring dips shallower than tol."""
    v = np.asarray(values, dtype=np.float64)
    count = 0
    for i in range(1, v.size - 1):
        if v[i] < v[i - 1] - tol and v[i] < v[i + 1] - tol:
            count += 1
    return count


def make_latent_line_world(
    rng: np.random.Generator,
    nz: int | None = None,
    nx: int | None = None,
) -> tuple[DiscreteWorld, np.ndarray]:
    """Random two-domain world plus well-separated latent embedding points.

    Latent symbols sit at least 7 units apart on the line, so smoothing with
    unit noise keeps the mixture components essentially disjoint.
    """
    from .discrete import random_world

    nz = int(nz) if nz is not None else int(rng.integers(2, 6))
    nx = int(nx) if nx is not None else int(rng.integers(2, 7))
    world = random_world(rng, nx=nx, nz=nz, nd=2)
    locations = 8.0 * np.arange(nz) + rng.uniform(0.0, 1.0, size=nz)
    return world, locations


def noisy_bound_check(
    w: DiscreteWorld,
    locations: np.ndarray,
    sigma2: float,
    n: int = DEFAULT_POINTS,
) -> tuple[float, float]:
    """Enumerated noisy upper bound vs. quadrature smoothed divergence.

    The latent alphabet is embedded at ``locations`` and smoothed with
    N(0, sigma2). The bound uses the optimal noisy prior (the true smoothed
    latent marginal), enumerated encoder/decoder terms, and the per-domain
    data entropies; it must dominate the smoothed divergence of the
    per-domain latent mixtures.

    Returns (bound_value, smoothed_divergence).
    """
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be > 0")
    locations = np.asarray(locations, dtype=np.float64)
    if locations.shape != (w.nz,):
        raise ValueError("need one embedding location per latent symbol")
    q_d = w.q_d()
    q_z_d = w.q_z_given_d()
    marginal = _gmm_1d(w.q_z(), locations, sigma2)
    per_domain = [_gmm_1d(q_z_d[:, d], locations, sigma2) for d in range(w.nd)]

    h_marginal = entropy_quadrature(marginal)
    h_domains = [entropy_quadrature(p) for p in per_domain]
    ngjsd = h_marginal - float(sum(q_d[d] * h_domains[d] for d in range(w.nd)))

    # enumerated pieces: E_d[ E[log p(x|z,d) - log q(z|x,d)] + H(q(x|d)) ]
    q_x_d = w.q_x_given_d()
    inner = 0.0
    for d in range(w.nd):
        qx = q_x_d[:, d]
        qxz = qx[None, :] * w.q_z_given_xd[:, :, d]  # [nz, nx]
        mask = qxz > 0.0
        dec = w.p_x_given_zd[:, :, d].T  # [nz, nx]
        if np.any(dec[mask] <= 0.0):
            return float("inf"), ngjsd
        ratio = np.log(dec[mask]) - np.log(w.q_z_given_xd[:, :, d][mask])
        inner += q_d[d] * (float(np.sum(qxz[mask] * ratio)) + _entropy(qx))
    bound = h_marginal - inner
    return bound, ngjsd

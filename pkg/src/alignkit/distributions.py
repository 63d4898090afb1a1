"""Differentiable diagonal Gaussians, a learnable Gaussian-mixture prior, and
a small categorical container.

Tensor-valued methods build autodiff graph nodes and are used inside losses;
the ``log_density`` / ``grid_bounds`` methods are plain-numpy evaluations over
1D grids used by the quadrature oracles.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Param,
    Tape,
    Tensor,
    add_rowvec,
    clip,
    exp,
    log,
    logsumexp,
    matmul,
    mul,
    neg,
    square,
    transpose,
    tsum,
)

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_VAR_MIN = -12.0
LOG_VAR_MAX = 12.0


def _as_constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _sum_last(t: Tensor) -> Tensor:
    return tsum(t, axis=t.data.ndim - 1)


class DiagGaussian:
    """Diagonal Gaussian with log-variance clamped to [-12, 12] at construction.

    ``mean`` and ``log_var`` share one shape: a vector for a single
    distribution, or a matrix holding one distribution per row.
    """

    def __init__(self, mean, log_var):
        self.mean = _as_constant(mean)
        self.log_var = clip(_as_constant(log_var), LOG_VAR_MIN, LOG_VAR_MAX)
        if self.mean.data.shape != self.log_var.data.shape:
            raise ValueError(
                f"DiagGaussian: mean shape {self.mean.data.shape} != "
                f"log_var shape {self.log_var.data.shape}"
            )

    @property
    def dim(self) -> int:
        return self.mean.data.shape[-1] if self.mean.data.ndim else 1

    def log_prob(self, x) -> Tensor:
        """Log density, summed over the last axis (one value per row)."""
        x = _as_constant(x)
        diff = x - self.mean
        quad = square(diff) * exp(neg(self.log_var))
        per_dim = (quad + self.log_var + LOG_2PI) * -0.5
        return _sum_last(per_dim)

    def entropy(self) -> Tensor:
        per_dim = (self.log_var + (LOG_2PI + 1.0)) * 0.5
        return _sum_last(per_dim)

    def sample(self, eps) -> Tensor:
        """Reparameterized draw mean + exp(log_var / 2) * eps; caller owns eps."""
        eps = _as_constant(eps)
        if eps.data.shape != self.mean.data.shape:
            raise ValueError(
                f"DiagGaussian.sample: eps shape {eps.data.shape} != "
                f"mean shape {self.mean.data.shape}"
            )
        return self.mean + exp(self.log_var * 0.5) * eps

    # ---- plain-numpy 1D views used by the quadrature oracles ----

    def _scalar_params(self):
        m = self.mean.data.reshape(-1)
        v = np.exp(self.log_var.data.reshape(-1))
        if m.size != 1:
            raise ValueError("grid evaluation requires a 1D Gaussian")
        return float(m[0]), float(v[0])

    def log_density(self, x: np.ndarray) -> np.ndarray:
        m, v = self._scalar_params()
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * (LOG_2PI + np.log(v) + (x - m) ** 2 / v)

    def grid_bounds(self, k_sigma: float) -> tuple[float, float]:
        m, v = self._scalar_params()
        s = np.sqrt(v)
        return m - k_sigma * s, m + k_sigma * s


class GmmPrior:
    """Gaussian mixture with trainable weights, means, and log-variances."""

    def __init__(self, weight_logits, means, log_vars, name: str = "prior"):
        self.weight_logits = self._as_param(weight_logits, f"{name}.weight_logits")
        self.means = self._as_param(means, f"{name}.means")
        self.log_vars = self._as_param(log_vars, f"{name}.log_vars")
        if self.means.value.ndim != 2:
            raise ValueError("GmmPrior: means must be [components, dim]")
        if self.means.value.shape != self.log_vars.value.shape:
            raise ValueError(
                f"GmmPrior: means shape {self.means.value.shape} != "
                f"log_vars shape {self.log_vars.value.shape}"
            )
        if self.weight_logits.value.shape != (self.means.value.shape[0],):
            raise ValueError("GmmPrior: weight_logits must have one entry per component")

    @staticmethod
    def _as_param(x, name):
        return x if isinstance(x, Param) else Param(name, np.asarray(x, dtype=np.float64))

    @classmethod
    def init_random(
        cls,
        n_components: int,
        dim: int,
        rng: np.random.Generator,
        init_scale: float = 1.0,
        name: str = "prior",
    ) -> "GmmPrior":
        means = rng.uniform(-1.0, 1.0, size=(n_components, dim)) * init_scale
        return cls(
            np.zeros(n_components),
            means,
            np.zeros((n_components, dim)),
            name=name,
        )

    @property
    def n_components(self) -> int:
        return self.means.value.shape[0]

    @property
    def dim(self) -> int:
        return self.means.value.shape[1]

    def parameters(self) -> list[Param]:
        return [self.weight_logits, self.means, self.log_vars]

    def log_prob(self, tape: Tape, z: Tensor) -> Tensor:
        """Stable mixture log density for a batch of rows z: [n, dim] -> [n]."""
        z = _as_constant(z)
        if z.data.ndim != 2 or z.data.shape[1] != self.dim:
            raise ValueError(
                f"GmmPrior.log_prob: expected [n, {self.dim}], got {z.data.shape}"
            )
        logits = tape.leaf(self.weight_logits)
        log_w = logits - logsumexp(logits, axis=0)
        means = tape.leaf(self.means)
        log_vars = clip(tape.leaf(self.log_vars), LOG_VAR_MIN, LOG_VAR_MAX)
        # one [n, components] quadratic via the expanded square; component
        # loops cost a graph node per step of the loop and dominate training
        inv_v = exp(neg(log_vars))
        cross = matmul(z, transpose(mul(means, inv_v)))
        zz = matmul(square(z), transpose(inv_v))
        mm = tsum(mul(square(means), inv_v), axis=1)
        offset = log_w + (tsum(log_vars, axis=1) + self.dim * LOG_2PI) * -0.5
        quad = add_rowvec(zz + cross * -2.0, mm)
        return logsumexp(add_rowvec(quad * -0.5, offset), axis=1)

    # ---- plain-numpy 1D views used by the quadrature oracles ----

    def _numpy_params(self):
        logits = self.weight_logits.value
        w = np.exp(logits - logits.max())
        w = w / w.sum()
        if self.dim != 1:
            raise ValueError("grid evaluation requires a 1D mixture")
        means = self.means.value.reshape(-1)
        vars_ = np.exp(np.clip(self.log_vars.value.reshape(-1), LOG_VAR_MIN, LOG_VAR_MAX))
        return w, means, vars_

    def log_density(self, x: np.ndarray) -> np.ndarray:
        w, means, vars_ = self._numpy_params()
        x = np.asarray(x, dtype=np.float64)
        comp = (
            -0.5 * (LOG_2PI + np.log(vars_)[None, :])
            - 0.5 * (x[:, None] - means[None, :]) ** 2 / vars_[None, :]
        )
        comp = comp + np.log(w)[None, :]
        m = comp.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(comp - m).sum(axis=1, keepdims=True))).reshape(-1)

    def grid_bounds(self, k_sigma: float) -> tuple[float, float]:
        _, means, vars_ = self._numpy_params()
        s = np.sqrt(vars_)
        return float(np.min(means - k_sigma * s)), float(np.max(means + k_sigma * s))


class Categorical:
    """Fixed probability vector over a finite alphabet."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("Categorical: probs must be a non-empty vector")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("Categorical: probs must be non-negative and sum to 1")
        self.probs = p / p.sum()

    def entropy(self) -> float:
        p = self.probs
        mask = p > 0.0
        return float(-np.sum(p[mask] * np.log(p[mask])))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(self.probs.size, size=size, p=self.probs)


def kl_gauss_gauss(a: DiagGaussian, b: DiagGaussian):
    """Closed-form KL(a || b) for diagonal Gaussians, summed over the last axis."""
    ma, mb = a.mean.data, b.mean.data
    la, lb = a.log_var.data, b.log_var.data
    if ma.shape != mb.shape:
        raise ValueError(f"kl_gauss_gauss: shapes {ma.shape} and {mb.shape} differ")
    va, vb = np.exp(la), np.exp(lb)
    per_dim = 0.5 * (lb - la + (va + (ma - mb) ** 2) / vb - 1.0)
    out = per_dim.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def convolve_gaussian(dist, sigma2: float):
    """Distribution of x + eps with eps ~ N(0, sigma2 I): variances grow by sigma2."""
    if sigma2 < 0.0:
        raise ValueError("convolve_gaussian: sigma2 must be >= 0")
    if isinstance(dist, DiagGaussian):
        var = np.exp(dist.log_var.data) + sigma2
        return DiagGaussian(dist.mean.data.copy(), np.log(var))
    if isinstance(dist, GmmPrior):
        var = np.exp(dist.log_vars.value) + sigma2
        return GmmPrior(
            dist.weight_logits.value.copy(),
            dist.means.value.copy(),
            np.log(var),
            name="convolved",
        )
    raise TypeError(f"convolve_gaussian: unsupported distribution {type(dist)!r}")

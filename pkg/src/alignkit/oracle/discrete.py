"""Exact enumeration oracle for tiny discrete worlds.

A world fixes a data distribution q(x, d), a stochastic encoder q(z | x, d),
and a variational pair (decoder p(x | z, d), latent prior p(z)). All
divergences, bounds, and decompositions are computed by direct summation, so
they serve as ground truth for the sampled losses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

MAX_X = 16
MAX_Z = 16
MAX_D = 4
_ATOL = 1e-9


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    mask = p > 0.0
    out[mask] = p[mask] * np.log(p[mask])
    return out


def _entropy(p: np.ndarray) -> float:
    return float(-_xlogx(p).sum())


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q); +inf when q has a zero where p has mass."""
    mask = p > 0.0
    if np.any(q[mask] <= 0.0):
        return float("inf")
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


@dataclass(frozen=True)
class DiscreteWorld:
    """Joint q(x, d), encoder q(z | x, d), decoder p(x | z, d), prior p(z)."""

    q_xd: np.ndarray  # [nx, nd], sums to 1
    q_z_given_xd: np.ndarray  # [nz, nx, nd], columns sum to 1 over z
    p_x_given_zd: np.ndarray  # [nx, nz, nd], columns sum to 1 over x
    p_z: np.ndarray  # [nz], sums to 1

    def __post_init__(self):
        q_xd = np.asarray(self.q_xd, dtype=np.float64)
        q_zxd = np.asarray(self.q_z_given_xd, dtype=np.float64)
        p_xzd = np.asarray(self.p_x_given_zd, dtype=np.float64)
        p_z = np.asarray(self.p_z, dtype=np.float64)
        object.__setattr__(self, "q_xd", q_xd)
        object.__setattr__(self, "q_z_given_xd", q_zxd)
        object.__setattr__(self, "p_x_given_zd", p_xzd)
        object.__setattr__(self, "p_z", p_z)
        nx, nd = q_xd.shape
        nz = p_z.shape[0]
        if not (1 <= nx <= MAX_X and 1 <= nz <= MAX_Z and 1 <= nd <= MAX_D):
            raise ValueError(f"world size ({nx}, {nz}, {nd}) out of range")
        if q_zxd.shape != (nz, nx, nd):
            raise ValueError(
                f"q_z_given_xd shape {q_zxd.shape} != {(nz, nx, nd)}"
            )
        if p_xzd.shape != (nx, nz, nd):
            raise ValueError(
                f"p_x_given_zd shape {p_xzd.shape} != {(nx, nz, nd)}"
            )
        for name, arr in (
            ("q_xd", q_xd),
            ("q_z_given_xd", q_zxd),
            ("p_x_given_zd", p_xzd),
            ("p_z", p_z),
        ):
            if np.any(arr < 0.0):
                raise ValueError(f"{name} has negative entries")
        if abs(q_xd.sum() - 1.0) > _ATOL:
            raise ValueError("q_xd must sum to 1")
        if np.max(np.abs(q_zxd.sum(axis=0) - 1.0)) > _ATOL:
            raise ValueError("q_z_given_xd must normalize over z")
        if np.max(np.abs(p_xzd.sum(axis=0) - 1.0)) > _ATOL:
            raise ValueError("p_x_given_zd must normalize over x")
        if abs(p_z.sum() - 1.0) > _ATOL:
            raise ValueError("p_z must sum to 1")
        if np.any(q_xd.sum(axis=0) <= 0.0):
            raise ValueError("every domain needs positive mass")

    @property
    def nx(self) -> int:
        return self.q_xd.shape[0]

    @property
    def nz(self) -> int:
        return self.p_z.shape[0]

    @property
    def nd(self) -> int:
        return self.q_xd.shape[1]

    # Derived marginals are recomputed from the base tables on every call so
    # they can never go stale after a replace().

    def q_d(self) -> np.ndarray:
        return self.q_xd.sum(axis=0)

    def q_x_given_d(self) -> np.ndarray:
        return self.q_xd / self.q_d()[None, :]

    def q_z_given_d(self) -> np.ndarray:
        return np.einsum("zxd,xd->zd", self.q_z_given_xd, self.q_x_given_d())

    def q_z(self) -> np.ndarray:
        return self.q_z_given_d() @ self.q_d()

    def q_zd(self) -> np.ndarray:
        return self.q_z_given_d() * self.q_d()[None, :]

    def q_xzd(self) -> np.ndarray:
        """Full joint over (x, z, d)."""
        return np.einsum("xd,zxd->xzd", self.q_xd, self.q_z_given_xd)

    def q_x_given_zd(self) -> np.ndarray:
        """Bayes posterior of the encoder; zero-mass (z, d) slices stay zero."""
        joint = self.q_xzd()
        q_zd = self.q_zd()
        out = np.zeros_like(joint)
        mask = q_zd > 0.0
        out[:, mask] = joint[:, mask] / q_zd[mask][None, :]
        return out


def random_world(
    rng: np.random.Generator,
    nx: int | None = None,
    nz: int | None = None,
    nd: int | None = None,
) -> DiscreteWorld:
    """Random full-support world; all rows are flat-Dirichlet draws."""
    nx = int(nx) if nx is not None else int(rng.integers(2, 7))
    nz = int(nz) if nz is not None else int(rng.integers(2, 7))
    nd = int(nd) if nd is not None else int(rng.integers(2, 4))
    q_xd = rng.dirichlet(np.ones(nx * nd)).reshape(nx, nd)
    q_zxd = rng.dirichlet(np.ones(nz), size=(nx, nd)).transpose(2, 0, 1)
    p_xzd = rng.dirichlet(np.ones(nx), size=(nz, nd)).transpose(2, 0, 1)
    p_z = rng.dirichlet(np.ones(nz))
    return DiscreteWorld(q_xd, q_zxd, p_xzd, p_z)


class GjsdResult(NamedTuple):
    value: float  # entropy form: H(q(z)) - E_d H(q(z|d))
    mutual_information: float  # joint log-ratio form I(z; d)


def gjsd_exact(w: DiscreteWorld) -> GjsdResult:
    """Domain-weighted Jensen-Shannon divergence of the latent conditionals,
    computed two independent ways (they must agree)."""
    q_d = w.q_d()
    q_z_d = w.q_z_given_d()
    q_z = w.q_z()
    ent_form = _entropy(q_z) - sum(
        q_d[d] * _entropy(q_z_d[:, d]) for d in range(w.nd)
    )
    q_zd = w.q_zd()
    outer = q_z[:, None] * q_d[None, :]
    mask = q_zd > 0.0
    mi = float(np.sum(q_zd[mask] * (np.log(q_zd[mask]) - np.log(outer[mask]))))
    return GjsdResult(ent_form, mi)


class VaubResult(NamedTuple):
    value: float
    gap: float
    finite: bool


def vaub_exact(w: DiscreteWorld) -> VaubResult:
    """Exact variational upper bound and its gap above the divergence.

    value = E_q[-log(p(x|z,d) / q(z|x,d) * p(z))] - E_d[H(q(x|d))]
    gap   = KL(q(z) || p(z)) + E_{q(d) q(z|d)}[KL(q(x|z,d) || p(x|z,d))]

    When the variational tables have zeros where q has mass, the bound is
    infinite and ``finite`` is False.
    """
    joint = w.q_xzd()
    mask = joint > 0.0
    p_dec = np.broadcast_to(w.p_x_given_zd, joint.shape)
    p_z3 = np.broadcast_to(w.p_z[None, :, None], joint.shape)
    q_z = w.q_z()
    if np.any(p_dec[mask] <= 0.0) or np.any(w.p_z[q_z > 0.0] <= 0.0):
        return VaubResult(float("inf"), float("inf"), False)
    enc3 = np.broadcast_to(
        w.q_z_given_xd.transpose(1, 0, 2), joint.shape
    )  # [x, z, d]
    inner = -np.log(p_dec[mask]) + np.log(enc3[mask]) - np.log(p_z3[mask])
    q_d = w.q_d()
    q_x_d = w.q_x_given_d()
    const = sum(q_d[d] * _entropy(q_x_d[:, d]) for d in range(w.nd))
    value = float(np.sum(joint[mask] * inner)) - const

    gap = _kl(q_z, w.p_z)
    q_zd = w.q_zd()
    post = w.q_x_given_zd()
    for d in range(w.nd):
        for z in range(w.nz):
            if q_zd[z, d] > 0.0:
                gap += q_zd[z, d] * _kl(post[:, z, d], w.p_x_given_zd[:, z, d])
    return VaubResult(value, float(gap), np.isfinite(gap))


def optimal_variational(w: DiscreteWorld) -> tuple[np.ndarray, np.ndarray]:
    """Gap-closing variational pair: prior = latent marginal, decoder = Bayes
    posterior of the encoder (uniform on zero-mass (z, d) slices)."""
    p_z = w.q_z().copy()
    post = w.q_x_given_zd()
    q_zd = w.q_zd()
    fill = np.full(w.nx, 1.0 / w.nx)
    for d in range(w.nd):
        for z in range(w.nz):
            if q_zd[z, d] <= 0.0:
                post[:, z, d] = fill
    return p_z, post


def with_variational(
    w: DiscreteWorld, p_z: np.ndarray, p_x_given_zd: np.ndarray
) -> DiscreteWorld:
    return replace(w, p_z=p_z, p_x_given_zd=p_x_given_zd)


def entropy_cov_check(w: DiscreteWorld, d: int) -> float:
    """Residual of the latent-entropy decomposition on one domain slice:

    H(q(z)) = H(q(x)) + E_{q(x,z)}[log(p(x|z) / q(z|x))]
              + E_{q(z)}[KL(q(x|z) || p(x|z))]

    Holds for any full-support decoder table.
    """
    qx = w.q_x_given_d()[:, d]
    qzx = w.q_z_given_xd[:, :, d]  # [nz, nx]
    pxz = w.p_x_given_zd[:, :, d]  # [nx, nz]
    qxz = qx[None, :] * qzx  # [nz, nx]
    qz = qxz.sum(axis=1)
    lhs = _entropy(qz)
    mask = qxz > 0.0
    ratio = np.log(pxz.T[mask]) - np.log(qzx[mask])
    mid = float(np.sum(qxz[mask] * ratio))
    kl_term = 0.0
    for z in range(w.nz):
        if qz[z] > 0.0:
            kl_term += qz[z] * _kl(qxz[z] / qz[z], pxz[:, z])
    rhs = _entropy(qx) + mid + kl_term
    return abs(lhs - rhs)


class DecompositionResult(NamedTuple):
    residual: float
    finite: bool


def fixed_prior_decomposition_check(
    w: DiscreteWorld, u: np.ndarray
) -> DecompositionResult:
    """Residual of: objective with frozen prior u  =  objective with the
    optimal prior  +  KL(q(z) || u), both sides using the Bayes-posterior
    decoder. A zero in u under q(z) mass makes the KL (and residual) infinite.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (w.nz,) or np.any(u < 0.0) or abs(u.sum() - 1.0) > _ATOL:
        raise ValueError("u must be a distribution over the latent alphabet")
    q_z = w.q_z()
    kl = _kl(q_z, u)
    if not np.isfinite(kl):
        return DecompositionResult(float("inf"), False)
    joint = w.q_xzd()
    post = np.broadcast_to(w.q_x_given_zd(), joint.shape)
    enc3 = np.broadcast_to(w.q_z_given_xd.transpose(1, 0, 2), joint.shape)
    mask = joint > 0.0
    base = -np.log(post[mask]) + np.log(enc3[mask])
    u3 = np.broadcast_to(u[None, :, None], joint.shape)
    qz3 = np.broadcast_to(q_z[None, :, None], joint.shape)
    fixed = float(np.sum(joint[mask] * (base - np.log(u3[mask]))))
    opt = float(np.sum(joint[mask] * (base - np.log(qz3[mask]))))
    return DecompositionResult(abs(fixed - (opt + kl)), True)


def mi_reconstruction_check(w: DiscreteWorld) -> float:
    """Residual of: I(x; z | d) = E_q[log p(x|z,d)] + E[KL(q(x|z,d) || p(x|z,d))]
    + E_d[H(q(x|d))], i.e. the reconstruction bound is tight up to exactly the
    decoder KL term."""
    q_d = w.q_d()
    q_x_d = w.q_x_given_d()
    mi = 0.0
    for d in range(w.nd):
        qx = q_x_d[:, d]
        qxz = qx[None, :] * w.q_z_given_xd[:, :, d]  # [nz, nx]
        qz = qxz.sum(axis=1)
        outer = qz[:, None] * qx[None, :]
        mask = qxz > 0.0
        mi += q_d[d] * float(
            np.sum(qxz[mask] * (np.log(qxz[mask]) - np.log(outer[mask])))
        )
    joint = w.q_xzd()
    mask = joint > 0.0
    p_dec = np.broadcast_to(w.p_x_given_zd, joint.shape)
    e_logp = float(np.sum(joint[mask] * np.log(p_dec[mask])))
    kl_term = 0.0
    q_zd = w.q_zd()
    post = w.q_x_given_zd()
    for d in range(w.nd):
        for z in range(w.nz):
            if q_zd[z, d] > 0.0:
                kl_term += q_zd[z, d] * _kl(post[:, z, d], w.p_x_given_zd[:, z, d])
    h_xd = sum(q_d[d] * _entropy(q_x_d[:, d]) for d in range(w.nd))
    return abs(mi - (e_logp + kl_term + h_xd))

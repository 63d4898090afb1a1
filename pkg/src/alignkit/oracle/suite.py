"""Self-check suite over randomly drawn worlds; backs the oracle-check CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import substream
from .discrete import (
    entropy_cov_check,
    fixed_prior_decomposition_check,
    gjsd_exact,
    mi_reconstruction_check,
    optimal_variational,
    random_world,
    vaub_exact,
    with_variational,
)
from .quadrature import jsd_quadrature, njsd_quadrature, nsj

EXACT_TOL = 1e-12
QUAD_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: worst {self.worst:.3e} (tol {self.tol:.1e})"


def _random_gaussian_or_gmm(rng):
    from ..distributions import DiagGaussian
    from .quadrature import _gmm_1d

    if rng.random() < 0.5:
        return DiagGaussian(
            rng.uniform(-5.0, 5.0, size=1), rng.uniform(-1.0, 1.5, size=1)
        )
    k = int(rng.integers(2, 4))
    return _gmm_1d(
        rng.dirichlet(np.ones(k)),
        rng.uniform(-6.0, 6.0, size=k),
        float(rng.uniform(0.5, 2.0)),
    )


def discrete_identity_checks(rng, cases: int) -> list[CheckResult]:
    """Exact-identity checks over ``cases`` random discrete worlds."""
    gjsd_agree = 0.0
    gap_residual = 0.0
    dominance = 0.0
    tight = 0.0
    posterior_gap = 0.0
    entropy_cov = 0.0
    fixed_prior = 0.0
    mi_recon = 0.0
    for _ in range(cases):
        w = random_world(rng)
        g = gjsd_exact(w)
        gjsd_agree = max(gjsd_agree, abs(g.value - g.mutual_information))
        v = vaub_exact(w)
        gap_residual = max(gap_residual, abs(v.value - (g.value + v.gap)))
        dominance = max(dominance, g.value - v.value)
        p_z, post = optimal_variational(w)
        w_opt = with_variational(w, p_z, post)
        v_opt = vaub_exact(w_opt)
        tight = max(tight, abs(v_opt.value - g.value), v_opt.gap)
        # decoder at the posterior, prior untouched: gap collapses to the
        # prior term alone
        w_post = with_variational(w, w.p_z, post)
        v_post = vaub_exact(w_post)
        q_z = w.q_z()
        mask = q_z > 0.0
        kl_prior = float(
            np.sum(q_z[mask] * (np.log(q_z[mask]) - np.log(w.p_z[mask])))
        )
        posterior_gap = max(posterior_gap, abs((v_post.value - g.value) - kl_prior))
        for d in range(w.nd):
            entropy_cov = max(entropy_cov, entropy_cov_check(w, d))
        u = rng.dirichlet(np.ones(w.nz))
        fp = fixed_prior_decomposition_check(w, u)
        fixed_prior = max(fixed_prior, fp.residual)
        mi_recon = max(mi_recon, mi_reconstruction_check(w))

    return [
        CheckResult("divergence two-form agreement", gjsd_agree, EXACT_TOL),
        CheckResult("bound = divergence + gap", gap_residual, EXACT_TOL),
        CheckResult("bound dominates divergence", dominance, EXACT_TOL),
        CheckResult("bound tight at optimal variational pair", tight, EXACT_TOL),
        CheckResult("posterior decoder leaves prior KL gap", posterior_gap, EXACT_TOL),
        CheckResult("latent entropy decomposition", entropy_cov, EXACT_TOL),
        CheckResult("frozen-prior decomposition", fixed_prior, EXACT_TOL),
        CheckResult("reconstruction-bound slack identity", mi_recon, EXACT_TOL),
    ]


def smoothed_jsd_checks(rng, cases: int) -> list[CheckResult]:
    """Divergence-property checks for the noise-smoothed JSD on random 1D
    Gaussian and mixture pairs, by quadrature."""
    nonneg = 0.0
    self_zero = 0.0
    contraction = 0.0
    single_scale = 0.0
    for _ in range(cases):
        pa = _random_gaussian_or_gmm(rng)
        pb = _random_gaussian_or_gmm(rng)
        sigma2 = float(rng.uniform(0.3, 4.0))
        jsd = jsd_quadrature(pa, pb)
        njsd = njsd_quadrature(pa, pb, sigma2)
        nonneg = max(nonneg, -njsd)
        self_zero = max(self_zero, abs(njsd_quadrature(pa, pa, sigma2)))
        contraction = max(contraction, njsd - jsd)
        single_scale = max(
            single_scale, abs(nsj(pa, pb, [sigma2], [1.0]) - njsd)
        )

    return [
        CheckResult("smoothed JSD non-negative", nonneg, QUAD_TOL),
        CheckResult("smoothed JSD zero on identical pair", self_zero, QUAD_TOL),
        CheckResult("smoothing never increases JSD", contraction, QUAD_TOL),
        CheckResult("single-scale schedule matches plain smoothed JSD", single_scale, 0.0),
    ]


def run_suite(seed: int, cases: int = 200) -> list[CheckResult]:
    """Exact-identity checks over ``cases`` random worlds plus smoothed-JSD
    property checks; every residual must sit under its stated tolerance."""
    rng = substream(seed, "oracle-suite")
    results = discrete_identity_checks(rng, cases)
    results += smoothed_jsd_checks(rng, max(10, cases // 4))
    return results

"""Distribution-matching objectives.

All losses share one shape: encode (or flow) each domain's rows into a shared
latent space, score the latent sample against a trainable prior, and, for the
autoencoding variants, score reconstruction under a domain-conditioned
decoder. The noisy variants perturb only the prior argument; the adversarial
baseline replaces the prior term with a domain classifier.

Stochasticity is explicit: every reparameterization or noise draw comes in
through the Batch, so a loss evaluated twice on the same batch is bit-identical
and finite differences against frozen noise are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .autodiff import Tape, Tensor, reshape, slice_cols, tmean
from .distributions import DiagGaussian

LOSS_KINDS = ("adv", "aub", "naub", "vaub", "beta_vaub", "nvaub", "pnp")
_BETA_LINK_TOL = 1e-12


class LossDiverged(RuntimeError):
    """A loss term became non-finite; carries the offending component."""

    def __init__(self, component: str, value: float):
        super().__init__(f"loss component {component!r} diverged to {value!r}")
        self.component = component
        self.value = value


@dataclass
class LossSpec:
    """Which objective to run and its scalar knobs.

    ``beta`` and ``lambda_mi`` parameterize the same trade-off through
    beta = 1 / (1 + lambda_mi); give one (or neither, for beta = 1).
    """

    kind: str
    beta: float | None = None
    lambda_mi: float | None = None
    sigma2_noise: float = 0.0
    lambda_align: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; use one of {LOSS_KINDS}")
        if self.beta is None and self.lambda_mi is None:
            self.beta = 1.0
        elif self.beta is None:
            if self.lambda_mi < 0.0:
                raise ValueError("lambda_mi must be >= 0")
            self.beta = 1.0 / (1.0 + self.lambda_mi)
        elif self.lambda_mi is None:
            pass
        else:
            linked = 1.0 / (1.0 + self.lambda_mi)
            if abs(self.beta - linked) > _BETA_LINK_TOL:
                raise ValueError(
                    f"beta={self.beta} and lambda_mi={self.lambda_mi} disagree: "
                    f"beta must equal 1/(1+lambda_mi)={linked}"
                )
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.sigma2_noise < 0.0:
            raise ValueError("sigma2_noise must be >= 0")
        if self.kind in ("naub", "nvaub") and not self.sigma2_noise > 0.0:
            raise ValueError(f"{self.kind} requires sigma2_noise > 0")
        if self.lambda_align < 0.0:
            raise ValueError("lambda_align must be >= 0")


@dataclass
class Batch:
    """One training batch with all noise pre-drawn by the caller."""

    x: np.ndarray
    d: np.ndarray
    y: np.ndarray | None = None
    eps_z: np.ndarray | None = None
    eps_noise: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.d = np.asarray(self.d)
        if self.x.ndim != 2:
            raise ValueError(f"batch x must be [n, dim], got {self.x.shape}")
        n = self.x.shape[0]
        if self.d.shape != (n,):
            raise ValueError("batch d must hold one domain label per row")
        if not np.issubdtype(self.d.dtype, np.integer):
            raise ValueError("domain labels must be integers")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("batch x contains non-finite entries")
        for name in ("eps_z", "eps_noise"):
            eps = getattr(self, name)
            if eps is not None:
                eps = np.asarray(eps, dtype=np.float64)
                if eps.ndim != 2 or eps.shape[0] != n:
                    raise ValueError(f"{name} must be [n, z_dim]")
                setattr(self, name, eps)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def domains(self) -> np.ndarray:
        return np.unique(self.d)


@dataclass
class LossValue:
    total: Tensor
    components: dict[str, float] = field(default_factory=dict)


def _check_finite(components: dict[str, float]) -> None:
    for name, value in components.items():
        if not np.isfinite(value):
            raise LossDiverged(name, value)


def _weighted(total, term, weight: float):
    term = term * weight
    return term if total is None else total + term


def _gaussian_alignment_terms(tape, batch, encode_fn, dec, prior, sigma2_noise):
    """Per-domain reconstruction / encoder / prior means, batch-weighted.

    ``sigma2_noise > 0`` shifts only the prior argument by sqrt(sigma2) times
    the batch's pre-drawn noise; reconstruction and encoder terms always see
    the clean latent sample.
    """
    if batch.eps_z is None:
        raise ValueError("this loss needs batch.eps_z")
    if sigma2_noise > 0.0 and batch.eps_noise is None:
        raise ValueError("noisy losses need batch.eps_noise")
    recon = enc_lp = prior_lp = None
    n = batch.n
    for dom in batch.domains():
        rows = np.flatnonzero(batch.d == dom)
        w = rows.size / n
        x_rows = Tensor(batch.x[rows])
        g = encode_fn(tape, x_rows, int(dom))
        z = g.sample(batch.eps_z[rows])
        px = dec.decode(tape, z, int(dom))
        recon = _weighted(recon, tmean(-px.log_prob(x_rows)), w)
        enc_lp = _weighted(enc_lp, tmean(g.log_prob(z)), w)
        z_prior = z
        if sigma2_noise > 0.0:
            z_prior = z + np.sqrt(sigma2_noise) * batch.eps_noise[rows]
        prior_lp = _weighted(prior_lp, tmean(prior.log_prob(tape, z_prior)), w)
    return recon, enc_lp, prior_lp


def _assemble_vaub(recon, enc_lp, prior_lp, beta: float) -> LossValue:
    total = recon + (enc_lp - prior_lp) * beta
    components = {
        "recon": float(recon.data),
        "enc_logprob": float(enc_lp.data),
        "prior_logprob": float(prior_lp.data),
    }
    _check_finite({**components, "total": float(total.data)})
    return LossValue(total, components)


def vaub_loss(tape: Tape, batch: Batch, enc, dec, prior) -> LossValue:
    """Sampled variational bound: mean of recon + enc_logprob - prior_logprob."""
    recon, enc_lp, prior_lp = _gaussian_alignment_terms(
        tape, batch, enc.encode, dec, prior, 0.0
    )
    return _assemble_vaub(recon, enc_lp, prior_lp, 1.0)


def beta_vaub_loss(tape: Tape, batch: Batch, enc, dec, prior, beta: float) -> LossValue:
    """Reconstruction plus beta-weighted encoder-minus-prior term.

    The objective is affine in beta at fixed samples; beta = 1 recovers
    vaub_loss exactly.
    """
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    recon, enc_lp, prior_lp = _gaussian_alignment_terms(
        tape, batch, enc.encode, dec, prior, 0.0
    )
    return _assemble_vaub(recon, enc_lp, prior_lp, beta)


def nvaub_loss(
    tape: Tape, batch: Batch, enc, dec, prior, beta: float, sigma2_noise: float
) -> LossValue:
    """Like beta_vaub_loss but the prior is scored at the noise-shifted latent.

    With eps_noise identically zero this reduces bit-exactly to
    beta_vaub_loss.
    """
    if not sigma2_noise > 0.0:
        raise ValueError("nvaub requires sigma2_noise > 0")
    recon, enc_lp, prior_lp = _gaussian_alignment_terms(
        tape, batch, enc.encode, dec, prior, sigma2_noise
    )
    return _assemble_vaub(recon, enc_lp, prior_lp, beta)


def _flow_terms(tape, batch, flow, prior, sigma2_noise):
    if sigma2_noise > 0.0 and batch.eps_noise is None:
        raise ValueError("noisy losses need batch.eps_noise")
    log_det = prior_lp = None
    n = batch.n
    for dom in batch.domains():
        rows = np.flatnonzero(batch.d == dom)
        w = rows.size / n
        z, ld = flow.forward(tape, Tensor(batch.x[rows]), int(dom))
        z_prior = z
        if sigma2_noise > 0.0:
            z_prior = z + np.sqrt(sigma2_noise) * batch.eps_noise[rows]
        log_det = _weighted(log_det, tmean(ld), w)
        prior_lp = _weighted(prior_lp, tmean(prior.log_prob(tape, z_prior)), w)
    return log_det, prior_lp


def _assemble_aub(log_det, prior_lp) -> LossValue:
    total = -(log_det + prior_lp)
    components = {
        "log_det": float(log_det.data),
        "prior_logprob": float(prior_lp.data),
    }
    _check_finite({**components, "total": float(total.data)})
    return LossValue(total, components)


def aub_loss(tape: Tape, batch: Batch, flow, prior) -> LossValue:
    """Flow objective: mean of -log_det - prior_logprob."""
    log_det, prior_lp = _flow_terms(tape, batch, flow, prior, 0.0)
    return _assemble_aub(log_det, prior_lp)


def naub_loss(tape: Tape, batch: Batch, flow, prior, sigma2_noise: float) -> LossValue:
    """Flow objective with the prior scored at the noise-shifted latent."""
    if not sigma2_noise > 0.0:
        raise ValueError("naub requires sigma2_noise > 0")
    log_det, prior_lp = _flow_terms(tape, batch, flow, prior, sigma2_noise)
    return _assemble_aub(log_det, prior_lp)


def _aligner_latents(tape, batch, aligner, rows, dom):
    x_rows = Tensor(batch.x[rows])
    if hasattr(aligner, "encode"):
        if batch.eps_z is None:
            raise ValueError("encoder-based adversarial alignment needs batch.eps_z")
        return aligner.encode(tape, x_rows, dom).sample(batch.eps_z[rows])
    z, _ = aligner.forward(tape, x_rows, dom)
    return z


def adversarial_losses(tape: Tape, batch: Batch, aligner, disc):
    """Alternating-game losses (d_loss, g_loss).

    d_loss trains the discriminator on detached latents; g_loss trains the
    aligner to push its own domain's log-probability down. On a shared forward
    pass the two values cancel exactly.
    """
    d_total = g_total = None
    n = batch.n
    for dom in batch.domains():
        rows = np.flatnonzero(batch.d == dom)
        w = rows.size / n
        z = _aligner_latents(tape, batch, aligner, rows, int(dom))
        m = rows.size
        picked_g = reshape(
            slice_cols(disc.log_probs(tape, z), int(dom), int(dom) + 1), (m,)
        )
        picked_d = reshape(
            slice_cols(disc.log_probs(tape, z.detach()), int(dom), int(dom) + 1), (m,)
        )
        d_total = _weighted(d_total, tmean(picked_d) * -1.0, w)
        g_total = _weighted(g_total, tmean(picked_g), w)
    d_components = {"neg_logprob_true_domain": float(d_total.data)}
    g_components = {"logprob_true_domain": float(g_total.data)}
    _check_finite({**d_components, **g_components})
    return LossValue(d_total, d_components), LossValue(g_total, g_components)


class PnpEncoder:
    """Gaussian encoder assembled around a deterministic feature map.

    The mean is the feature network's output; the log-variance comes from a
    separate head fed the input concatenated with a one-hot domain code, so
    the feature map receives gradients only through the assembled Gaussian.
    """

    def __init__(self, feature, sigma_head, n_domains: int):
        self.feature = feature
        self.sigma_head = sigma_head
        self.n_domains = int(n_domains)

    def encode(self, tape: Tape, x, d: int) -> DiagGaussian:
        x_data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
        mean = self.feature.forward(tape, Tensor(x_data))
        onehot = np.zeros((x_data.shape[0], self.n_domains))
        onehot[:, int(d)] = 1.0
        head_in = Tensor(np.concatenate([x_data, onehot], axis=1))
        log_var = self.sigma_head.forward(tape, head_in)
        return DiagGaussian(mean, log_var)

    def parameters(self):
        return self.feature.parameters() + self.sigma_head.parameters()


def pnp_loss(
    tape: Tape,
    batch: Batch,
    feature,
    sigma_head,
    dec,
    prior,
    beta: float,
    n_domains: int | None = None,
) -> LossValue:
    """Plug-in alignment for a deterministic feature map: wrap it into a
    Gaussian encoder and run the beta-weighted bound."""
    nd = int(n_domains) if n_domains is not None else int(batch.d.max()) + 1
    enc = PnpEncoder(feature, sigma_head, nd)
    return beta_vaub_loss(tape, batch, enc, dec, prior, beta)


def mi_reconstruction_bound(tape: Tape, batch: Batch, enc, dec) -> float:
    """Monitoring value: batch mean of log p(x | z, d); the negative of the
    reconstruction component."""
    recon, _, _ = _gaussian_alignment_terms(
        tape, batch, enc.encode, dec, _NullPrior(), 0.0
    )
    return -float(recon.data)


class _NullPrior:
    def log_prob(self, tape, z):
        return Tensor(np.zeros(z.data.shape[0]))


@dataclass
class AlignmentModels:
    """Bag of model pieces; which fields are set depends on the loss kind."""

    enc: Any = None
    dec: Any = None
    prior: Any = None
    flow: Any = None
    disc: Any = None
    feature: Any = None
    sigma_head: Any = None
    classifier: Any = None

    def aligner_parameters(self, kind: str):
        if kind in ("vaub", "beta_vaub", "nvaub"):
            return (
                self.enc.parameters() + self.dec.parameters() + self.prior.parameters()
            )
        if kind == "pnp":
            return (
                self.feature.parameters()
                + self.sigma_head.parameters()
                + self.dec.parameters()
                + self.prior.parameters()
            )
        if kind in ("aub", "naub"):
            return self.flow.parameters() + self.prior.parameters()
        if kind == "adv":
            aligner = self.enc if self.enc is not None else self.flow
            return aligner.parameters()
        raise ValueError(f"unknown loss kind {kind!r}")

    def adversary_parameters(self):
        return self.disc.parameters()

    def aligner(self):
        return self.enc if self.enc is not None else self.flow


def evaluate(tape: Tape, batch: Batch, spec: LossSpec, models: AlignmentModels) -> LossValue:
    """Dispatch a non-adversarial loss kind; the adversarial game is driven
    by the training loop through adversarial_losses."""
    if spec.kind == "vaub":
        return vaub_loss(tape, batch, models.enc, models.dec, models.prior)
    if spec.kind == "beta_vaub":
        return beta_vaub_loss(
            tape, batch, models.enc, models.dec, models.prior, spec.beta
        )
    if spec.kind == "nvaub":
        return nvaub_loss(
            tape,
            batch,
            models.enc,
            models.dec,
            models.prior,
            spec.beta,
            spec.sigma2_noise,
        )
    if spec.kind == "aub":
        return aub_loss(tape, batch, models.flow, models.prior)
    if spec.kind == "naub":
        return naub_loss(tape, batch, models.flow, models.prior, spec.sigma2_noise)
    if spec.kind == "pnp":
        return pnp_loss(
            tape,
            batch,
            models.feature,
            models.sigma_head,
            models.dec,
            models.prior,
            spec.beta,
        )
    raise ValueError(f"evaluate() does not handle kind {spec.kind!r}")

"""Optimizer, seeded training loop, metric logging, and run layout.

Determinism contract: (config, seed) fully determines every number that lands
in metrics.ndjson. The seed is split into named substreams (batch-shuffle,
eps, eval-eps) so toggling one stochastic source leaves the draws of the
others unchanged; wall-clock times never enter the metrics file and live in
run_info.json instead.
"""

from __future__ import annotations

import configparser
import io
import json
import os
import time
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .autodiff import Param, Tape, Tensor
from .losses import (
    AlignmentModels,
    Batch,
    LossDiverged,
    LossSpec,
    PnpEncoder,
    adversarial_losses,
    evaluate,
)
from .metrics import SampleSet, histogram_jsd, swd, whiten
from .models import save_checkpoint
from .rng import substream

DIVERGENCE_LIMIT = 1e12
EVAL_SWD_PROJECTIONS = 256


class Adam:
    """Adam with bias correction; updates Param values in place."""

    def __init__(self, params: list[Param], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        gs = []
        for p in self.params:
            g = grads.wrt_param(p)
            if not np.all(np.isfinite(g)):
                raise RuntimeError(f"non-finite gradient for parameter {p.name!r}")
            gs.append(g)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v, g in zip(self.params, self.m, self.v, gs):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: Adam, grads) -> None:
    state.step(grads)


@dataclass
class ExperimentConfig:
    """Run configuration; serialized verbatim into the run directory."""

    loss: LossSpec
    latent_dim: int = 1
    hidden: int = 20
    prior_components: int = 10
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    metric_every: int = 10
    out_dir: str | None = None
    dataset: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["loss"] = {"kind": self.loss.kind, "beta": repr(self.loss.beta)}
        if self.loss.lambda_mi is not None:
            cp["loss"]["lambda_mi"] = repr(self.loss.lambda_mi)
        cp["loss"]["sigma2_noise"] = repr(self.loss.sigma2_noise)
        cp["loss"]["lambda_align"] = repr(self.loss.lambda_align)
        cp["model"] = {
            "latent_dim": repr(self.latent_dim),
            "hidden": repr(self.hidden),
            "prior_components": repr(self.prior_components),
        }
        cp["optimizer"] = {
            "lr": repr(self.lr),
            "beta1": repr(self.beta1),
            "beta2": repr(self.beta2),
        }
        cp["run"] = {
            "epochs": repr(self.epochs),
            "batch_size": repr(self.batch_size),
            "seed": repr(self.seed),
            "metric_every": repr(self.metric_every),
        }
        if self.out_dir is not None:
            cp["run"]["out_dir"] = self.out_dir
        cp["dataset"] = {k: _ini_value(v) for k, v in self.dataset.items()}
        cp["extra"] = {k: _ini_value(v) for k, v in self.extra.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def write_ini(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ini())

    @classmethod
    def from_ini(cls, path_or_text: str, is_text: bool = False) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        if is_text:
            cp.read_string(path_or_text)
        else:
            if not os.path.exists(path_or_text):
                raise FileNotFoundError(f"config file not found: {path_or_text}")
            with open(path_or_text, encoding="utf-8") as fh:
                cp.read_string(fh.read())
        loss_kw = {}
        if cp.has_section("loss"):
            sec = cp["loss"]
            loss_kw["kind"] = sec.get("kind", "vaub")
            for key in ("beta", "lambda_mi", "sigma2_noise", "lambda_align"):
                if key in sec:
                    loss_kw[key] = float(sec[key])
        else:
            loss_kw["kind"] = "vaub"
        spec = LossSpec(**loss_kw)
        kw = {"loss": spec}
        mapping = {
            "model": ("latent_dim", "hidden", "prior_components"),
            "optimizer": ("lr", "beta1", "beta2"),
            "run": ("epochs", "batch_size", "seed", "metric_every", "out_dir"),
        }
        defaults = {f.name: f for f in dc_fields(cls)}
        for section, keys in mapping.items():
            if not cp.has_section(section):
                continue
            for key in keys:
                if key in cp[section]:
                    raw = cp[section][key]
                    if key == "out_dir":
                        kw[key] = raw
                    elif defaults[key].type == "int":
                        kw[key] = int(raw)
                    else:
                        kw[key] = float(raw)
        for section, attr in (("dataset", "dataset"), ("extra", "extra")):
            if cp.has_section(section):
                kw[attr] = {k: _parse_value(v) for k, v in cp[section].items()}
        return cls(**kw)


def _ini_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(raw: str):
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


@dataclass
class MetricRecord:
    """One cadence tick. wall_ms is kept out of the NDJSON line so reruns of
    the same (config, seed) produce byte-identical metric logs."""

    epoch: int
    total: float
    components: dict[str, float] = field(default_factory=dict)
    grad_norm: float | None = None
    swd_whitened: float | None = None
    hist_jsd: float | None = None
    accuracy: float | None = None
    dp_gap: float | None = None
    wall_ms: float | None = None

    def to_json_line(self) -> str:
        doc = {"epoch": self.epoch, "total": self.total}
        for key in sorted(self.components):
            doc[f"loss_{key}"] = self.components[key]
        for key in ("grad_norm", "swd_whitened", "hist_jsd", "accuracy", "dp_gap"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        return json.dumps(doc)


@dataclass
class TrainResult:
    models: AlignmentModels
    records: list
    diverged: bool
    stopped_epoch: int


def latents_for(models: AlignmentModels, kind: str, x, d, eps) -> np.ndarray:
    """Latent sample for monitoring, outside any gradient tape."""
    tape = Tape()
    x_t = Tensor(np.asarray(x, dtype=np.float64))
    if kind in ("aub", "naub") or (kind == "adv" and models.enc is None):
        z, _ = models.flow.forward(tape, x_t, int(d))
        return z.data
    if kind == "pnp":
        nd = models.dec.n_domains
        enc = PnpEncoder(models.feature, models.sigma_head, nd)
        return enc.encode(tape, x_t, int(d)).sample(eps).data
    return models.enc.encode(tape, x_t, int(d)).sample(eps).data


def _snapshot(models: AlignmentModels, kind: str):
    params = list(models.aligner_parameters(kind))
    if kind == "adv" and models.disc is not None:
        params += models.adversary_parameters()
    return [(p, p.value.copy()) for p in params]


def _restore(snapshot) -> None:
    for p, value in snapshot:
        p.value = value.copy()


def _grad_norm(grads, params) -> float:
    total = 0.0
    for p in params:
        g = grads.wrt_param(p)
        total += float((g * g).sum())
    return float(np.sqrt(total))


def _alignment_metrics(models, kind, dataset, latent_dim, seed, epoch):
    """Whitened cross-domain SWD and first-latent histogram JSD."""
    if dataset.n_domains < 2:
        return None, None
    rng = substream(seed, "eval-eps", epoch)
    zs, doms = [], []
    for dom in range(dataset.n_domains):
        rows = dataset.x[dataset.d == dom]
        if rows.shape[0] < 2:
            return None, None
        eps = rng.normal(size=(rows.shape[0], latent_dim))
        zs.append(latents_for(models, kind, rows, dom, eps))
        doms.append(np.full(rows.shape[0], dom, dtype=np.int64))
    pooled = whiten(SampleSet(np.concatenate(zs), np.concatenate(doms)))
    z0 = pooled.points[pooled.domain == 0]
    z1 = pooled.points[pooled.domain == 1]
    swd_value = swd(z0, z1, EVAL_SWD_PROJECTIONS, seed=0)
    jsd_value = histogram_jsd(zs[0][:, 0], zs[1][:, 0])
    return swd_value, jsd_value


def _full_batch(dataset, latent_dim, rng) -> Batch:
    n = dataset.n
    return Batch(
        x=dataset.x,
        d=dataset.d,
        y=dataset.y,
        eps_z=rng.normal(size=(n, latent_dim)),
        eps_noise=rng.normal(size=(n, latent_dim)),
    )


def train(cfg: ExperimentConfig, models: AlignmentModels, dataset, metric_fn=None) -> TrainResult:
    """Seeded epoch loop with cadence metrics and divergence protection.

    Metrics are recorded at epoch 0 (evaluation only), epoch 1, every
    metric_every epochs, and the final epoch. On divergence (total loss
    above 1e12 or non-finite) training stops and the parameters roll back to
    the last recorded tick.
    """
    spec = cfg.loss
    shuffle_rng = substream(cfg.seed, "batch-shuffle")
    eps_rng = substream(cfg.seed, "eps")
    aligner_params = models.aligner_parameters(spec.kind)
    opt = Adam(aligner_params, cfg.lr, cfg.beta1, cfg.beta2)
    adversarial = spec.kind == "adv"
    disc_opt = (
        Adam(models.adversary_parameters(), cfg.lr, cfg.beta1, cfg.beta2)
        if adversarial
        else None
    )
    records: list[MetricRecord] = []
    tick_clock = time.perf_counter()

    def record(epoch, total, components, grad_norm):
        nonlocal tick_clock
        swd_value, jsd_value = _alignment_metrics(
            models, spec.kind, dataset, cfg.latent_dim, cfg.seed, epoch
        )
        rec = MetricRecord(
            epoch=epoch,
            total=total,
            components=components,
            grad_norm=grad_norm,
            swd_whitened=swd_value,
            hist_jsd=jsd_value,
        )
        if metric_fn is not None:
            for key, value in metric_fn(models, epoch).items():
                setattr(rec, key, value)
        now = time.perf_counter()
        rec.wall_ms = (now - tick_clock) * 1000.0
        tick_clock = now
        records.append(rec)
        return rec

    def eval_loss(epoch):
        batch = _full_batch(dataset, cfg.latent_dim, substream(cfg.seed, "eval-eps", epoch, 1))
        tape = Tape()
        if adversarial:
            d_lv, g_lv = adversarial_losses(tape, batch, models.aligner(), models.disc)
            return float(d_lv.total.data), {
                "d_loss": float(d_lv.total.data),
                "g_loss": float(g_lv.total.data),
            }
        lv = evaluate(tape, batch, spec, models)
        return float(lv.total.data), dict(lv.components)

    total0, comp0 = eval_loss(0)
    record(0, total0, comp0, None)
    last_good = _snapshot(models, spec.kind)
    n = dataset.n
    batch_size = min(cfg.batch_size, n)
    diverged = False
    stopped_epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_rng.permutation(n)
        sums: dict[str, float] = {}
        total_sum = 0.0
        grad_norm = None
        rows_seen = 0
        try:
            for start in range(0, n, batch_size):
                idx = perm[start : start + batch_size]
                batch = Batch(
                    x=dataset.x[idx],
                    d=dataset.d[idx],
                    y=None if dataset.y is None else dataset.y[idx],
                    eps_z=eps_rng.normal(size=(idx.size, cfg.latent_dim)),
                    eps_noise=eps_rng.normal(size=(idx.size, cfg.latent_dim)),
                )
                if adversarial:
                    tape = Tape()
                    d_lv, _ = adversarial_losses(tape, batch, models.aligner(), models.disc)
                    disc_opt.step(tape.backward(d_lv.total))
                    tape = Tape()
                    _, g_lv = adversarial_losses(tape, batch, models.aligner(), models.disc)
                    grads = tape.backward(g_lv.total)
                    grad_norm = _grad_norm(grads, aligner_params)
                    opt.step(grads)
                    total = float(d_lv.total.data)
                    components = {
                        "d_loss": float(d_lv.total.data),
                        "g_loss": float(g_lv.total.data),
                    }
                else:
                    tape = Tape()
                    lv = evaluate(tape, batch, spec, models)
                    total = float(lv.total.data)
                    if not np.isfinite(total) or abs(total) > DIVERGENCE_LIMIT:
                        raise LossDiverged("total", total)
                    grads = tape.backward(lv.total)
                    grad_norm = _grad_norm(grads, aligner_params)
                    opt.step(grads)
                    components = lv.components
                total_sum += total * idx.size
                rows_seen += idx.size
                for key, value in components.items():
                    sums[key] = sums.get(key, 0.0) + value * idx.size
        except LossDiverged:
            _restore(last_good)
            diverged = True
            stopped_epoch = epoch - 1
            break
        stopped_epoch = epoch
        epoch_total = total_sum / rows_seen
        epoch_components = {k: v / rows_seen for k, v in sums.items()}
        if not np.isfinite(epoch_total) or abs(epoch_total) > DIVERGENCE_LIMIT:
            _restore(last_good)
            diverged = True
            stopped_epoch = epoch - 1
            break
        if epoch == 1 or epoch % cfg.metric_every == 0 or epoch == cfg.epochs:
            record(epoch, epoch_total, epoch_components, grad_norm)
            last_good = _snapshot(models, spec.kind)
    return TrainResult(models, records, diverged, stopped_epoch)


def _model_dict(models: AlignmentModels) -> dict:
    out = {}
    for name in ("enc", "dec", "prior", "flow", "disc", "feature", "sigma_head", "classifier"):
        value = getattr(models, name)
        if value is not None:
            out[name] = value
    return out


def run_experiment(cfg: ExperimentConfig, models: AlignmentModels, dataset, metric_fn=None) -> TrainResult:
    """train() plus the on-disk run layout: config.ini, metrics.ndjson,
    checkpoint.final, run_info.json; curve CSVs are written by callers into
    curves/."""
    if cfg.out_dir is None:
        raise ValueError("run_experiment needs cfg.out_dir")
    os.makedirs(cfg.out_dir, exist_ok=True)
    os.makedirs(os.path.join(cfg.out_dir, "curves"), exist_ok=True)
    cfg.write_ini(os.path.join(cfg.out_dir, "config.ini"))
    started = time.time()
    result = train(cfg, models, dataset, metric_fn=metric_fn)
    finished = time.time()
    with open(os.path.join(cfg.out_dir, "metrics.ndjson"), "w", encoding="utf-8") as fh:
        for rec in result.records:
            fh.write(rec.to_json_line() + "\n")
    save_checkpoint(
        os.path.join(cfg.out_dir, "checkpoint.final"),
        _model_dict(models),
        extra={
            "epoch": result.stopped_epoch,
            "diverged": result.diverged,
            "loss_kind": cfg.loss.kind,
            "latent_dim": cfg.latent_dim,
        },
    )
    info = {
        "started_unix": started,
        "finished_unix": finished,
        "total_wall_ms": (finished - started) * 1000.0,
        "wall_ms_per_tick": [rec.wall_ms for rec in result.records],
        "diverged": result.diverged,
        "stopped_epoch": result.stopped_epoch,
    }
    with open(os.path.join(cfg.out_dir, "run_info.json"), "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=1)
    return result

"""Optimizer behavior, config round-trips, the training loop, run layout."""

import json
import os

import numpy as np
import pytest

from alignkit.autodiff import Param, Tape, square, tmean, tsum
from alignkit.data import make_gaussians
from alignkit.losses import AlignmentModels, LossSpec
from alignkit.models import CondDecoder, CondEncoder, FlowAligner, Mlp
from alignkit.distributions import GmmPrior
from alignkit.rng import substream
from alignkit.training import (
    Adam,
    ExperimentConfig,
    MetricRecord,
    latents_for,
    run_experiment,
    train,
)


def build_gauss_models(seed=0, k=2):
    rng = substream(seed, "models")
    return AlignmentModels(
        enc=CondEncoder(1, 1, 2, hidden=6, rng=rng),
        dec=CondDecoder(1, 1, 2, hidden=6, rng=rng),
        prior=GmmPrior.init_random(k, 1, rng),
    )


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def test_adam_minimizes_quadratic_bowl():
    p = Param("x", np.array([5.0, -3.0]))
    target = np.array([1.0, 2.0])
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        tape = Tape()
        t = tape.leaf(p)
        loss = tmean(square(t - target))
        opt.step(tape.backward(loss))
    np.testing.assert_allclose(p.value, target, atol=1e-3)


def test_adam_rejects_non_finite_gradient():
    p = Param("x", np.array([1.0]))
    opt = Adam([p])
    tape = Tape()
    with np.errstate(over="ignore"):
        loss = tsum(tape.leaf(p) * 1e308) * 1e308
        with pytest.raises(RuntimeError):
            opt.step(tape.backward(loss))


# ---------------------------------------------------------------------------
# config serialization
# ---------------------------------------------------------------------------


def test_config_ini_round_trip(tmp_path):
    cfg = ExperimentConfig(
        loss=LossSpec("nvaub", beta=0.25, lambda_mi=3.0, sigma2_noise=100.0),
        latent_dim=2,
        hidden=10,
        prior_components=4,
        lr=0.003,
        epochs=77,
        batch_size=64,
        seed=9,
        metric_every=25,
        out_dir=str(tmp_path / "run"),
        dataset={"name": "gaussians", "n": 500, "var": 1.0, "flag": True},
        extra={"budget": 3000, "note": "race"},
    )
    back = ExperimentConfig.from_ini(cfg.to_ini(), is_text=True)
    assert back == cfg
    path = tmp_path / "config.ini"
    cfg.write_ini(str(path))
    assert ExperimentConfig.from_ini(str(path)) == cfg


def test_config_ini_types_survive():
    cfg = ExperimentConfig(loss=LossSpec("vaub"), dataset={"noise": 0.05, "n": 500})
    back = ExperimentConfig.from_ini(cfg.to_ini(), is_text=True)
    assert isinstance(back.latent_dim, int)
    assert isinstance(back.lr, float)
    assert isinstance(back.dataset["n"], int)
    assert isinstance(back.dataset["noise"], float)
    assert back.loss.beta == 1.0


def test_config_missing_file():
    with pytest.raises(FileNotFoundError):
        ExperimentConfig.from_ini("/nonexistent/config.ini")


def test_metric_record_json_line():
    rec = MetricRecord(
        epoch=3,
        total=1.5,
        components={"b": 2.0, "a": 1.0},
        grad_norm=0.25,
        wall_ms=123.0,
    )
    line = rec.to_json_line()
    assert line == '{"epoch": 3, "total": 1.5, "loss_a": 1.0, "loss_b": 2.0, "grad_norm": 0.25}'
    assert "wall_ms" not in line
    doc = json.loads(line)
    assert "swd_whitened" not in doc  # None fields stay out


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def small_config(**overrides):
    base = dict(
        loss=LossSpec("beta_vaub", beta=0.5),
        latent_dim=1,
        epochs=80,
        batch_size=64,
        seed=3,
        metric_every=20,
        lr=3e-3,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_train_learns_and_records_cadence():
    dataset = make_gaussians(30, means=(-2.0, 2.0), var=1.0, seed=5)
    result = train(small_config(), build_gauss_models(), dataset)
    epochs = [rec.epoch for rec in result.records]
    assert epochs == [0, 1, 20, 40, 60, 80]
    assert not result.diverged
    assert result.stopped_epoch == 80
    assert result.records[-1].total < result.records[1].total
    assert result.records[1].grad_norm > 0.0
    assert result.records[0].grad_norm is None
    assert all(rec.swd_whitened is not None for rec in result.records)
    assert all(rec.wall_ms is not None for rec in result.records)


def test_train_zero_epochs_evaluates_only():
    dataset = make_gaussians(10, seed=1)
    result = train(small_config(epochs=0), build_gauss_models(), dataset)
    assert [rec.epoch for rec in result.records] == [0]
    assert result.stopped_epoch == 0
    assert not result.diverged


def test_train_single_domain_skips_alignment_metrics():
    dataset = make_gaussians(10, seed=1)
    solo = type(dataset)(
        x=dataset.x[dataset.d == 0], d=dataset.d[dataset.d == 0], name="solo"
    )
    result = train(small_config(epochs=2, metric_every=1), build_gauss_models(), solo)
    assert all(rec.swd_whitened is None for rec in result.records)
    assert "swd_whitened" not in result.records[0].to_json_line()


def test_train_metric_fn_hook():
    dataset = make_gaussians(10, seed=1)
    result = train(
        small_config(epochs=1),
        build_gauss_models(),
        dataset,
        metric_fn=lambda models, epoch: {"accuracy": 0.75},
    )
    assert result.records[-1].accuracy == 0.75
    assert '"accuracy": 0.75' in result.records[-1].to_json_line()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_rolls_back():
    dataset = make_gaussians(20, means=(-1.0, 1.0), seed=2)
    rng = substream(7, "models")
    flow = FlowAligner(1, 2, n_blocks=1, hidden=4, rng=rng)
    models = AlignmentModels(flow=flow, prior=GmmPrior.init_random(2, 1, rng))
    cfg = small_config(
        loss=LossSpec("aub"), lr=500.0, epochs=10, batch_size=1000, metric_every=1000
    )
    result = train(cfg, models, dataset)
    assert result.diverged
    assert result.stopped_epoch < 10
    for p in models.aligner_parameters("aub"):
        assert np.all(np.isfinite(p.value))
    assert [rec.epoch for rec in result.records] == [0, 1]


def test_latents_shapes_per_kind():
    dataset = make_gaussians(6, seed=0)
    x = dataset.x[:4]
    eps = np.zeros((4, 1))
    models = build_gauss_models()
    assert latents_for(models, "vaub", x, 0, eps).shape == (4, 1)
    rng = substream(1, "models")
    fmodels = AlignmentModels(flow=FlowAligner(1, 2, hidden=4, rng=rng))
    assert latents_for(fmodels, "aub", x, 1, None).shape == (4, 1)
    pmodels = AlignmentModels(
        feature=Mlp([1, 4, 2], rng),
        sigma_head=Mlp([3, 4, 2], rng),
        dec=CondDecoder(2, 1, 2, hidden=4, rng=rng),
    )
    assert latents_for(pmodels, "pnp", x, 0, np.zeros((4, 2))).shape == (4, 2)


# ---------------------------------------------------------------------------
# run layout
# ---------------------------------------------------------------------------


def test_run_experiment_layout_and_determinism(tmp_path):
    dataset = make_gaussians(20, means=(-2.0, 2.0), seed=4)
    lines = []
    for sub in ("a", "b"):
        out = str(tmp_path / sub)
        cfg = small_config(epochs=30, out_dir=out)
        run_experiment(cfg, build_gauss_models(), dataset)
        for name in ("config.ini", "metrics.ndjson", "checkpoint.final", "run_info.json"):
            assert os.path.exists(os.path.join(out, name)), name
        assert os.path.isdir(os.path.join(out, "curves"))
        with open(os.path.join(out, "metrics.ndjson"), encoding="utf-8") as fh:
            lines.append(fh.read())
        with open(os.path.join(out, "run_info.json"), encoding="utf-8") as fh:
            info = json.load(fh)
        assert info["stopped_epoch"] == 30
        assert len(info["wall_ms_per_tick"]) == len(lines[-1].splitlines())
    assert lines[0] == lines[1]  # wall-clock noise must not leak into metrics


def test_run_experiment_requires_out_dir():
    dataset = make_gaussians(6, seed=0)
    with pytest.raises(ValueError):
        run_experiment(small_config(epochs=1), build_gauss_models(), dataset)

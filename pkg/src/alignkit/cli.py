"""Command-line entry point.

Exit codes: 0 success, 1 verification or threshold failure, 2 usage error.
Every subcommand writes only inside its --out directory; wall-clock
timestamps are confined to run_info.json files so repeated runs with the same
flags and seed produce byte-identical data files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import oracle
from .data import dataset_from_spec
from .experiments import (
    gradient_audit,
    moons_alignment_report,
    run_da,
    run_moons,
    run_plateau_compare,
)
from .losses import LOSS_KINDS
from .metrics import SampleSet, domain_separability
from .models import load_checkpoint
from .svgplot import write_svg
from .training import ExperimentConfig, latents_for

GRAD_TOL = 1e-4

_CLI_LOSS_NAMES = ("vaub", "beta-vaub", "nvaub", "aub", "naub", "adv")


def _loss_kind(cli_name: str) -> str:
    return cli_name.replace("-", "_")


def _parse_offsets(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise SystemExit(2) from None
    if step <= 0 or hi < lo:
        print(f"bad offsets range {text!r}: need LO:HI:STEP with STEP > 0", file=sys.stderr)
        raise SystemExit(2)
    count = int(round((hi - lo) / step))
    return lo + step * np.arange(count + 1)


def _parse_sigmas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        print(f"bad sigma list {text!r}", file=sys.stderr)
        raise SystemExit(2) from None
    if not values:
        print("empty sigma list", file=sys.stderr)
        raise SystemExit(2)
    return values


def _load_config(path: str | None) -> ExperimentConfig | None:
    if path is None:
        return None
    try:
        return ExperimentConfig.from_ini(path)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        raise SystemExit(2) from None
    except (ValueError, KeyError) as exc:
        print(f"bad config file {path}: {exc}", file=sys.stderr)
        raise SystemExit(2) from None


def _cmd_oracle_check(args) -> int:
    results = oracle.run_suite(seed=args.seed, cases=args.cases)
    failed = 0
    for result in results:
        print(result.line())
        if not result.passed:
            failed += 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def _cmd_grad_check(args) -> int:
    kinds = [k for k in LOSS_KINDS] if args.loss == "all" else [_loss_kind(args.loss)]
    status = 0
    for kind in kinds:
        worst = gradient_audit(kind, seed=args.seed, cases=args.cases)
        ok = worst < GRAD_TOL
        print(f"[{'PASS' if ok else 'FAIL'}] {kind}: worst relative error {worst:.3e} (tol {GRAD_TOL})")
        if not ok:
            status = 1
    return status


def _cmd_njsd_curve(args) -> int:
    offsets = _parse_offsets(args.offsets)
    sigma2s = _parse_sigmas(args.sigmas)
    landscape = oracle.njsd_landscape(args.family, offsets, sigma2s, n=args.points)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"njsd_{args.family}.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("offset,sigma2,value,slope\n")
        for i, off in enumerate(landscape.offsets):
            for s, s2 in enumerate(landscape.sigma2s):
                cells = (off, s2, landscape.values[s, i], landscape.slopes[s, i])
                fh.write(",".join(repr(float(v)) for v in cells) + "\n")
    print(f"wrote {csv_path}")
    if args.svg:
        series = [
            (f"sigma2={s2:g}", list(landscape.offsets), list(landscape.values[i]))
            for i, s2 in enumerate(landscape.sigma2s)
        ]
        svg_path = os.path.join(args.out, f"njsd_{args.family}.svg")
        write_svg(svg_path, series, title=f"smoothed JSD: {args.family}",
                  x_label="offset", y_label="divergence")
        print(f"wrote {svg_path}")
    return 0


def _cmd_train_moons(args) -> int:
    cfg = _load_config(args.config)
    kind = _loss_kind(args.loss) if args.loss else (cfg.loss.kind if cfg else "beta_vaub")
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    epochs = args.epochs if args.epochs is not None else (cfg.epochs if cfg else None)
    beta = args.beta if args.beta is not None else (cfg.loss.beta if cfg else None)
    sigma2 = (
        args.sigma2_noise
        if args.sigma2_noise is not None
        else (cfg.loss.sigma2_noise if cfg else 1.0)
    )
    kwargs = {"kind": kind, "sigma2_noise": sigma2,
              "noise_after_transform": args.noise_after_transform}
    if epochs is not None:
        kwargs["epochs"] = epochs
    if beta is not None and kind in ("beta_vaub", "nvaub", "pnp"):
        kwargs["beta"] = beta
    report = run_moons(seed=seed, out_dir=args.out, **kwargs)
    print(json.dumps({k: v for k, v in report.items() if not isinstance(v, list)},
                     indent=1, sort_keys=True))
    return 1 if report.get("diverged") else 0


def _cmd_train_plateau(args) -> int:
    report = run_plateau_compare(seed=args.seed, out_dir=args.out, budget=args.budget)
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0


def _cmd_train_da(args) -> int:
    cfg = _load_config(args.config)
    lam = (
        args.lambda_align
        if args.lambda_align is not None
        else (cfg.loss.lambda_align if cfg else None)
    )
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    epochs = args.epochs if args.epochs is not None else (cfg.epochs if cfg else None)
    kwargs = {}
    if lam is not None:
        kwargs["lambda_align"] = lam
    if epochs is not None:
        kwargs["epochs"] = epochs
    report = run_da(seed=seed, out_dir=args.out, **kwargs)
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    if not os.path.exists(args.checkpoint):
        print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return 2
    models_dict, extra = load_checkpoint(args.checkpoint)
    try:
        dataset = dataset_from_spec(args.dataset)
    except (ValueError, FileNotFoundError) as exc:
        print(f"bad dataset spec: {exc}", file=sys.stderr)
        return 2
    from .losses import AlignmentModels

    models = AlignmentModels(**{k: v for k, v in models_dict.items()})
    kind = extra.get("loss_kind", "vaub")
    latent_dim = int(extra.get("latent_dim", 1))
    report = moons_alignment_report(models, dataset, kind, latent_dim, seed=args.seed)
    from .rng import substream

    rng = substream(args.seed, "eval-latents")
    zs, doms = [], []
    for dom in range(dataset.n_domains):
        rows = dataset.x[dataset.d == dom]
        if rows.shape[0] < 2:
            continue
        eps = rng.normal(size=(rows.shape[0], latent_dim))
        zs.append(latents_for(models, kind, rows, dom, eps))
        doms.append(np.full(rows.shape[0], dom, dtype=np.int64))
    if len(zs) >= 2:
        pooled = SampleSet(np.concatenate(zs), np.concatenate(doms))
        report["latent_separability"] = domain_separability(pooled, split_seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "eval.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alignkit",
        description="Distribution alignment by non-adversarial upper bounds: "
        "oracles, losses, and small-scale experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle-check", help="run the exact theorem-verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=200)
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("grad-check", help="finite-difference audits of the losses")
    p.add_argument("--loss", default="all", choices=("all",) + tuple(LOSS_KINDS)
                   + tuple(n for n in _CLI_LOSS_NAMES if "-" in n))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=20)
    p.set_defaults(func=_cmd_grad_check)

    p = sub.add_parser("njsd-curve", help="emit smoothed-JSD landscape CSV (and SVG)")
    p.add_argument("--family", required=True, choices=oracle.LANDSCAPE_FAMILIES)
    p.add_argument("--sigmas", required=True, help="comma list of sigma^2 values")
    p.add_argument("--offsets", required=True, help="LO:HI:STEP")
    p.add_argument("--points", type=int, default=20001)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", default=os.path.join("runs", "njsd-curve"))
    p.set_defaults(func=_cmd_njsd_curve)

    p = sub.add_parser("train-moons", help="rotated-moons alignment run")
    p.add_argument("--loss", choices=_CLI_LOSS_NAMES, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--sigma2-noise", type=float, default=None)
    p.add_argument("--noise-after-transform", action="store_true")
    p.add_argument("--out", default=os.path.join("runs", "train-moons"))
    p.set_defaults(func=_cmd_train_moons)

    p = sub.add_parser("train-plateau", help="far-apart Gaussians: plain vs noisy bound")
    p.add_argument("--compare", action="store_true",
                   help="run both arms from identical init (the only mode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", default=os.path.join("runs", "train-plateau"))
    p.set_defaults(func=_cmd_train_plateau)

    p = sub.add_parser("train-da", help="plug-in domain adaptation demo")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lambda-align", type=float, default=None)
    p.add_argument("--out", default=os.path.join("runs", "train-da"))
    p.set_defaults(func=_cmd_train_da)

    p = sub.add_parser("eval", help="metrics for a saved checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True,
                   help='e.g. "rotated-moons-pair:n_per_domain=500,noise=0.05,seed=0"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=os.path.join("runs", "eval"))
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "budget", None) is None and args.command == "train-plateau":
        from .experiments import PLATEAU_BUDGET

        args.budget = PLATEAU_BUDGET
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Small dense networks used by the matching losses: conditional Gaussian
encoders/decoders, an invertible per-domain aligner, and a domain
discriminator, plus a versioned self-describing checkpoint format.

Parameters live as named Params on the model; each forward pass binds them to
the caller's tape, so models are reusable across tapes and optimizers mutate
them in place.
"""

from __future__ import annotations

import base64
import json
import os

import numpy as np

from .autodiff import (
    Param,
    Tape,
    Tensor,
    add_colvec,
    add_rowvec,
    concat,
    exp,
    logsumexp,
    matmul,
    mul_rowvec,
    neg,
    slice_cols,
    tanh,
    tsum,
)
from .distributions import DiagGaussian, GmmPrior

CHECKPOINT_VERSION = 1


def _init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class Mlp:
    """Fully connected stack, tanh on hidden layers, linear output."""

    def __init__(self, dims, rng: np.random.Generator, name: str = "mlp"):
        dims = [int(d) for d in dims]
        if len(dims) < 2:
            raise ValueError("Mlp needs at least input and output dims")
        self.dims = dims
        self.name = name
        self.weights = []
        self.biases = []
        for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
            self.weights.append(Param(f"{name}.w{i}", _init_weight(rng, din, dout)))
            self.biases.append(Param(f"{name}.b{i}", np.zeros(dout)))

    def forward(self, tape: Tape, x: Tensor) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add_rowvec(matmul(h, tape.leaf(w)), tape.leaf(b))
            if i != last:
                h = tanh(h)
        return h

    def parameters(self) -> list[Param]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def config(self) -> dict:
        return {"dims": self.dims, "name": self.name}

    @classmethod
    def from_config(cls, cfg: dict) -> "Mlp":
        return cls(cfg["dims"], np.random.default_rng(0), name=cfg["name"])


class CondEncoder:
    """Domain-conditioned Gaussian encoder q(z | x, d).

    One three-layer trunk per domain by default; ``shared=True`` reuses a
    single trunk for every domain. The head splits into mean and log-variance.
    """

    def __init__(
        self,
        x_dim: int,
        z_dim: int,
        n_domains: int,
        hidden: int = 20,
        shared: bool = False,
        rng: np.random.Generator | None = None,
        name: str = "enc",
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.x_dim, self.z_dim, self.n_domains = int(x_dim), int(z_dim), int(n_domains)
        self.hidden = int(hidden)
        self.shared = bool(shared)
        self.name = name
        dims = [self.x_dim, self.hidden, self.hidden, 2 * self.z_dim]
        n_trunks = 1 if shared else self.n_domains
        self.trunks = [Mlp(dims, rng, name=f"{name}.d{t}") for t in range(n_trunks)]

    def _trunk(self, d: int) -> Mlp:
        return self.trunks[0] if self.shared else self.trunks[d]

    def encode(self, tape: Tape, x, d: int) -> DiagGaussian:
        out = self._trunk(int(d)).forward(tape, x)
        mean = slice_cols(out, 0, self.z_dim)
        log_var = slice_cols(out, self.z_dim, 2 * self.z_dim)
        return DiagGaussian(mean, log_var)

    def parameters(self) -> list[Param]:
        out = []
        for t in self.trunks:
            out.extend(t.parameters())
        return out

    def config(self) -> dict:
        return {
            "x_dim": self.x_dim,
            "z_dim": self.z_dim,
            "n_domains": self.n_domains,
            "hidden": self.hidden,
            "shared": self.shared,
            "name": self.name,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "CondEncoder":
        return cls(
            cfg["x_dim"],
            cfg["z_dim"],
            cfg["n_domains"],
            hidden=cfg["hidden"],
            shared=cfg["shared"],
            rng=np.random.default_rng(0),
            name=cfg["name"],
        )


class CondDecoder:
    """Per-domain Gaussian decoder p(x | z, d); always domain-conditioned.

    With ``const_log_var=True`` the spread is a learned per-dimension constant
    instead of an input-dependent head.
    """

    def __init__(
        self,
        z_dim: int,
        x_dim: int,
        n_domains: int,
        hidden: int = 20,
        const_log_var: bool = False,
        rng: np.random.Generator | None = None,
        name: str = "dec",
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.z_dim, self.x_dim, self.n_domains = int(z_dim), int(x_dim), int(n_domains)
        self.hidden = int(hidden)
        self.const_log_var = bool(const_log_var)
        self.name = name
        out_dim = self.x_dim if const_log_var else 2 * self.x_dim
        dims = [self.z_dim, self.hidden, self.hidden, out_dim]
        self.trunks = [
            Mlp(dims, rng, name=f"{name}.d{t}") for t in range(self.n_domains)
        ]
        self.log_vars = (
            [
                Param(f"{name}.d{t}.log_var", np.zeros(self.x_dim))
                for t in range(self.n_domains)
            ]
            if const_log_var
            else []
        )

    def decode(self, tape: Tape, z, d: int) -> DiagGaussian:
        d = int(d)
        out = self.trunks[d].forward(tape, z)
        if self.const_log_var:
            n = out.data.shape[0]
            zeros = Tensor(np.zeros((n, self.x_dim)))
            log_var = add_rowvec(zeros, tape.leaf(self.log_vars[d]))
            return DiagGaussian(out, log_var)
        mean = slice_cols(out, 0, self.x_dim)
        log_var = slice_cols(out, self.x_dim, 2 * self.x_dim)
        return DiagGaussian(mean, log_var)

    def parameters(self) -> list[Param]:
        out = []
        for t in self.trunks:
            out.extend(t.parameters())
        out.extend(self.log_vars)
        return out

    def config(self) -> dict:
        return {
            "z_dim": self.z_dim,
            "x_dim": self.x_dim,
            "n_domains": self.n_domains,
            "hidden": self.hidden,
            "const_log_var": self.const_log_var,
            "name": self.name,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "CondDecoder":
        return cls(
            cfg["z_dim"],
            cfg["x_dim"],
            cfg["n_domains"],
            hidden=cfg["hidden"],
            const_log_var=cfg["const_log_var"],
            rng=np.random.default_rng(0),
            name=cfg["name"],
        )


class FlowAligner:
    """Per-domain stack of invertible blocks mapping data to a shared latent.

    Each block applies an elementwise affine map (scale exp(a), shift t,
    log-det sum(a)) and, for dim >= 2, an additive coupling layer whose
    conditioned half alternates block to block. Couplings are
    volume-preserving, so the total log-det is the sum of the affine terms.
    """

    def __init__(
        self,
        dim: int,
        n_domains: int,
        n_blocks: int = 2,
        hidden: int = 16,
        rng: np.random.Generator | None = None,
        name: str = "flow",
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim, self.n_domains = int(dim), int(n_domains)
        self.n_blocks, self.hidden = int(n_blocks), int(hidden)
        self.name = name
        if self.dim < 1:
            raise ValueError("flow dimension must be positive")
        self.scales: list[list[Param]] = []
        self.shifts: list[list[Param]] = []
        self.conditioners: list[list[Mlp]] = []
        half = self.dim // 2
        for t in range(self.n_domains):
            sc, sh, cond = [], [], []
            for b in range(self.n_blocks):
                sc.append(Param(f"{name}.d{t}.b{b}.a", np.zeros(self.dim)))
                sh.append(Param(f"{name}.d{t}.b{b}.t", np.zeros(self.dim)))
                if self.dim >= 2:
                    keep = half if b % 2 == 0 else self.dim - half
                    change = self.dim - keep
                    cond.append(
                        Mlp(
                            [keep, self.hidden, change],
                            rng,
                            name=f"{name}.d{t}.b{b}.m",
                        )
                    )
            self.scales.append(sc)
            self.shifts.append(sh)
            self.conditioners.append(cond)

    def forward(self, tape: Tape, x, d: int) -> tuple[Tensor, Tensor]:
        """Returns (z, log_det) with one log-det entry per row."""
        d = int(d)
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        n = h.data.shape[0]
        log_det = Tensor(np.zeros(n))
        half = self.dim // 2
        for b in range(self.n_blocks):
            a = tape.leaf(self.scales[d][b])
            t = tape.leaf(self.shifts[d][b])
            h = add_rowvec(mul_rowvec(h, exp(a)), t)
            log_det = log_det + tsum(a, axis=0)
            if self.dim >= 2:
                keep = half if b % 2 == 0 else self.dim - half
                if b % 2 == 0:
                    kept = slice_cols(h, 0, keep)
                    changed = slice_cols(h, keep, self.dim)
                    changed = changed + self.conditioners[d][b].forward(tape, kept)
                    h = concat([kept, changed], axis=1)
                else:
                    kept = slice_cols(h, self.dim - keep, self.dim)
                    changed = slice_cols(h, 0, self.dim - keep)
                    changed = changed + self.conditioners[d][b].forward(tape, kept)
                    h = concat([changed, kept], axis=1)
        return h, log_det

    def inverse(self, z: np.ndarray, d: int) -> np.ndarray:
        """Numpy-only inverse pass (no gradients)."""
        d = int(d)
        h = np.asarray(z, dtype=np.float64).copy()
        half = self.dim // 2
        for b in range(self.n_blocks - 1, -1, -1):
            if self.dim >= 2:
                keep = half if b % 2 == 0 else self.dim - half
                tape = Tape()
                if b % 2 == 0:
                    kept = h[:, :keep]
                    m = self.conditioners[d][b].forward(tape, Tensor(kept)).data
                    h = np.concatenate([kept, h[:, keep:] - m], axis=1)
                else:
                    kept = h[:, self.dim - keep :]
                    m = self.conditioners[d][b].forward(tape, Tensor(kept)).data
                    h = np.concatenate([h[:, : self.dim - keep] - m, kept], axis=1)
            a = self.scales[d][b].value
            t = self.shifts[d][b].value
            h = (h - t[None, :]) * np.exp(-a)[None, :]
        return h

    def parameters(self) -> list[Param]:
        out = []
        for t in range(self.n_domains):
            for b in range(self.n_blocks):
                out.extend([self.scales[t][b], self.shifts[t][b]])
            for m in self.conditioners[t]:
                out.extend(m.parameters())
        return out

    def config(self) -> dict:
        return {
            "dim": self.dim,
            "n_domains": self.n_domains,
            "n_blocks": self.n_blocks,
            "hidden": self.hidden,
            "name": self.name,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "FlowAligner":
        return cls(
            cfg["dim"],
            cfg["n_domains"],
            n_blocks=cfg["n_blocks"],
            hidden=cfg["hidden"],
            rng=np.random.default_rng(0),
            name=cfg["name"],
        )


class Discriminator:
    """Latent-space domain classifier used by the adversarial baseline."""

    def __init__(
        self,
        z_dim: int,
        n_domains: int,
        hidden: int = 20,
        rng: np.random.Generator | None = None,
        name: str = "disc",
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.z_dim, self.n_domains, self.hidden = int(z_dim), int(n_domains), int(hidden)
        self.name = name
        self.net = Mlp(
            [self.z_dim, self.hidden, self.hidden, self.n_domains],
            rng,
            name=f"{name}.net",
        )

    def logits(self, tape: Tape, z) -> Tensor:
        return self.net.forward(tape, z)

    def log_probs(self, tape: Tape, z) -> Tensor:
        """Row-wise log-softmax over domains."""
        logits = self.logits(tape, z)
        return add_colvec(logits, neg(logsumexp(logits, axis=1)))

    def probs(self, tape: Tape, z) -> Tensor:
        return exp(self.log_probs(tape, z))

    def parameters(self) -> list[Param]:
        return self.net.parameters()

    def config(self) -> dict:
        return {
            "z_dim": self.z_dim,
            "n_domains": self.n_domains,
            "hidden": self.hidden,
            "name": self.name,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "Discriminator":
        return cls(
            cfg["z_dim"],
            cfg["n_domains"],
            hidden=cfg["hidden"],
            rng=np.random.default_rng(0),
            name=cfg["name"],
        )


def _gmm_config(p: GmmPrior) -> dict:
    return {"n_components": p.n_components, "dim": p.dim, "name": "prior"}


def _gmm_from_config(cfg: dict) -> GmmPrior:
    k, dim = cfg["n_components"], cfg["dim"]
    return GmmPrior(
        np.zeros(k), np.zeros((k, dim)), np.zeros((k, dim)), name=cfg.get("name", "prior")
    )


MODEL_REGISTRY = {
    "Mlp": (Mlp, lambda m: m.config(), Mlp.from_config),
    "CondEncoder": (CondEncoder, lambda m: m.config(), CondEncoder.from_config),
    "CondDecoder": (CondDecoder, lambda m: m.config(), CondDecoder.from_config),
    "FlowAligner": (FlowAligner, lambda m: m.config(), FlowAligner.from_config),
    "Discriminator": (Discriminator, lambda m: m.config(), Discriminator.from_config),
    "GmmPrior": (GmmPrior, _gmm_config, _gmm_from_config),
}


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(spec["shape"])


def save_checkpoint(path: str, models: dict, extra: dict | None = None) -> None:
    """Write a versioned self-describing snapshot; floats survive bit-exactly."""
    doc = {"version": CHECKPOINT_VERSION, "extra": extra or {}, "models": {}}
    for key, model in models.items():
        cls_name = type(model).__name__
        if cls_name not in MODEL_REGISTRY:
            raise TypeError(f"cannot checkpoint model type {cls_name!r}")
        _, get_cfg, _ = MODEL_REGISTRY[cls_name]
        doc["models"][key] = {
            "class": cls_name,
            "config": get_cfg(model),
            "params": {p.name: _encode_array(p.value) for p in model.parameters()},
        }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    models = {}
    for key, spec in doc["models"].items():
        cls_name = spec["class"]
        if cls_name not in MODEL_REGISTRY:
            raise ValueError(f"unknown model type {cls_name!r} in checkpoint")
        _, _, build = MODEL_REGISTRY[cls_name]
        model = build(spec["config"])
        by_name = {p.name: p for p in model.parameters()}
        if set(by_name) != set(spec["params"]):
            raise ValueError(f"checkpoint parameters do not match model {key!r}")
        for name, arr_spec in spec["params"].items():
            arr = _decode_array(arr_spec)
            if by_name[name].value.shape != arr.shape:
                raise ValueError(f"shape mismatch for parameter {name!r}")
            by_name[name].value = arr
        models[key] = model
    return models, doc.get("extra", {})

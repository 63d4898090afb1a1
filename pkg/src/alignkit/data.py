"""Synthetic dataset generators and CSV ingestion.

Generators are pure functions of (params, seed): the deterministic part of
each shape comes from a fixed parameter grid and all stochasticity flows
through one named substream, so identical calls return bit-identical arrays.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass, field

import numpy as np

from .rng import substream

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with per-row domain labels and optional task labels."""

    x: np.ndarray
    d: np.ndarray
    y: np.ndarray | None = None
    name: str = ""
    seed: int | None = None
    params: dict = field(default_factory=dict)
    col_mean: np.ndarray | None = None
    col_std: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        d = np.asarray(self.d)
        if x.ndim != 2:
            raise ValueError(f"x must be [n, dim], got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("dataset contains non-finite features")
        if d.shape != (x.shape[0],):
            raise ValueError("need one domain label per row")
        if not np.issubdtype(d.dtype, np.integer):
            raise ValueError("domain labels must be integers")
        if d.size:
            present = np.unique(d)
            if present[0] != 0 or not np.array_equal(
                present, np.arange(present.size)
            ):
                raise ValueError("domain labels must be contiguous from 0")
        y = self.y
        if y is not None:
            y = np.asarray(y)
            if y.shape[0] != x.shape[0]:
                raise ValueError("need one task label per row")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "d", d.astype(np.int64))
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_domains(self) -> int:
        return int(self.d.max()) + 1 if self.d.size else 0

    def restore_columns(self, x: np.ndarray) -> np.ndarray:
        """Invert the z-scoring applied by load_csv."""
        if self.col_mean is None or self.col_std is None:
            raise ValueError("dataset has no stored column statistics")
        return np.asarray(x) * self.col_std + self.col_mean


def make_moons(n: int, noise: float, seed: int = 0) -> Dataset:
    """Two interleaving half-circles with additive Gaussian coordinate noise.

    The noiseless curves are part of the external contract: outer points are
    (cos t, sin t) and inner points are (1 - cos t, 1 - sin t - 0.5) for t on
    a uniform grid over [0, pi]. y holds the moon index.
    """
    if n % 2 != 0:
        raise ValueError(f"n must be even, got {n}")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = np.column_stack([1.0 - np.cos(t), 1.0 - np.sin(t) - 0.5])
    x = np.concatenate([outer, inner], axis=0)
    x = x + noise * substream(seed, "moons-noise").normal(size=x.shape)
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    return Dataset(
        x=x,
        d=np.zeros(n, dtype=np.int64),
        y=y,
        name="moons",
        seed=seed,
        params={"n": n, "noise": noise},
    )


def rotate_scale(ds: Dataset, theta: float, sx: float, sy: float) -> Dataset:
    """Rotate by theta then scale the axes by (sx, sy); 2D only."""
    if ds.dim != 2:
        raise ValueError(f"rotate_scale needs 2D data, got dim {ds.dim}")
    c, s = np.cos(theta), np.sin(theta)
    m = np.diag([sx, sy]) @ np.array([[c, -s], [s, c]])
    return Dataset(
        x=ds.x @ m.T,
        d=ds.d,
        y=ds.y,
        name=f"{ds.name}-rotated",
        seed=ds.seed,
        params={**ds.params, "theta": theta, "sx": sx, "sy": sy},
    )


def make_gaussians(
    n: int,
    means: tuple[float, float] = (-20.0, 20.0),
    var: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Two 1D Gaussian domains, n points each, labeled 0/1 in mean order."""
    lo, hi = sorted(float(m) for m in means)
    std = np.sqrt(var)
    xs, ds = [], []
    for label, mean in enumerate((lo, hi)):
        draw = substream(seed, "gaussians", label).normal(size=(n, 1))
        xs.append(mean + std * draw)
        ds.append(np.full(n, label, dtype=np.int64))
    return Dataset(
        x=np.concatenate(xs, axis=0),
        d=np.concatenate(ds),
        y=None,
        name="gaussians",
        seed=seed,
        params={"n": n, "means": (lo, hi), "var": var},
    )


def stack_domains(datasets: list[Dataset], name: str = "stacked") -> Dataset:
    """Concatenate single-domain datasets; row i of the list becomes domain i."""
    if not datasets:
        raise ValueError("stack_domains needs at least one dataset")
    dim = datasets[0].dim
    for ds in datasets:
        if ds.dim != dim:
            raise ValueError("all datasets must share a feature dimension")
        if ds.n_domains > 1:
            raise ValueError("stack_domains expects single-domain inputs")
    x = np.concatenate([ds.x for ds in datasets], axis=0)
    d = np.concatenate(
        [np.full(ds.n, i, dtype=np.int64) for i, ds in enumerate(datasets)]
    )
    ys = [ds.y for ds in datasets]
    y = None if any(v is None for v in ys) else np.concatenate(ys)
    return Dataset(
        x=x,
        d=d,
        y=y,
        name=name,
        seed=datasets[0].seed,
        params={"sources": [ds.name for ds in datasets]},
    )


def make_rotated_moons_pair(
    n_per_domain: int,
    noise: float,
    seed: int = 0,
    theta: float = 3.0 * np.pi / 8.0,
    sx: float = 0.75,
    sy: float = 1.25,
    noise_after_transform: bool = False,
) -> Dataset:
    """Domain 0 = moons, domain 1 = independently drawn moons rotated/scaled.

    By default noise is added before the transform (so the second domain's
    noise is sheared along with the curve); noise_after_transform adds it to
    the transformed clean curve instead.
    """
    source = make_moons(n_per_domain, noise, seed=seed)
    if noise_after_transform:
        clean = make_moons(n_per_domain, 0.0, seed=seed + 1)
        target = rotate_scale(clean, theta, sx, sy)
        jitter = noise * substream(seed + 1, "moons-noise").normal(
            size=target.x.shape
        )
        target = Dataset(
            x=target.x + jitter,
            d=target.d,
            y=target.y,
            name=target.name,
            seed=target.seed,
            params=target.params,
        )
    else:
        target = rotate_scale(make_moons(n_per_domain, noise, seed=seed + 1), theta, sx, sy)
    return stack_domains([source, target], name="rotated-moons-pair")


def dataset_from_spec(spec: str) -> Dataset:
    """Build a dataset from a compact text spec: "name:key=value,key=value".

    Names: moons, rotated-moons-pair, gaussians, csv. Values are parsed as
    int, then float, then bool, then kept as strings.
    """
    name, _, arg_text = spec.partition(":")
    name = name.strip()
    kwargs = {}
    if arg_text:
        for part in arg_text.split(","):
            if "=" not in part:
                raise ValueError(f"bad dataset spec fragment {part!r} in {spec!r}")
            key, value = part.split("=", 1)
            key = key.strip()
            value = value.strip()
            for caster in (int, float):
                try:
                    kwargs[key] = caster(value)
                    break
                except ValueError:
                    continue
            else:
                if value in ("true", "false"):
                    kwargs[key] = value == "true"
                else:
                    kwargs[key] = value
    if name == "moons":
        return make_moons(**kwargs)
    if name == "rotated-moons-pair":
        return make_rotated_moons_pair(**kwargs)
    if name == "gaussians":
        if "means" in kwargs:
            raise ValueError("pass mean0=/mean1= instead of means=")
        means = (kwargs.pop("mean0", -20.0), kwargs.pop("mean1", 20.0))
        return make_gaussians(means=means, **kwargs)
    if name == "csv":
        return load_csv(**kwargs)
    raise ValueError(f"unknown dataset name {name!r} in spec {spec!r}")


class CsvFormatError(ValueError):
    """CSV ingestion failure, annotated with the offending row/column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.row = row
        self.column = column


def load_csv(path: str, domain_col: str = "domain", label_col: str | None = None) -> Dataset:
    """Load a header-first numeric CSV, z-scoring features per column.

    Domain values are remapped to contiguous labels starting at 0; the
    original values and per-column statistics ride along for inversion.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise CsvFormatError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    if domain_col not in header:
        raise CsvFormatError(f"{path}: missing column", column=domain_col)
    if label_col is not None and label_col not in header:
        raise CsvFormatError(f"{path}: missing column", column=label_col)
    if len(rows) < 2:
        raise CsvFormatError(f"{path}: no data rows")
    feature_cols = [
        h for h in header if h != domain_col and (label_col is None or h != label_col)
    ]
    if not feature_cols:
        raise CsvFormatError(f"{path}: no feature columns left")
    idx = {h: i for i, h in enumerate(header)}

    def _cell(row_values, row_num, col):
        try:
            return float(row_values[idx[col]])
        except (ValueError, IndexError):
            got = row_values[idx[col]] if idx[col] < len(row_values) else "<missing>"
            raise CsvFormatError(
                f"{path}: non-numeric value {got!r}", row=row_num, column=col
            ) from None

    x = np.empty((len(rows) - 1, len(feature_cols)))
    dom_raw = np.empty(len(rows) - 1)
    y = np.empty(len(rows) - 1) if label_col is not None else None
    for r, row in enumerate(rows[1:], start=2):
        for j, col in enumerate(feature_cols):
            x[r - 2, j] = _cell(row, r, col)
        dval = _cell(row, r, domain_col)
        if dval != int(dval):
            raise CsvFormatError(
                f"{path}: domain value {dval!r} is not an integer",
                row=r,
                column=domain_col,
            )
        dom_raw[r - 2] = dval
        if y is not None:
            y[r - 2] = _cell(row, r, label_col)
    col_mean = x.mean(axis=0)
    col_std = np.maximum(x.std(axis=0), STD_FLOOR)
    levels = np.unique(dom_raw)
    d = np.searchsorted(levels, dom_raw).astype(np.int64)
    return Dataset(
        x=(x - col_mean) / col_std,
        d=d,
        y=y,
        name=path,
        seed=None,
        params={
            "domain_col": domain_col,
            "label_col": label_col,
            "domain_levels": [float(v) for v in levels],
            "feature_cols": feature_cols,
        },
        col_mean=col_mean,
        col_std=col_std,
    )

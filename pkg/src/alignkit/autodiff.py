"""Tape-based reverse-mode automatic differentiation on dense float64 arrays.

Define-by-run: every forward pass builds a fresh Tape, primitive ops append
nodes carrying their backward rule, and ``Tape.backward`` performs a single
reverse sweep over the (already topological) node list. Storage is dense
row-major float64. The only implicit broadcasting is scalar-vs-array;
row/column vector interactions go through the explicit ``add_rowvec`` /
``add_colvec`` / ``mul_rowvec`` primitives so every backward rule stays
auditable.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Param",
    "Tensor",
    "Tape",
    "Gradients",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "exp",
    "log",
    "tanh",
    "relu",
    "softplus",
    "square",
    "clip",
    "tsum",
    "tmean",
    "logsumexp",
    "concat",
    "take_rows",
    "slice_cols",
    "reshape",
    "transpose",
    "add_rowvec",
    "add_colvec",
    "mul_rowvec",
    "check_gradients",
]


class Param:
    """A named trainable array, owned by a model and updated in place."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class _Node:
    __slots__ = ("op", "inputs", "bwd")

    def __init__(self, op, inputs, bwd):
        self.op = op
        self.inputs = inputs
        self.bwd = bwd


class Tensor:
    """Array value, optionally attached to a tape node."""

    __slots__ = ("data", "node", "tape")

    def __init__(self, data, node=None, tape=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.node = node
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, cut loose from the tape."""
        return Tensor(self.data)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor division is not a primitive; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, node={self.node})"


class Gradients:
    """Result of a backward sweep: accumulated gradient per tape node."""

    def __init__(self, tape: "Tape", by_node: dict):
        self._tape = tape
        self._by_node = by_node

    def wrt(self, t: Tensor) -> np.ndarray:
        if t.tape is not self._tape or t.node is None:
            raise ValueError("tensor is not a node of the swept tape")
        g = self._by_node.get(t.node)
        return np.zeros_like(t.data) if g is None else g

    def wrt_param(self, p: Param) -> np.ndarray:
        bound = self._tape._params.get(id(p))
        if bound is None:
            return np.zeros_like(p.value)
        _, node = bound
        g = self._by_node.get(node)
        return np.zeros_like(p.value) if g is None else g

    def param_items(self):
        """(Param, gradient) pairs in leaf-binding order."""
        out = []
        for param, node in self._tape._params.values():
            g = self._by_node.get(node)
            out.append((param, np.zeros_like(param.value) if g is None else g))
        return out


class Tape:
    """Append-only record of primitive ops; topological by construction."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._params: dict[int, tuple[Param, int]] = {}

    def _record(self, op, inputs, bwd, data) -> Tensor:
        nid = len(self.nodes)
        self.nodes.append(_Node(op, inputs, bwd))
        return Tensor(data, nid, self)

    def leaf(self, param: Param) -> Tensor:
        """Bind a Param as a differentiable leaf; one node per tape per Param."""
        hit = self._params.get(id(param))
        if hit is not None:
            p, nid = hit
            return Tensor(p.value, nid, self)
        t = self._record(f"leaf:{param.name}", (), None, param.value)
        self._params[id(param)] = (param, t.node)
        return t

    def tensor(self, data) -> Tensor:
        """Anonymous differentiable leaf (tests, gradient checks)."""
        return self._record("leaf", (), None, np.asarray(data, dtype=np.float64))

    def backward(self, root: Tensor) -> Gradients:
        if root.tape is not self or root.node is None:
            raise ValueError("backward root must be a node of this tape")
        if root.data.size != 1:
            raise ValueError(
                f"backward root must be scalar, got shape {root.data.shape}"
            )
        by_node: dict[int, np.ndarray] = {root.node: np.ones_like(root.data)}
        for nid in range(root.node, -1, -1):
            g = by_node.get(nid)
            if g is None:
                continue
            node = self.nodes[nid]
            if node.bwd is None:
                continue
            for iid, gi in zip(node.inputs, node.bwd(g)):
                acc = by_node.get(iid)
                by_node[iid] = gi if acc is None else acc + gi
        return Gradients(self, by_node)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _tape_of(*tensors):
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError("operands live on different tapes")
    return tape


def _record(tape, op, tracked, bwd, data) -> Tensor:
    if tape is None:
        return Tensor(data)
    return tape._record(op, tuple(t.node for t in tracked), bwd, data)


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    # scalar operands collect the full gradient mass
    if g.shape == tuple(shape):
        return g
    return np.sum(g).reshape(shape)


def _check_elementwise(op, a, b):
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ValueError(f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}")


def _binary(op, a, b, fwd, da, db):
    a = _as_tensor(a)
    b = _as_tensor(b)
    _check_elementwise(op, a, b)
    tape = _tape_of(a, b)
    data = fwd(a.data, b.data)
    tracked = [t for t in (a, b) if t.node is not None]
    if not tracked or tape is None:
        return Tensor(data)
    ad, bd = a.data, b.data
    a_tracked = a.node is not None
    b_tracked = b.node is not None

    def bwd(g):
        out = []
        if a_tracked:
            out.append(_reduce_to(da(g, ad, bd), ad.shape))
        if b_tracked:
            out.append(_reduce_to(db(g, ad, bd), bd.shape))
        return out

    return _record(tape, op, tracked, bwd, data)


def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary("sub", a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(
        "mul", a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x
    )


def _unary(op, t, fwd, make_bwd):
    t = _as_tensor(t)
    data = fwd(t.data)
    if t.node is None or t.tape is None:
        return Tensor(data)
    bwd_one = make_bwd(t.data, data)
    return _record(t.tape, op, (t,), lambda g: (bwd_one(g),), data)


def neg(t):
    return _unary("neg", t, lambda x: -x, lambda x, y: lambda g: -g)


def exp(t):
    return _unary("exp", t, np.exp, lambda x, y: lambda g: g * y)


def log(t):
    return _unary("log", t, np.log, lambda x, y: lambda g: g / x)


def tanh(t):
    return _unary("tanh", t, np.tanh, lambda x, y: lambda g: g * (1.0 - y * y))


def relu(t):
    return _unary(
        "relu", t, lambda x: np.maximum(x, 0.0), lambda x, y: lambda g: g * (x > 0.0)
    )


def _sigmoid(x):
    # stable logistic via tanh
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(t):
    return _unary(
        "softplus",
        t,
        lambda x: np.logaddexp(0.0, x),
        lambda x, y: lambda g: g * _sigmoid(x),
    )


def square(t):
    return _unary("square", t, np.square, lambda x, y: lambda g: g * (2.0 * x))


def clip(t, lo: float, hi: float):
    """Hard clamp; gradient passes inside the closed interval, zero outside."""
    return _unary(
        "clip",
        t,
        lambda x: np.clip(x, lo, hi),
        lambda x, y: lambda g: g * ((x >= lo) & (x <= hi)),
    )


def tsum(t, axis=None):
    t = _as_tensor(t)
    data = np.sum(t.data, axis=axis)
    if t.node is None or t.tape is None:
        return Tensor(data)
    shape = t.data.shape

    def bwd(g):
        if axis is None:
            return (np.full(shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _record(t.tape, "sum", (t,), bwd, data)


def tmean(t, axis=None):
    t = _as_tensor(t)
    data = np.mean(t.data, axis=axis)
    if t.node is None or t.tape is None:
        return Tensor(data)
    shape = t.data.shape
    count = t.data.size if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            return (np.full(shape, float(g) / count),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape) / count,)

    return _record(t.tape, "mean", (t,), bwd, data)


def logsumexp(t, axis: int):
    """Stable log-sum-exp over one axis; backward uses the implied softmax."""
    t = _as_tensor(t)
    x = t.data
    if x.ndim == 0:
        raise ValueError("logsumexp: input must have at least one axis")
    m = np.max(x, axis=axis, keepdims=True)
    out_k = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    data = np.squeeze(out_k, axis=axis)
    if t.node is None or t.tape is None:
        return Tensor(data)
    soft = np.exp(x - out_k)

    def bwd(g):
        return (np.expand_dims(g, axis) * soft,)

    return _record(t.tape, "logsumexp", (t,), bwd, data)


def concat(tensors, axis: int = 0):
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: need at least one tensor")
    tape = _tape_of(*ts)
    data = np.concatenate([t.data for t in ts], axis=axis)
    tracked = [t for t in ts if t.node is not None]
    if not tracked or tape is None:
        return Tensor(data)
    # per-input slice bounds along the concat axis
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in ts])
    spans = [
        (offsets[i], offsets[i + 1]) for i, t in enumerate(ts) if t.node is not None
    ]

    def bwd(g):
        outs = []
        for lo, hi in spans:
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            outs.append(g[tuple(index)])
        return outs

    return _record(tape, "concat", tracked, bwd, data)


def take_rows(t, indices):
    """Gather rows by integer index; backward scatter-adds."""
    t = _as_tensor(t)
    idx = np.asarray(indices, dtype=np.intp)
    data = t.data[idx]
    if t.node is None or t.tape is None:
        return Tensor(data)
    shape = t.data.shape

    def bwd(g):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return (z,)

    return _record(t.tape, "take_rows", (t,), bwd, data)


def slice_cols(t, lo: int, hi: int):
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ValueError(f"slice_cols: expected a matrix, got shape {t.data.shape}")
    data = t.data[:, lo:hi]
    if t.node is None or t.tape is None:
        return Tensor(data)
    shape = t.data.shape

    def bwd(g):
        z = np.zeros(shape)
        z[:, lo:hi] = g
        return (z,)

    return _record(t.tape, "slice_cols", (t,), bwd, data)


def reshape(t, shape):
    t = _as_tensor(t)
    data = t.data.reshape(shape)
    if t.node is None or t.tape is None:
        return Tensor(data)
    old = t.data.shape

    def bwd(g):
        return (g.reshape(old),)

    return _record(t.tape, "reshape", (t,), bwd, data)


def transpose(t):
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ValueError(f"transpose: expected a matrix, got shape {t.data.shape}")
    data = t.data.T
    if t.node is None or t.tape is None:
        return Tensor(data)

    def bwd(g):
        return (g.T,)

    return _record(t.tape, "transpose", (t,), bwd, data)


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b)
    tape = _tape_of(a, b)
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ValueError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
        da = lambda g: g @ bd.T
        db = lambda g: ad.T @ g
    elif ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ValueError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
        da = lambda g: np.outer(g, bd)
        db = lambda g: ad.T @ g
    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ValueError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
        da = lambda g: bd @ g
        db = lambda g: np.outer(ad, g)
    elif ad.ndim == 1 and bd.ndim == 1:
        if ad.shape[0] != bd.shape[0]:
            raise ValueError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
        da = lambda g: float(g) * bd
        db = lambda g: float(g) * ad
    else:
        raise ValueError(f"matmul: unsupported ranks {ad.shape} and {bd.shape}")
    data = ad @ bd
    tracked = [t for t in (a, b) if t.node is not None]
    if not tracked or tape is None:
        return Tensor(data)
    a_tracked = a.node is not None
    b_tracked = b.node is not None

    def bwd(g):
        out = []
        if a_tracked:
            out.append(da(g))
        if b_tracked:
            out.append(db(g))
        return out

    return _record(tape, "matmul", tracked, bwd, data)


def add_rowvec(m, v):
    """m[i, j] + v[j]; backward sums the row axis for v."""
    m = _as_tensor(m)
    v = _as_tensor(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[1] != v.data.shape[0]:
        raise ValueError(
            f"add_rowvec: incompatible shapes {m.data.shape} and {v.data.shape}"
        )
    tape = _tape_of(m, v)
    data = m.data + v.data[None, :]
    tracked = [t for t in (m, v) if t.node is not None]
    if not tracked or tape is None:
        return Tensor(data)
    m_tracked = m.node is not None
    v_tracked = v.node is not None

    def bwd(g):
        out = []
        if m_tracked:
            out.append(g)
        if v_tracked:
            out.append(g.sum(axis=0))
        return out

    return _record(tape, "add_rowvec", tracked, bwd, data)


def add_colvec(m, v):
    """m[i, j] + v[i]; backward sums the column axis for v."""
    m = _as_tensor(m)
    v = _as_tensor(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[0] != v.data.shape[0]:
        raise ValueError(
            f"add_colvec: incompatible shapes {m.data.shape} and {v.data.shape}"
        )
    tape = _tape_of(m, v)
    data = m.data + v.data[:, None]
    tracked = [t for t in (m, v) if t.node is not None]
    if not tracked or tape is None:
        return Tensor(data)
    m_tracked = m.node is not None
    v_tracked = v.node is not None

    def bwd(g):
        out = []
        if m_tracked:
            out.append(g)
        if v_tracked:
            out.append(g.sum(axis=1))
        return out

    return _record(tape, "add_colvec", tracked, bwd, data)


def mul_rowvec(m, v):
    """m[i, j] * v[j]."""
    m = _as_tensor(m)
    v = _as_tensor(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[1] != v.data.shape[0]:
        raise ValueError(
            f"mul_rowvec: incompatible shapes {m.data.shape} and {v.data.shape}"
        )
    tape = _tape_of(m, v)
    md, vd = m.data, v.data
    data = md * vd[None, :]
    tracked = [t for t in (m, v) if t.node is not None]
    if not tracked or tape is None:
        return Tensor(data)
    m_tracked = m.node is not None
    v_tracked = v.node is not None

    def bwd(g):
        out = []
        if m_tracked:
            out.append(g * vd[None, :])
        if v_tracked:
            out.append((g * md).sum(axis=0))
        return out

    return _record(tape, "mul_rowvec", tracked, bwd, data)


def check_gradients(make_scalar, params, step: float = 1e-5) -> float:
    """Compare tape gradients against central finite differences.

    ``make_scalar(tape)`` must rebuild the scalar loss on the given tape,
    binding every Param in ``params`` through ``tape.leaf``, and must be
    deterministic (freeze any noise before calling). Returns the max over
    parameter entries of |analytic - numeric| / max(1, |numeric|).
    """
    tape = Tape()
    root = make_scalar(tape)
    if root.data.size != 1:
        raise ValueError("gradient check target must be scalar")
    grads = tape.backward(root)
    analytic = {id(p): grads.wrt_param(p) for p in params}

    def value() -> float:
        probe = Tape()
        v = float(make_scalar(probe).data)
        if not np.isfinite(v):
            raise ValueError("non-finite value while probing finite differences")
        return v

    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        an = analytic[id(p)].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = value()
            flat[i] = orig - step
            f_minus = value()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(an[i] - numeric) / max(1.0, abs(numeric))
            if rel > worst:
                worst = rel
    return worst

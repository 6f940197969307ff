"""Dense float64 tensors with reverse-mode autodiff and an Adam optimizer.

A Tensor wraps a numpy array and records the backward closure of the op
that produced it; calling ``backward()`` on a scalar walks the tape in
reverse topological order. The op vocabulary is deliberately small: it is
exactly what the attention/ranking model needs, nothing more. All ops
accept leading batch dimensions so a whole minibatch runs through one tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


import contextlib

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    """Skip tape construction inside the block (inference-only forwards)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class GradientError(RuntimeError):
    """Gradient bookkeeping violated (missing grad, non-scalar backward)."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A dense float64 array plus optional gradient and tape linkage.

    Forward values must stay finite; producing NaN/Inf raises immediately
    so errors surface at the op that created them.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        # a sum stays finite iff every element is finite (inf-inf gives nan)
        if self.data.size and not np.isfinite(self.data.sum()):
            raise FloatingPointError("non-finite values in tensor")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents, backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED[-1]:
            live = tuple(p for p in parents if p.requires_grad or p._parents)
            if live:
                out.requires_grad = True
                out._parents = live
                out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray, owned: bool = False):
        # `owned` marks arrays freshly allocated by the caller: they can be
        # adopted as the grad buffer without a defensive copy
        if self.grad is None:
            if owned and g.shape == self.data.shape and g.dtype == np.float64:
                self.grad = g
            else:
                self.grad = np.array(g, dtype=np.float64)
                if self.grad.shape != self.data.shape:
                    self.grad = np.broadcast_to(g, self.data.shape).copy()
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise GradientError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                node.grad = None  # only leaf parameters keep their grads

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def backward(g):
        ra = _unbroadcast(g, a.data.shape)
        a._accumulate(ra, owned=ra is not g)
        rb = _unbroadcast(g, b.data.shape)
        b._accumulate(rb, owned=rb is not g)

    return Tensor._from_op(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape), owned=True)
        b._accumulate(_unbroadcast(g * a.data, b.data.shape), owned=True)

    return Tensor._from_op(out, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must have >= 2 dims")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner extents differ: {a.data.shape} @ {b.data.shape}"
        )

    # stacked @ 2D and 2D @ stacked flatten to one large GEMM; numpy would
    # otherwise loop over thousands of tiny ones
    if a.data.ndim > 2 and b.data.ndim == 2:
        k, n = b.data.shape
        a2 = a.data.reshape(-1, k)
        out = (a2 @ b.data).reshape(a.data.shape[:-1] + (n,))

        def backward(g):
            g2 = g.reshape(-1, n)
            a._accumulate((g2 @ b.data.T).reshape(a.data.shape), owned=True)
            b._accumulate(a2.T @ g2, owned=True)

        return Tensor._from_op(out, (a, b), backward)

    if a.data.ndim == 2 and b.data.ndim > 2:
        m, k = a.data.shape
        n = b.data.shape[-1]
        bt = np.swapaxes(b.data, -1, -2)  # (..., n, k)
        flat = bt.reshape(-1, k)
        out = np.swapaxes((flat @ a.data.T).reshape(bt.shape[:-1] + (m,)), -1, -2)

        def backward(g):
            gt = np.swapaxes(g, -1, -2)  # (..., n, m)
            g2 = gt.reshape(-1, m)
            gb = np.swapaxes((g2 @ a.data).reshape(gt.shape[:-1] + (k,)), -1, -2)
            b._accumulate(gb, owned=True)
            a._accumulate(g2.T @ flat, owned=True)

        return Tensor._from_op(out, (a, b), backward)

    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        a._accumulate(_unbroadcast(ga, a.data.shape), owned=True)
        b._accumulate(_unbroadcast(gb, b.data.shape), owned=True)

    return Tensor._from_op(out, (a, b), backward)


def transpose(a, ax1: int = -2, ax2: int = -1) -> Tensor:
    a = _wrap(a)
    out = np.swapaxes(a.data, ax1, ax2)

    def backward(g):
        a._accumulate(np.swapaxes(g, ax1, ax2))

    return Tensor._from_op(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return Tensor._from_op(out, (a,), backward)


def expand(a, shape) -> Tensor:
    a = _wrap(a)
    out = np.broadcast_to(a.data, shape).copy()

    def backward(g):
        r = _unbroadcast(g, a.data.shape)
        a._accumulate(r, owned=r is not g)

    return Tensor._from_op(out, (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(piece)

    return Tensor._from_op(out, tuple(tensors), backward)


def take(a, start: int, stop: int, axis: int = -2) -> Tensor:
    """Contiguous slice along one axis."""
    a = _wrap(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = a.data[idx].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a._accumulate(full, owned=True)

    return Tensor._from_op(out, (a,), backward)


# -- nonlinearities -------------------------------------------------------


def relu(a) -> Tensor:
    a = _wrap(a)
    out = np.maximum(a.data, 0.0)

    def backward(g):
        a._accumulate(g * (a.data > 0.0), owned=True)

    return Tensor._from_op(out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(g):
        a._accumulate(g * out * (1.0 - out), owned=True)

    return Tensor._from_op(out, (a,), backward)


def softmax_rows(a) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        a._accumulate(out * (g - inner), owned=True)

    return Tensor._from_op(out, (a,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then affine (γ, β)."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        dxhat = g * gamma.data
        gx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        x._accumulate(gx, owned=True)
        lead = tuple(range(g.ndim - 1))
        gamma._accumulate(
            _unbroadcast((g * xhat).sum(axis=lead), gamma.data.shape), owned=True
        )
        beta._accumulate(_unbroadcast(g.sum(axis=lead), beta.data.shape), owned=True)

    return Tensor._from_op(out, (x, gamma, beta), backward)


def mean(a, axis: int, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.shape[axis]

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(gg, a.data.shape) / n, owned=True)

    return Tensor._from_op(out, (a,), backward)


def sum_all(a) -> Tensor:
    a = _wrap(a)
    out = a.data.sum()

    def backward(g):
        a._accumulate(np.full_like(a.data, float(g)), owned=True)

    return Tensor._from_op(np.asarray(out), (a,), backward)


def gather(table, indices) -> Tensor:
    """Row lookup along axis 0; gradient scatters into the taken rows only."""
    table = _wrap(table)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(
            f"gather index out of range [0, {table.data.shape[0]})"
        )
    out = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        flat_idx = idx.reshape(-1)
        flat_g = np.ascontiguousarray(g).reshape(flat_idx.size, -1)
        if flat_idx.size == np.unique(flat_idx).size:
            full.reshape(full.shape[0], -1)[flat_idx] = flat_g
        else:
            order = np.argsort(flat_idx, kind="stable")
            sidx = flat_idx[order]
            starts = np.flatnonzero(
                np.concatenate(([True], sidx[1:] != sidx[:-1]))
            )
            full.reshape(full.shape[0], -1)[sidx[starts]] = np.add.reduceat(
                flat_g[order], starts, axis=0
            )
        table._accumulate(full, owned=True)

    return Tensor._from_op(out, (table,), backward)


def dropout(a, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    a = _wrap(a)
    if not training or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1): {rate}")
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = a.data * mask

    def backward(g):
        a._accumulate(g * mask, owned=True)

    return Tensor._from_op(out, (a,), backward)


def bce_with_logits(logits, labels) -> Tensor:
    """Summed binary cross-entropy on raw logits, stable log-sigmoid form."""
    logits = _wrap(logits)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != logits.data.shape:
        raise ShapeError(f"labels shape {y.shape} != logits {logits.data.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    x = logits.data
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    out = per.sum()

    def backward(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        s[~pos] = e / (1.0 + e)
        logits._accumulate(float(g) * (s - y), owned=True)

    return Tensor._from_op(np.asarray(out), (logits,), backward)


# -- parameters and optimizer ---------------------------------------------


class ParamStore(dict):
    """Named map of trainable tensors; names are unique by construction."""

    def add(self, name: str, data, requires_grad: bool = True) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter name: {name}")
        t = Tensor(data, requires_grad=requires_grad)
        self[name] = t
        return t

    def zero_grad(self):
        for t in self.values():
            t.zero_grad()

    def grads(self) -> dict[str, np.ndarray]:
        """Current gradients, zero-filled for params untouched by the tape."""
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.items()
        }


@dataclass
class AdamState:
    """Adam with decoupled weight decay; moments keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store: ParamStore, grads: dict, state: AdamState) -> None:
    """One in-place update of every parameter in `store`.

    Weight decay is decoupled: params are scaled by (1 - lr*wd) before the
    bias-corrected moment update.
    """
    for name in store:
        if name not in grads:
            raise GradientError(f"missing gradient for parameter {name!r}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in store.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param {p.data.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        if state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


def grad_check(
    f,
    store: ParamStore,
    eps: float = 1e-5,
    max_coords: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between reverse-mode and central finite differences.

    `f(store)` must return a scalar Tensor and be deterministic (dropout
    off). For tensors larger than `max_coords` a random coordinate subset
    is checked. Relative error uses max(|analytic|, |fd|, 1) as denominator
    so near-zero gradients are compared absolutely.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    store.zero_grad()
    out = f(store)
    out.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in store.items()}
    worst = 0.0
    for name, p in store.items():
        flat = p.data.reshape(-1)
        n = flat.size
        coords = (
            np.arange(n)
            if n <= max_coords
            else rng.choice(n, size=max_coords, replace=False)
        )
        a_flat = analytic[name].reshape(-1)
        for c in coords:
            orig = flat[c]
            with no_grad():  # value-only evals skip tape construction
                flat[c] = orig + eps
                hi = f(store).item()
                flat[c] = orig - eps
                lo = f(store).item()
            flat[c] = orig
            fd = (hi - lo) / (2.0 * eps)
            a = a_flat[c]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1.0)
            if rel > worst:
                worst = rel
    return worst

"""Reverse-mode tape over numpy arrays.

The tape records elementary array operations with their local vector-Jacobian
products. It is append-only, so the recording order is already a topological
order and a single reversed sweep computes exact adjoints. Values are never
mutated after recording: a tape can be swept repeatedly and always yields the
same gradients.

Only the handful of primitives needed to push (value, gradient, Hessian) jets
through small dense networks and assemble scalar losses is provided; this is
not a general-purpose autodiff system.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import InvalidHandleError
from . import kernels

__all__ = [
    "Tape",
    "Var",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "add_const",
    "mul_const",
    "rsub_const",
    "square",
    "tanh",
    "relu",
    "dot_last",
    "add_bias",
    "expand_dims",
    "reshape",
    "squeeze_last",
    "pair_product",
    "wsum",
    "sum_all",
    "mean_all",
    "jet_affine",
    "jet_tanh",
    "input_jet",
    "take_row",
    "rows_transpose",
    "jet_contract",
    "loss_backward",
]


class Var:
    """Handle to one recorded value on a tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.idx]

    @property
    def shape(self):
        return np.shape(self.tape.values[self.idx])

    # light operator sugar for loss assembly in tests and drivers
    def __add__(self, other):
        return add(self, other) if isinstance(other, Var) else add_const(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Var) else add_const(self, -np.asarray(other))

    def __rsub__(self, other):
        return rsub_const(other, self)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Var) else mul_const(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


class BufferPool:
    """Reusable array arena keyed by (shape, dtype).

    Training loops rebuild an identically shaped tape every epoch; routing the
    large persistent outputs through a pool lets each epoch overwrite the same
    pages instead of faulting fresh ones. Resetting the pool invalidates every
    tape that allocated from it.
    """

    __slots__ = ("_buffers", "_cursors")

    def __init__(self):
        self._buffers: dict = {}
        self._cursors: dict = {}

    def reset(self):
        for key in self._cursors:
            self._cursors[key] = 0

    def take(self, shape, dtype) -> np.ndarray:
        key = (tuple(shape), np.dtype(dtype))
        bufs = self._buffers.setdefault(key, [])
        cur = self._cursors.get(key, 0)
        self._cursors[key] = cur + 1
        if cur < len(bufs):
            return bufs[cur]
        arr = np.empty(key[0], key[1])
        bufs.append(arr)
        return arr


class Tape:
    """Append-only operation record supporting scalar reverse sweeps."""

    def __init__(self, pool: BufferPool | None = None):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list = []
        self.param_slices: dict[int, slice] = {}
        self.n_params: int = 0
        self.pool = pool

    def empty(self, shape, dtype) -> np.ndarray:
        if self.pool is not None:
            return self.pool.take(shape, dtype)
        return np.empty(shape, dtype)

    def __len__(self) -> int:
        return len(self.values)

    def _record(self, value, parent_vars, vjp) -> Var:
        self.values.append(value)
        self.parents.append(tuple(v.idx for v in parent_vars))
        self.vjps.append(vjp)
        return Var(self, len(self.values) - 1)

    def constant(self, value) -> Var:
        return self._record(np.asarray(value), (), None)

    def param(self, value: np.ndarray, flat_slice: slice) -> Var:
        """Register a leaf whose adjoint lands in ``flat_slice`` of the gradient."""
        var = self._record(np.asarray(value), (), None)
        self.param_slices[var.idx] = flat_slice
        stop = flat_slice.stop if flat_slice.stop is not None else 0
        self.n_params = max(self.n_params, stop)
        return var

    def backward(self, loss: Var) -> np.ndarray:
        """Reverse sweep from a recorded scalar; returns the flat parameter gradient."""
        if loss.tape is not self or not (0 <= loss.idx < len(self.values)):
            raise InvalidHandleError("loss handle does not belong to this tape")
        if np.ndim(self.values[loss.idx]) != 0:
            raise InvalidHandleError("backward requires a scalar loss handle")
        adjoints: list = [None] * len(self.values)
        adjoints[loss.idx] = np.asarray(1.0, dtype=np.result_type(self.values[loss.idx], np.float64))
        grad = np.zeros(self.n_params)
        for idx in range(loss.idx, -1, -1):
            adj = adjoints[idx]
            if adj is None:
                continue
            sl = self.param_slices.get(idx)
            if sl is not None:
                grad[sl] += np.asarray(adj, dtype=np.float64).ravel()
            vjp = self.vjps[idx]
            if vjp is None:
                continue
            contributions = vjp(adj)
            for parent_idx, contrib in zip(self.parents[idx], contributions):
                if contrib is None:
                    continue
                if adjoints[parent_idx] is None:
                    adjoints[parent_idx] = contrib
                else:
                    adjoints[parent_idx] = adjoints[parent_idx] + contrib
        return grad


def loss_backward(tape: Tape, loss: Var) -> np.ndarray:
    """Gradient of a tape-recorded scalar with respect to all registered parameters."""
    return tape.backward(loss)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum an adjoint down to the shape of the argument it belongs to."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value

    def vjp(g):
        return _unbroadcast(g, np.shape(av)), _unbroadcast(g, np.shape(bv))

    return a.tape._record(av + bv, (a, b), vjp)


def sub(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value

    def vjp(g):
        return _unbroadcast(g, np.shape(av)), _unbroadcast(-g, np.shape(bv))

    return a.tape._record(av - bv, (a, b), vjp)


def mul(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value

    def vjp(g):
        return _unbroadcast(g * bv, np.shape(av)), _unbroadcast(g * av, np.shape(bv))

    return a.tape._record(av * bv, (a, b), vjp)


def neg(a: Var) -> Var:
    return a.tape._record(-a.value, (a,), lambda g: (-g,))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape._record(a.value * c, (a,), lambda g: (g * c,))


def add_const(a: Var, c) -> Var:
    c = np.asarray(c)
    shape = np.shape(a.value)
    return a.tape._record(a.value + c, (a,), lambda g: (_unbroadcast(g, shape),))


def mul_const(a: Var, c) -> Var:
    c = np.asarray(c)
    shape = np.shape(a.value)
    return a.tape._record(a.value * c, (a,), lambda g: (_unbroadcast(g * c, shape),))


def rsub_const(c, a: Var) -> Var:
    c = np.asarray(c)
    shape = np.shape(a.value)
    return a.tape._record(c - a.value, (a,), lambda g: (_unbroadcast(-g, shape),))


def square(a: Var) -> Var:
    av = a.value
    return a.tape._record(av * av, (a,), lambda g: (2.0 * g * av,))


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return a.tape._record(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Var) -> Var:
    av = a.value
    mask = av > 0
    return a.tape._record(np.where(mask, av, 0.0), (a,), lambda g: (g * mask,))


def dot_last(a, w) -> Var:
    """Contract the last axis of ``a`` with the first axis of ``w`` (a @ w).

    Either argument may be a plain array (treated as a constant); at least one
    must be a Var.
    """
    a_var = isinstance(a, Var)
    w_var = isinstance(w, Var)
    av = a.value if a_var else np.asarray(a)
    wv = w.value if w_var else np.asarray(w)
    tape = a.tape if a_var else w.tape
    value = np.tensordot(av, wv, axes=([-1], [0]))
    parents = tuple(v for v in (a, w) if isinstance(v, Var))

    def vjp(g):
        out = []
        if a_var:
            out.append(np.tensordot(g, wv, axes=([-1], [1])))
        if w_var:
            k = av.shape[-1]
            m = wv.shape[1]
            out.append(av.reshape(-1, k).T @ g.reshape(-1, m))
        return tuple(out)

    return tape._record(value, parents, vjp)


def add_bias(a: Var, b: Var) -> Var:
    """a + b with b broadcast over all leading axes of a."""
    av, bv = a.value, b.value

    def vjp(g):
        gb = g.reshape(-1, bv.shape[-1]).sum(axis=0) if g.ndim > 1 else g
        return g, gb

    return a.tape._record(av + bv, (a, b), vjp)


def expand_dims(a: Var, axis: int) -> Var:
    return a.tape._record(
        np.expand_dims(a.value, axis), (a,), lambda g: (np.squeeze(g, axis=axis),)
    )


def reshape(a: Var, shape) -> Var:
    old = np.shape(a.value)
    return a.tape._record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def squeeze_last(a: Var) -> Var:
    old = np.shape(a.value)
    return a.tape._record(a.value[..., 0], (a,), lambda g: (g.reshape(old),))


def pair_product(g: Var, iu0: np.ndarray, iu1: np.ndarray) -> Var:
    """Per-pair products G_i * G_j along axis -2, for packed Hessian assembly.

    ``g`` has shape (..., d, w); the result has shape (..., npairs, w) where
    pair p multiplies rows iu0[p] and iu1[p].
    """
    gv = g.value
    left = gv[..., iu0, :]
    right = gv[..., iu1, :]

    def vjp(adj):
        out = np.zeros_like(gv)
        np.add.at(out, (Ellipsis, iu0, slice(None)), adj * right)
        np.add.at(out, (Ellipsis, iu1, slice(None)), adj * left)
        return (out,)

    return g.tape._record(left * right, (g,), vjp)


def wsum(x: Var, weights: np.ndarray) -> Var:
    """Row-wise weighted sum over axis 1: out[n] = sum_p weights[n, p] * x[n, p]."""
    weights = np.asarray(weights)
    value = np.einsum("np,np->n", x.value, weights)
    return x.tape._record(value, (x,), lambda g: (g[:, None] * weights,))


def jet_affine(j: Var, w: Var, b: Var) -> Var:
    """Affine layer on a combined jet array: out = J @ W, bias added to row 0.

    ``j`` is (R, n, k), ``w`` a (k, m) Var, ``b`` an (m,) Var. One gemm covers
    value, gradient and Hessian rows at once.
    """
    jv = j.value
    wv, bv = w.value, b.value
    tape = w.tape
    r, n, k = jv.shape
    m = wv.shape[1]
    value = tape.empty((r, n, m), jv.dtype)
    np.matmul(jv.reshape(-1, k), wv, out=value.reshape(-1, m))
    value[0] += bv

    def vjp(g):
        gj = tape.empty((r, n, k), jv.dtype)
        np.matmul(g.reshape(-1, m), wv.T, out=gj.reshape(-1, k))
        gw = jv.reshape(-1, k).T @ g.reshape(-1, m)
        gb = g[0].sum(axis=0)
        return gj, gw, gb

    return tape._record(value, (j, w, b), vjp)


def jet_tanh(j: Var, iu0: np.ndarray, iu1: np.ndarray, d: int) -> Var:
    """Fused tanh activation on a combined jet array (value/grad/Hessian rows)."""
    jv = j.value
    tape = j.tape
    out = kernels.tanh_jet_forward(
        jv, iu0, iu1, d, out=tape.empty(jv.shape, jv.dtype), pool=tape.pool
    )
    a_out = out[0]

    def vjp(g):
        gj = kernels.tanh_jet_backward(
            g, jv, a_out, iu0, iu1, d,
            out=tape.empty(jv.shape, jv.dtype), pool=tape.pool,
        )
        return (gj,)

    return tape._record(out, (j,), vjp)


def input_jet(x, w: Var, b: Var, order: int, iu0: np.ndarray, iu1: np.ndarray) -> Var:
    """Fused first layer: tanh(x @ W0 + b0) with gradient/Hessian rows attached.

    ``x`` is a constant (n, d) point array. The input coordinate jet is never
    materialized; gradient rows come from W0 directly and input Hessian rows
    are identically zero.
    """
    tape = w.tape
    wv, bv = w.value, b.value
    x = np.asarray(x)
    n, width = x.shape[0], wv.shape[1]
    z = tape.empty((n, width), wv.dtype)
    np.matmul(x, wv, out=z)
    z += bv
    d = wv.shape[0]
    rows = 1 if order == 0 else (1 + d if order == 1 else 1 + d + len(iu0))
    out = kernels.input_tanh_jet_forward(
        z, wv, order, iu0, iu1, out=tape.empty((rows, n, width), wv.dtype), pool=tape.pool
    )
    a_out = out[0]

    def vjp(g):
        gz, gw = kernels.input_tanh_jet_backward(
            g, a_out, wv, order, iu0, iu1, pool=tape.pool
        )
        gw_total = x.T @ gz if gw is None else gw + x.T @ gz
        return gw_total, gz.sum(axis=0)

    return tape._record(out, (w, b), vjp)


def take_row(a: Var, r: int) -> Var:
    """Row r of a (R, n) array as an (n,) vector."""
    av = a.value

    def vjp(g):
        out = np.zeros_like(av)
        out[r] = g
        return (out,)

    return a.tape._record(av[r].copy(), (a,), vjp)


def rows_transpose(a: Var, start: int, stop: int) -> Var:
    """Rows [start, stop) of a (R, n) array, transposed to (n, stop-start)."""
    av = a.value

    def vjp(g):
        out = np.zeros_like(av)
        out[start:stop] = g.T
        return (out,)

    return a.tape._record(np.ascontiguousarray(av[start:stop].T), (a,), vjp)


def jet_contract(j: Var, coeff_rows: np.ndarray) -> Var:
    """Row-weighted contraction out[n] = sum_r coeff_rows[r, n] * J[r, n].

    With coefficient rows [-c; b; paired A entries] this evaluates the full
    second-order operator A:D2u + b.grad u - c u in one pass.
    """
    jv = j.value
    value = np.einsum("rn,rn->n", jv, coeff_rows)
    return j.tape._record(value, (j,), lambda g: (g[None, :] * coeff_rows,))


def sum_all(a: Var) -> Var:
    shape = np.shape(a.value)
    dtype = a.value.dtype if hasattr(a.value, "dtype") else np.float64
    return a.tape._record(
        np.sum(a.value), (a,), lambda g: (np.broadcast_to(np.asarray(g, dtype=dtype), shape),)
    )


def mean_all(a: Var) -> Var:
    shape = np.shape(a.value)
    n = max(int(np.prod(shape)), 1)
    dtype = a.value.dtype if hasattr(a.value, "dtype") else np.float64
    return a.tape._record(
        np.mean(a.value),
        (a,),
        lambda g: (np.broadcast_to(np.asarray(g, dtype=dtype) / n, shape),),
    )

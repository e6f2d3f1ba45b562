"""Small dense tanh networks with exact input-jet propagation.

The forward pass pushes (value, input gradient, packed input Hessian) through
each layer analytically, recording everything on a reverse tape so that any
scalar loss built from the jet admits exact parameter gradients. Packed
Hessians store the d(d+1)/2 upper-triangle entries; symmetry of the unpacked
matrix is therefore structural, not numerical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..exceptions import InvalidArchitectureError, PropagationError
from . import tape as T

__all__ = [
    "NetworkArch",
    "ParamLayout",
    "PackedIndex",
    "Jet2",
    "JetBatch",
    "init_network",
    "forward_jets",
    "jet2_eval",
    "eval_values",
    "eval_jets",
    "finite_diff_jet",
]


@dataclass(frozen=True)
class NetworkArch:
    """Fully connected tanh network shape; output is always scalar."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    activation: str = "tanh"
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise InvalidArchitectureError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.hidden_widths:
            raise InvalidArchitectureError("at least one hidden layer is required")
        if any(w < 1 for w in self.hidden_widths):
            raise InvalidArchitectureError(f"zero-width layer in {self.hidden_widths}")
        if self.activation != "tanh":
            raise InvalidArchitectureError(f"unsupported activation {self.activation!r}")
        if self.output_dim != 1:
            raise InvalidArchitectureError("output_dim is fixed at 1")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)


@dataclass(frozen=True)
class ParamLayout:
    """Maps flat parameter coordinates to per-layer weight and bias slices."""

    arch: NetworkArch
    slices: tuple[tuple[slice, slice, tuple[int, int]], ...] = field(init=False)
    n_params: int = field(init=False)

    def __post_init__(self):
        dims = self.arch.layer_dims
        slices = []
        offset = 0
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w_slice = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b_slice = slice(offset, offset + fan_out)
            offset += fan_out
            slices.append((w_slice, b_slice, (fan_in, fan_out)))
        object.__setattr__(self, "slices", tuple(slices))
        object.__setattr__(self, "n_params", offset)

    def weights(self, theta: np.ndarray, layer: int) -> np.ndarray:
        w_slice, _, shape = self.slices[layer]
        return theta[w_slice].reshape(shape)

    def biases(self, theta: np.ndarray, layer: int) -> np.ndarray:
        _, b_slice, _ = self.slices[layer]
        return theta[b_slice]


@lru_cache(maxsize=None)
def _layout(arch: NetworkArch) -> ParamLayout:
    return ParamLayout(arch)


def param_layout(arch: NetworkArch) -> ParamLayout:
    return _layout(arch)


class PackedIndex:
    """Upper-triangle pair bookkeeping for packed d x d symmetric matrices."""

    def __init__(self, d: int):
        self.d = int(d)
        iu = np.triu_indices(d)
        self.rows = iu[0]
        self.cols = iu[1]
        self.n_pairs = len(self.rows)
        # contraction weights: A : H = sum_p weight_p * A_p * H_p
        self.weights = np.where(self.rows == self.cols, 1.0, 2.0)
        self._full_index = np.zeros((d, d), dtype=np.intp)
        for p, (i, j) in enumerate(zip(self.rows, self.cols)):
            self._full_index[i, j] = p
            self._full_index[j, i] = p

    def pack(self, full: np.ndarray) -> np.ndarray:
        """Extract upper-triangle entries; works on (..., d, d) stacks."""
        return full[..., self.rows, self.cols]

    def unpack(self, packed: np.ndarray) -> np.ndarray:
        """Rebuild the full symmetric matrix; both triangles share entries bitwise."""
        return packed[..., self._full_index]


@lru_cache(maxsize=None)
def packed_index(d: int) -> PackedIndex:
    return PackedIndex(d)


@dataclass
class Jet2:
    """Value, input gradient and input Hessian of the network at one point.

    The Var handles keep every entry attached to the tape, so scalars formed
    from them stay differentiable with respect to the parameters.
    """

    value: float
    grad: np.ndarray
    hess: np.ndarray
    value_var: T.Var
    grad_var: T.Var
    hess_var: T.Var
    tape: T.Tape


@dataclass
class JetBatch:
    """Tape-recorded jets over a batch of points.

    ``combined`` stacks everything as (R, n) with row 0 the value, rows 1..d
    the gradient and rows d+1..d+P the packed Hessian; the split accessors
    record slice ops lazily on first use.
    """

    combined: T.Var  # (R, n)
    order: int
    pidx: PackedIndex
    _value: T.Var | None = None
    _grad: T.Var | None = None
    _hess: T.Var | None = None

    @property
    def value(self) -> T.Var:
        if self._value is None:
            self._value = T.take_row(self.combined, 0)
        return self._value

    @property
    def grad(self) -> T.Var:
        if self._grad is None:
            d = self.pidx.d
            self._grad = T.rows_transpose(self.combined, 1, 1 + d)
        return self._grad

    @property
    def hess(self) -> T.Var:
        """Packed upper-triangle Hessian entries, shape (n, d(d+1)/2)."""
        if self._hess is None:
            d = self.pidx.d
            self._hess = T.rows_transpose(self.combined, 1 + d, 1 + d + self.pidx.n_pairs)
        return self._hess


def init_network(arch: NetworkArch, seed: int, dtype=np.float64) -> np.ndarray:
    """Xavier-uniform weights, zero biases; deterministic per seed."""
    layout = _layout(arch)
    rng = np.random.default_rng(seed)
    theta = np.zeros(layout.n_params, dtype=dtype)
    for w_slice, _, (fan_in, fan_out) in layout.slices:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        theta[w_slice] = rng.uniform(-bound, bound, size=fan_in * fan_out).astype(dtype)
    return theta


def forward_jets(tape: T.Tape, arch: NetworkArch, theta: np.ndarray, points: np.ndarray,
                 order: int = 2) -> JetBatch:
    """Record the network forward pass with input jets up to ``order``.

    ``points`` has shape (n, input_dim). Order 0 records only values (enough
    for Dirichlet terms), order 1 adds input gradients, order 2 adds packed
    input Hessians.
    """
    layout = _layout(arch)
    d = arch.input_dim
    pidx = packed_index(d)
    points = np.asarray(points)
    if points.ndim != 2 or points.shape[1] != d:
        raise PropagationError(f"expected points of shape (n, {d}), got {points.shape}")

    leaves = []
    for w_slice, b_slice, shape in layout.slices:
        w = tape.param(theta[w_slice].reshape(shape).astype(points.dtype, copy=False), w_slice)
        b = tape.param(theta[b_slice].astype(points.dtype, copy=False), b_slice)
        leaves.append((w, b))
    tape.n_params = max(tape.n_params, layout.n_params)

    jd = 0 if order == 0 else d
    j = T.input_jet(points, leaves[0][0], leaves[0][1], order, pidx.rows, pidx.cols)
    for layer in range(1, len(leaves)):
        w, b = leaves[layer]
        j = T.jet_affine(j, w, b)
        if layer < len(leaves) - 1:
            j = T.jet_tanh(j, pidx.rows, pidx.cols, jd)

    return JetBatch(combined=T.squeeze_last(j), order=order, pidx=pidx)


def jet2_eval(arch: NetworkArch, theta: np.ndarray, x: np.ndarray, tape: T.Tape) -> Jet2:
    """Exact value/gradient/Hessian of the network at one point, tape-recorded."""
    x = np.asarray(x, dtype=float)
    if x.shape != (arch.input_dim,):
        raise PropagationError(f"expected point of length {arch.input_dim}, got shape {x.shape}")
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise PropagationError(f"non-finite input coordinate at index {int(bad[0])}")
    jet = forward_jets(tape, arch, theta, x[None, :], order=2)
    pidx = jet.pidx
    return Jet2(
        value=float(jet.value.value[0]),
        grad=np.array(jet.grad.value[0]),
        hess=pidx.unpack(jet.hess.value[0]),
        value_var=jet.value,
        grad_var=jet.grad,
        hess_var=jet.hess,
        tape=tape,
    )


def eval_values(arch: NetworkArch, theta: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Plain forward pass (no tape): network values at a batch of points."""
    layout = _layout(arch)
    a = np.asarray(points)
    n_layers = len(layout.slices)
    for layer in range(n_layers):
        a = a @ layout.weights(theta, layer) + layout.biases(theta, layer)
        if layer < n_layers - 1:
            a = np.tanh(a)
    return a[:, 0]


def eval_jets(arch: NetworkArch, theta: np.ndarray, points: np.ndarray):
    """Inference jets: (values (n,), grads (n,d), packed Hessians (n,P))."""
    jet = forward_jets(T.Tape(), arch, theta, points, order=2)
    return jet.value.value, jet.grad.value, jet.hess.value


def finite_diff_jet(field, x: np.ndarray, h: float):
    """Central-difference gradient and Hessian of a scalar field at ``x``.

    Test oracle; the Hessian is symmetrized by averaging.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    f0 = field(x)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fp, fm = field(x + e), field(x - e)
        grad[i] = (fp - fm) / (2.0 * h)
        hess[i, i] = (fp - 2.0 * f0 + fm) / (h * h)
    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h
            ej[j] = h
            val = (
                field(x + ei + ej) - field(x + ei - ej) - field(x - ei + ej) + field(x - ei - ej)
            ) / (4.0 * h * h)
            hess[i, j] = val
            hess[j, i] = val
    return grad, 0.5 * (hess + hess.T)

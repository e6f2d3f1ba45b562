"""Fused jet-propagation kernels (vectorized numpy).

A layer jet is stored as one array J of shape (R, n, width) with row 0 the
value, rows 1..d the input-gradient components and rows d+1..d+P the packed
upper-triangle Hessian entries. Leading-axis rows keep every slice contiguous,
so the whole affine step is one gemm on the reshaped array and the activation
kernels stream full (n, width) blocks.

Large temporaries are drawn from the caller's buffer pool where available;
allocating megabyte-scale arrays per call otherwise dominates the epoch cost
through page faults.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "tanh_jet_forward",
    "tanh_jet_backward",
    "input_tanh_jet_forward",
    "input_tanh_jet_backward",
]


def _taker(pool, shape, dtype):
    if pool is None:
        return lambda: np.empty(shape, dtype)
    return lambda: pool.take(shape, dtype)


def _derivs(a, take):
    """tanh' and tanh'' expressed through the activation value a."""
    s = take()
    np.multiply(a, a, out=s)
    np.subtract(1.0, s, out=s)
    sp = take()
    np.multiply(a, s, out=sp)
    sp *= -2.0
    return s, sp


def tanh_jet_forward(j, iu0, iu1, d: int, out=None, pool=None):
    """Push a combined jet through tanh: a, s*G, s*H + s'*G_i*G_j."""
    if out is None:
        out = np.empty_like(j)
    a = out[0]
    np.tanh(j[0], out=a)
    if d == 0:
        return out
    take = _taker(pool, a.shape, a.dtype)
    s, sp = _derivs(a, take)
    for r in range(1, 1 + d):
        np.multiply(s, j[r], out=out[r])
    if j.shape[0] > 1 + d:
        tmp = take()
        for q in range(len(iu0)):
            row = out[1 + d + q]
            np.multiply(j[1 + iu0[q]], j[1 + iu1[q]], out=row)
            row *= sp
            np.multiply(s, j[1 + d + q], out=tmp)
            row += tmp
    return out


def tanh_jet_backward(adj, j, a_out, iu0, iu1, d: int, out=None, pool=None):
    """Adjoint of :func:`tanh_jet_forward` with respect to the input jet."""
    gj = out if out is not None else np.empty_like(j)
    a = a_out
    take = _taker(pool, a.shape, a.dtype)
    s, sp = _derivs(a, take)
    gz = gj[0]
    if d == 0:
        np.multiply(adj[0], s, out=gz)
        return gj
    acc = take()
    tmp = take()
    # gradient rows: d(s*G)/dz = sp*G, d(s*G)/dG = s
    np.multiply(adj[1], j[1], out=acc)
    for r in range(2, 1 + d):
        np.multiply(adj[r], j[r], out=tmp)
        acc += tmp
    acc *= sp
    for r in range(1, 1 + d):
        np.multiply(s, adj[r], out=gj[r])
    if j.shape[0] > 1 + d:
        # dsp/dz = -2 (s^2 + a*sp)
        dsp = take()
        np.multiply(s, s, out=dsp)
        np.multiply(a, sp, out=tmp)
        dsp += tmp
        dsp *= -2.0
        hacc = take()
        pacc = take()
        prod = take()
        spah = take()
        first = True
        for q in range(len(iu0)):
            i0, i1 = 1 + int(iu0[q]), 1 + int(iu1[q])
            ah = adj[1 + d + q]
            np.multiply(j[1 + d + q], ah, out=tmp)
            np.multiply(j[i0], j[i1], out=prod)
            prod *= ah
            if first:
                hacc[...] = tmp
                pacc[...] = prod
                first = False
            else:
                hacc += tmp
                pacc += prod
            np.multiply(sp, ah, out=spah)
            np.multiply(spah, j[i1], out=tmp)
            gj[i0] += tmp
            np.multiply(spah, j[i0], out=tmp)
            gj[i1] += tmp
            np.multiply(s, ah, out=gj[1 + d + q])
        hacc *= sp
        acc += hacc
        pacc *= dsp
        acc += pacc
    np.multiply(adj[0], s, out=gz)
    gz += acc
    return gj


def input_tanh_jet_forward(z, w0, order: int, iu0, iu1, out=None, pool=None):
    """First activated jet from pre-activations z = X@W0 + b0 and W0 itself.

    Gradient rows are s * W0[r]; Hessian rows are s' * W0_i * W0_j (the input
    coordinate Hessian is identically zero).
    """
    n, width = z.shape
    d = w0.shape[0]
    if order == 0:
        if out is None:
            out = np.empty((1, n, width), dtype=z.dtype)
        np.tanh(z, out=out[0])
        return out
    p = len(iu0) if order >= 2 else 0
    if out is None:
        out = np.empty((1 + d + p, n, width), dtype=z.dtype)
    a = out[0]
    np.tanh(z, out=a)
    take = _taker(pool, a.shape, a.dtype)
    s, sp = _derivs(a, take)
    for r in range(d):
        np.multiply(s, w0[r], out=out[1 + r])
    for q in range(p):
        np.multiply(sp, w0[iu0[q]] * w0[iu1[q]], out=out[1 + d + q])
    return out


def input_tanh_jet_backward(adj, a_out, w0, order: int, iu0, iu1, pool=None):
    """Adjoint of :func:`input_tanh_jet_forward`.

    Returns (gz, gw_direct): the adjoint of the pre-activations and the direct
    W0 contribution through the gradient/Hessian rows (the caller adds the
    value-path X^T @ gz term).
    """
    a = a_out
    take = _taker(pool, a.shape, a.dtype)
    s, sp = _derivs(a, take)
    gz = take()
    if order == 0:
        np.multiply(adj[0], s, out=gz)
        return gz, None
    d = w0.shape[0]
    gw = np.empty_like(w0)
    acc = take()
    tmp = take()
    np.multiply(adj[1], w0[0], out=acc)
    np.multiply(adj[1], s, out=tmp)
    gw[0] = tmp.sum(axis=0)
    for r in range(1, d):
        np.multiply(adj[1 + r], w0[r], out=tmp)
        acc += tmp
        np.multiply(adj[1 + r], s, out=tmp)
        gw[r] = tmp.sum(axis=0)
    acc *= sp
    if order >= 2 and adj.shape[0] > 1 + d:
        dsp = take()
        np.multiply(s, s, out=dsp)
        np.multiply(a, sp, out=tmp)
        dsp += tmp
        dsp *= -2.0
        pacc = take()
        first = True
        for q in range(len(iu0)):
            i0, i1 = int(iu0[q]), int(iu1[q])
            ah = adj[1 + d + q]
            np.multiply(ah, w0[i0] * w0[i1], out=tmp)
            if first:
                pacc[...] = tmp
                first = False
            else:
                pacc += tmp
            np.multiply(ah, sp, out=tmp)
            hsum = tmp.sum(axis=0)
            gw[i0] += hsum * w0[i1]
            gw[i1] += hsum * w0[i0]
        pacc *= dsp
        acc += pacc
    np.multiply(adj[0], s, out=gz)
    gz += acc
    return gz, gw

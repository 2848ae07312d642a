"""Differentiable primitives.

Every op takes the tape as first argument (tape=None skips recording, a
plain inference forward), accepts Tensors or constant numpy arrays, and
registers an exact analytic backward rule. Reductions accumulate in
float64 and cast back to the working dtype.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor

__all__ = [
    "add", "sub", "mul", "matmul", "transpose", "relu", "tanh", "exp", "log",
    "sigmoid", "softplus", "softmax", "concat", "maxpool", "gather_rows",
    "reshape", "tsum", "tmean", "minimum", "maximum", "clip",
    "gaussian_log_prob", "bdot", "bweight", "col_slice",
]


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _result_dtype(*xs):
    for x in xs:
        if _data(x).dtype == np.float64:
            return np.float64
    return np.float32


def _unbroadcast(grad, shape):
    """Sum grad over the axes numpy broadcasting expanded to reach `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(tape, a, b, forward, da, db):
    ad, bd = _data(a), _data(b)
    out = Tensor(forward(ad, bd), dtype=_result_dtype(a, b))

    def backward(g):
        ga = _unbroadcast(da(g, ad, bd), ad.shape) if isinstance(a, Tensor) else None
        gb = _unbroadcast(db(g, ad, bd), bd.shape) if isinstance(b, Tensor) else None
        return ga, gb

    if tape is not None:
        tape.record(out, (a, b), backward)
    return out


def add(tape, a, b):
    return _binary(tape, a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(tape, a, b):
    return _binary(tape, a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(tape, a, b):
    return _binary(tape, a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def matmul(tape, a, b):
    ad, bd = _data(a), _data(b)
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    out = Tensor(ad @ bd, dtype=_result_dtype(a, b))

    def backward(g):
        ga = g @ bd.T if isinstance(a, Tensor) else None
        gb = ad.T @ g if isinstance(b, Tensor) else None
        return ga, gb

    if tape is not None:
        tape.record(out, (a, b), backward)
    return out


def transpose(tape, a):
    ad = _data(a)
    out = Tensor(ad.T.copy(), dtype=ad.dtype)
    if tape is not None:
        tape.record(out, (a,), lambda g: (g.T,))
    return out


def _unary(tape, a, forward, local_grad):
    ad = _data(a)
    out = Tensor(forward(ad), dtype=_result_dtype(a))

    def backward(g):
        return (g * local_grad(ad, out.data),)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def relu(tape, a):
    return _unary(tape, a, lambda x: np.maximum(x, 0),
                  lambda x, y: (x > 0).astype(x.dtype))


def tanh(tape, a):
    return _unary(tape, a, np.tanh, lambda x, y: 1.0 - y * y)


def exp(tape, a):
    return _unary(tape, a, np.exp, lambda x, y: y)


def log(tape, a):
    return _unary(tape, a, np.log, lambda x, y: 1.0 / x)


def sigmoid(tape, a):
    def fwd(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _unary(tape, a, fwd, lambda x, y: y * (1.0 - y))


def softplus(tape, a):
    def fwd(x):
        return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))

    def grad(x, y):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _unary(tape, a, fwd, grad)


def softmax(tape, a, axis=-1):
    ad = _data(a)
    shifted = ad - ad.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = (e / e.sum(axis=axis, keepdims=True, dtype=np.float64)).astype(_result_dtype(a))
    out = Tensor(y)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def concat(tape, parts, axis=0):
    datas = [_data(p) for p in parts]
    out = Tensor(np.concatenate(datas, axis=axis), dtype=_result_dtype(*parts))
    sizes = [d.shape[axis] for d in datas]

    def backward(g):
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return [p if isinstance(part, Tensor) else None
                for p, part in zip(pieces, parts)]

    if tape is not None:
        tape.record(out, tuple(parts), backward)
    return out


def maxpool(tape, a, axis=0):
    """Elementwise max over one axis; gradient routes to the first argmax."""
    ad = _data(a)
    idx = np.argmax(ad, axis=axis)
    out = Tensor(np.take_along_axis(ad, np.expand_dims(idx, axis), axis=axis)
                 .squeeze(axis=axis), dtype=ad.dtype)

    def backward(g):
        gx = np.zeros_like(ad)
        np.put_along_axis(gx, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis=axis)
        return (gx,)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def gather_rows(tape, a, idx, pad_value=0.0):
    """out[..., :] = a[idx[...], :]; negative indices yield pad_value rows."""
    ad = _data(a)
    idx = np.asarray(idx, dtype=np.intp)
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    data = ad[safe]
    if not valid.all():
        data = data.copy()
        data[~valid] = pad_value
    out = Tensor(data, dtype=ad.dtype)

    def backward(g):
        gx = np.zeros_like(ad)
        np.add.at(gx, safe[valid], g[valid])
        return (gx,)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def reshape(tape, a, shape):
    ad = _data(a)
    out = Tensor(ad.reshape(shape).copy(), dtype=ad.dtype)

    def backward(g):
        return (g.reshape(ad.shape),)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def tsum(tape, a, axis=None):
    ad = _data(a)
    out = Tensor(np.asarray(ad.sum(axis=axis, dtype=np.float64)), dtype=ad.dtype)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, ad.shape).astype(ad.dtype).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), ad.shape).astype(ad.dtype).copy(),)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def tmean(tape, a, axis=None):
    ad = _data(a)
    n = ad.size if axis is None else ad.shape[axis]
    out = Tensor(np.asarray(ad.mean(axis=axis, dtype=np.float64)), dtype=ad.dtype)

    def backward(g):
        if axis is None:
            return ((np.broadcast_to(g, ad.shape) / n).astype(ad.dtype),)
        return ((np.broadcast_to(np.expand_dims(g, axis), ad.shape) / n).astype(ad.dtype),)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def minimum(tape, a, b):
    return _binary(tape, a, b, np.minimum,
                   lambda g, x, y: g * (x <= y),
                   lambda g, x, y: g * (x > y))


def maximum(tape, a, b):
    return _binary(tape, a, b, np.maximum,
                   lambda g, x, y: g * (x >= y),
                   lambda g, x, y: g * (x < y))


def clip(tape, a, lo, hi):
    ad = _data(a)
    out = Tensor(np.clip(ad, lo, hi), dtype=ad.dtype)

    def backward(g):
        return (g * ((ad >= lo) & (ad <= hi)),)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def bdot(tape, a, b):
    """Batched dot: a (B, K, D) with b (B, D) -> (B, K)."""
    ad, bd = _data(a), _data(b)
    if ad.ndim != 3 or bd.ndim != 2 or ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
        raise ValueError(f"bdot shape mismatch: {ad.shape} with {bd.shape}")
    out = Tensor(np.einsum("bkd,bd->bk", ad, bd), dtype=_result_dtype(a, b))

    def backward(g):
        ga = g[:, :, None] * bd[:, None, :] if isinstance(a, Tensor) else None
        gb = np.einsum("bk,bkd->bd", g, ad) if isinstance(b, Tensor) else None
        return ga, gb

    if tape is not None:
        tape.record(out, (a, b), backward)
    return out


def bweight(tape, w, v):
    """Batched weighted sum: w (B, K) with v (B, K, D) -> (B, D)."""
    wd, vd = _data(w), _data(v)
    if wd.ndim != 2 or vd.ndim != 3 or wd.shape != vd.shape[:2]:
        raise ValueError(f"bweight shape mismatch: {wd.shape} with {vd.shape}")
    out = Tensor(np.einsum("bk,bkd->bd", wd, vd), dtype=_result_dtype(w, v))

    def backward(g):
        gw = np.einsum("bd,bkd->bk", g, vd) if isinstance(w, Tensor) else None
        gv = wd[:, :, None] * g[:, None, :] if isinstance(v, Tensor) else None
        return gw, gv

    if tape is not None:
        tape.record(out, (w, v), backward)
    return out


def col_slice(tape, a, start, stop):
    """Contiguous column slice of a 2D tensor."""
    ad = _data(a)
    out = Tensor(ad[:, start:stop].copy(), dtype=ad.dtype)

    def backward(g):
        gx = np.zeros_like(ad)
        gx[:, start:stop] = g
        return (gx,)

    if tape is not None:
        tape.record(out, (a,), backward)
    return out


def gaussian_log_prob(tape, mean, log_std, x):
    """Per-row log density of a diagonal Gaussian, summed over the last axis.

    mean, log_std, x: (N, D) -> (N,).
    """
    md, sd, xd = _data(mean), _data(log_std), _data(x)
    if md.shape != sd.shape or md.shape != xd.shape:
        raise ValueError(
            f"gaussian_log_prob shape mismatch: mean {md.shape}, "
            f"log_std {sd.shape}, x {xd.shape}")
    inv_var = np.exp(-2.0 * sd)
    diff = xd - md
    per_dim = -0.5 * np.log(2.0 * np.pi) - sd - 0.5 * diff * diff * inv_var
    out = Tensor(np.asarray(per_dim.sum(axis=-1, dtype=np.float64)),
                 dtype=_result_dtype(mean, log_std, x))

    def backward(g):
        gcol = np.expand_dims(g, -1)
        gm = gcol * diff * inv_var if isinstance(mean, Tensor) else None
        gs = gcol * (diff * diff * inv_var - 1.0) if isinstance(log_std, Tensor) else None
        gx = -gcol * diff * inv_var if isinstance(x, Tensor) else None
        return gm, gs, gx

    if tape is not None:
        tape.record(out, (mean, log_std, x), backward)
    return out

"""Differentiable neural-network operations built on :mod:`riplab.tensor`.

Most ops here are fused: the forward pass runs in numpy and a hand-written
backward rule is attached with :func:`custom_op`.  Each one is covered by
the finite-difference checker in the test suite.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _sigmoid, concat, custom_op


def silu(x: Tensor) -> Tensor:
    v = x.data
    s = _sigmoid(v)
    return custom_op(v * s, (x,), lambda g: (g * (s + v * s * (1.0 - s)),), "silu")


def softplus(x: Tensor) -> Tensor:
    v = x.data
    out = np.logaddexp(0.0, v)
    return custom_op(out, (x,), lambda g: (g * _sigmoid(v),), "softplus")


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    v = x.data
    scale = np.where(v > 0, 1.0, slope)
    return custom_op(v * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return custom_op(out, (x,), back, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return custom_op(out, (x,), back, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis with population variance, then ``gamma * xhat + beta``."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: last dim {d} does not match gamma {gamma.shape} / beta {beta.shape}")
    v = x.data
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gm = gamma.data

    def back(g):
        gx_hat = g * gm
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(v.ndim - 1))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return custom_op(xhat * gm + beta.data, (x, gamma, beta), back, "layer_norm")


def causal_conv1d(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """Depthwise causal convolution over the time axis.

    ``x`` is ``[..., T, C]``, ``w`` is ``[K, C]`` and ``bias`` is ``[C]``.
    Output row ``t`` only sees input rows ``t-K+1 .. t``; earlier rows are
    treated as zeros.
    """
    if w.ndim != 2 or x.shape[-1] != w.shape[1] or bias.shape != (w.shape[1],):
        raise ShapeError(f"causal_conv1d channel mismatch: x {x.shape}, w {w.shape}, bias {bias.shape}")
    K = w.shape[0]
    if K < 1:
        raise ShapeError("causal_conv1d needs a kernel of size >= 1")
    T = x.shape[-2]
    pad = [(0, 0)] * (x.ndim - 2) + [(K - 1, 0), (0, 0)]
    xp = np.pad(x.data, pad)
    wd = w.data
    out = np.broadcast_to(bias.data, x.shape).copy()
    for k in range(K):
        out += wd[k] * xp[..., k:k + T, :]

    def back(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(wd)
        red = tuple(range(g.ndim - 1))
        for k in range(K):
            gxp[..., k:k + T, :] += wd[k] * g
            gw[k] = (g * xp[..., k:k + T, :]).sum(axis=red)
        return gxp[..., K - 1:, :], gw, g.sum(axis=red)

    return custom_op(out, (x, w, bias), back, "causal_conv1d")


def masked_mean_pool(x: Tensor, lengths) -> Tensor:
    """Mean over the first ``lengths`` rows of the time axis.

    ``x`` is ``[T, D]`` with an integer length, or ``[B, T, D]`` with one
    length per sample.  Padded rows never enter the result.
    """
    lengths = np.atleast_1d(np.asarray(lengths, dtype=np.int64))
    single = x.ndim == 2
    v = x.data[None] if single else x.data
    B, T, _ = v.shape
    if lengths.shape != (B,):
        raise ShapeError(f"masked_mean_pool: {lengths.shape[0]} lengths for batch of {B}")
    if np.any(lengths < 1) or np.any(lengths > T):
        raise ValueError(f"masked_mean_pool: lengths must lie in [1, {T}], got {lengths.tolist()}")
    mask = np.arange(T)[None, :] < lengths[:, None]
    scale = (mask / lengths[:, None])[..., None]
    out = np.where(mask[..., None], v, 0.0).sum(axis=1) / lengths[:, None]

    def back(g):
        gx = scale * g[:, None, :]
        return (gx[0] if single else gx,)

    return custom_op(out[0] if single else out, (x,), back, "masked_mean_pool")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under ``softmax(logits)``."""
    targets = np.asarray(targets, dtype=np.int64)
    B, K = logits.shape
    if targets.shape != (B,):
        raise ShapeError(f"cross_entropy: {targets.shape} targets for {B} rows")
    if np.any(targets < 0) or np.any(targets >= K):
        raise ValueError(f"cross_entropy: target codes must lie in [0, {K})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    rows = np.arange(B)
    loss = (lse - z[rows, targets]).mean()

    def back(g):
        p = np.exp(z - lse[:, None])
        p[rows, targets] -= 1.0
        return (p * (g / B),)

    return custom_op(np.asarray(loss), (logits,), back, "cross_entropy")


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return custom_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def lstm_recurrence(xw: Tensor, w_hh: Tensor) -> Tensor:
    """Run an LSTM over pre-projected inputs.

    ``xw`` is ``[B, T, 4H]`` holding ``x_t W_ih + b`` with gate blocks in the
    order input, forget, cell, output.  ``w_hh`` is ``[H, 4H]``.  Returns the
    hidden states ``[B, T, H]`` starting from zero state.
    """
    B, T, G = xw.shape
    H = w_hh.shape[0]
    if G != 4 * H or w_hh.shape[1] != 4 * H:
        raise ShapeError(f"lstm_recurrence: xw {xw.shape} incompatible with w_hh {w_hh.shape}")
    xv, wv = xw.data, w_hh.data
    gates = np.empty((B, T, 4 * H))
    cs = np.zeros((B, T + 1, H))
    hs = np.zeros((B, T + 1, H))
    for t in range(T):
        a = xv[:, t] + hs[:, t] @ wv
        gi = _sigmoid(a[:, :H])
        gf = _sigmoid(a[:, H:2 * H])
        gg = np.tanh(a[:, 2 * H:3 * H])
        go = _sigmoid(a[:, 3 * H:])
        cs[:, t + 1] = gf * cs[:, t] + gi * gg
        hs[:, t + 1] = go * np.tanh(cs[:, t + 1])
        gates[:, t] = np.concatenate([gi, gf, gg, go], axis=1)

    def back(g):
        dxw = np.empty_like(xv)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            gi, gf, gg, go = np.split(gates[:, t], 4, axis=1)
            tc = np.tanh(cs[:, t + 1])
            dh = g[:, t] + dh_next
            dc = dh * go * (1.0 - tc * tc) + dc_next
            da = np.concatenate([
                dc * gg * gi * (1.0 - gi),
                dc * cs[:, t] * gf * (1.0 - gf),
                dc * gi * (1.0 - gg * gg),
                dh * tc * go * (1.0 - go),
            ], axis=1)
            dxw[:, t] = da
            dh_next = da @ wv.T
            dc_next = dc * gf
        dw = hs[:, :T].reshape(-1, H).T @ dxw.reshape(-1, 4 * H)
        return dxw, dw

    return custom_op(hs[:, 1:].copy(), (xw, w_hh), back, "lstm")


def gru_recurrence(xw: Tensor, w_hh: Tensor, b_hh: Tensor) -> Tensor:
    """Run a GRU over pre-projected inputs.

    ``xw`` is ``[B, T, 3H]`` (``x_t W_ih + b_ih``, blocks reset, update,
    candidate).  The candidate uses ``r * (h W_hn + b_hn)``.  Returns the
    hidden states ``[B, T, H]`` from zero state.
    """
    B, T, G = xw.shape
    H = w_hh.shape[0]
    if G != 3 * H or w_hh.shape[1] != 3 * H or b_hh.shape != (3 * H,):
        raise ShapeError(f"gru_recurrence: xw {xw.shape} incompatible with w_hh {w_hh.shape}")
    xv, wv, bv = xw.data, w_hh.data, b_hh.data
    hs = np.zeros((B, T + 1, H))
    cache = np.empty((B, T, 4 * H))
    for t in range(T):
        hw = hs[:, t] @ wv + bv
        r = _sigmoid(xv[:, t, :H] + hw[:, :H])
        z = _sigmoid(xv[:, t, H:2 * H] + hw[:, H:2 * H])
        n = np.tanh(xv[:, t, 2 * H:] + r * hw[:, 2 * H:])
        hs[:, t + 1] = (1.0 - z) * n + z * hs[:, t]
        cache[:, t] = np.concatenate([r, z, n, hw[:, 2 * H:]], axis=1)

    def back(g):
        dxw = np.empty_like(xv)
        dhw_all = np.empty_like(xv)
        dh_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            r, z, n, hn = np.split(cache[:, t], 4, axis=1)
            dh = g[:, t] + dh_next
            dan = dh * (1.0 - z) * (1.0 - n * n)
            daz = dh * (hs[:, t] - n) * z * (1.0 - z)
            dar = dan * hn * r * (1.0 - r)
            dxw[:, t] = np.concatenate([dar, daz, dan], axis=1)
            dhw = np.concatenate([dar, daz, dan * r], axis=1)
            dhw_all[:, t] = dhw
            dh_next = dh * z + dhw @ wv.T
        dw = hs[:, :T].reshape(-1, H).T @ dhw_all.reshape(-1, 3 * H)
        return dxw, dw, dhw_all.sum(axis=(0, 1))

    return custom_op(hs[:, 1:].copy(), (xw, w_hh, b_hh), back, "gru")


def gather_time(x: Tensor, index: np.ndarray) -> Tensor:
    """Per-sample gather along the time axis: ``out[b, t] = x[b, index[b, t]]``."""
    B = x.shape[0]
    rows = np.arange(B)[:, None]
    return x[rows, index]


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, mask: np.ndarray | None,
               running_mean: np.ndarray, running_var: np.ndarray, training: bool,
               momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch norm over every axis but the last, restricted to ``mask`` positions.

    In training mode the running statistics are updated in place (unbiased
    variance, torch convention).  ``mask`` has the shape of ``x`` without its
    channel axis; ``None`` means every position is valid.
    """
    if not training:
        scale = gamma.data / np.sqrt(running_var + eps)
        shift = beta.data - running_mean * scale
        return x * scale + shift
    m = np.ones(x.shape[:-1]) if mask is None else np.asarray(mask, dtype=np.float64)
    n = m.sum()
    red = tuple(range(x.ndim - 1))
    m = m[..., None]
    mu = (x * m).sum(axis=red) * (1.0 / n)
    xc = x - mu
    var = (xc * xc * m).sum(axis=red) * (1.0 / n)
    out = xc / (var + eps).sqrt() * gamma + beta
    unbiased = var.data * (n / max(n - 1.0, 1.0))
    running_mean *= 1.0 - momentum
    running_mean += momentum * mu.data
    running_var *= 1.0 - momentum
    running_var += momentum * unbiased
    return out


def causal_conv1d_full(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Dense causal convolution: ``x [B, T, Cin]``, ``w [K, Cin, Cout]`` -> ``[B, T, Cout]``.

    Left-padded with ``K - 1`` zero frames so the output keeps length ``T``
    and frame ``t`` never sees frames after ``t``.
    """
    K, c_in, c_out = w.shape
    if x.shape[-1] != c_in or (bias is not None and bias.shape != (c_out,)):
        raise ShapeError(f"causal_conv1d_full: x {x.shape}, w {w.shape}, bias {bias.shape}")
    B, T, _ = x.shape
    if K > 1:
        x = concat([Tensor.zeros(B, K - 1, c_in), x], axis=1)
    cols = concat([x[:, k:k + T, :] for k in range(K)], axis=-1) if K > 1 else x
    out = cols @ w.reshape(K * c_in, c_out)
    return out if bias is None else out + bias

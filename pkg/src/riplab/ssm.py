"""Selective state-space (SSD) layer with scalar decay per head.

Recurrence, per head ``h``::

    alpha_t = exp(-dt[t, h] * exp(a_log[h]))
    state_t = alpha_t * state_{t-1} + dt[t, h] * outer(X[t, h], B[t])
    Y[t, h] = state_t @ C[t]

``B`` and ``C`` are shared across heads.  All functions accept optional
leading batch axes in front of the time axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .nn import Linear, Module, Parameter
from .tensor import Tensor, concat, stack, where


class ScanError(ValueError):
    pass


def _check_scan_inputs(X: Tensor, dt: Tensor, B: Tensor, C: Tensor, a_log: Tensor) -> None:
    if X.ndim < 3:
        raise ScanError(f"X must be [..., T, heads, head_dim], got {X.shape}")
    lead, T, H = X.shape[:-3], X.shape[-3], X.shape[-2]
    if T < 1:
        raise ScanError("scan needs at least one time step")
    if dt.shape != lead + (T, H):
        raise ScanError(f"dt shape {dt.shape} does not match X {X.shape}")
    if B.shape[:-1] != lead + (T,) or C.shape != B.shape:
        raise ScanError(f"B {B.shape} / C {C.shape} do not match X {X.shape}")
    if a_log.shape != (H,):
        raise ScanError(f"a_log shape {a_log.shape} != ({H},)")
    if np.any(dt.data < 0):
        raise ScanError("dt must be nonnegative")


def ssd_scan(X: Tensor, dt: Tensor, B: Tensor, C: Tensor, a_log: Tensor) -> Tensor:
    """Sequential reference scan; returns ``Y`` shaped like ``X``."""
    _check_scan_inputs(X, dt, B, C, a_log)
    T = X.shape[-3]
    alpha = (-(dt * a_log.exp())).exp()
    state = Tensor.zeros(*(X.shape[:-3] + X.shape[-2:] + (B.shape[-1],)))
    ys = []
    for t in range(T):
        inject = (dt[..., t, :].unsqueeze(-1) * X[..., t, :, :]).unsqueeze(-1) \
            * B[..., t, :].unsqueeze(-2).unsqueeze(-2)
        state = alpha[..., t, :].unsqueeze(-1).unsqueeze(-1) * state + inject
        ys.append((state * C[..., t, :].unsqueeze(-2).unsqueeze(-2)).sum(axis=-1))
    return stack(ys, axis=-3)


def ssd_scan_chunked(X: Tensor, dt: Tensor, B: Tensor, C: Tensor, a_log: Tensor, chunk: int) -> Tensor:
    """Chunked scan: quadratic closed form inside chunks, state carried between them.

    Matches :func:`ssd_scan` to rounding error and is differentiable through
    the same tensor ops.
    """
    if chunk < 1:
        raise ScanError(f"chunk must be >= 1, got {chunk}")
    _check_scan_inputs(X, dt, B, C, a_log)
    T = X.shape[-3]
    log_decay = -(dt * a_log.exp())                       # [..., T, H]
    state = None
    outs = []
    for c0 in range(0, T, chunk):
        c1 = min(c0 + chunk, T)
        Q = c1 - c0
        ld = log_decay[..., c0:c1, :].swapaxes(-1, -2)    # [..., H, Q]
        dtc = dt[..., c0:c1, :].swapaxes(-1, -2)          # [..., H, Q]
        Xc = X[..., c0:c1, :, :].swapaxes(-2, -3)         # [..., H, Q, P]
        Bc = B[..., c0:c1, :]                             # [..., Q, N]
        Cc = C[..., c0:c1, :]
        cum = ld.cumsum(axis=-1)                          # [..., H, Q]
        seg = cum.unsqueeze(-1) - cum.unsqueeze(-2)       # [..., H, t, s]
        causal = np.tril(np.ones((Q, Q), dtype=bool))
        L = where(causal, seg, -np.inf).exp()
        CB = Cc @ Bc.swapaxes(-1, -2)                     # [..., t, s]
        weights = L * CB.unsqueeze(-3) * dtc.unsqueeze(-2)
        Yc = weights @ Xc                                 # [..., H, Q, P]
        if state is not None:
            carried = Cc.unsqueeze(-3) @ state.swapaxes(-1, -2)   # [..., H, Q, P]
            Yc = Yc + cum.exp().unsqueeze(-1) * carried
        outs.append(Yc.swapaxes(-2, -3))
        to_end = (cum[..., -1:] - cum).exp() * dtc        # [..., H, Q]
        fresh = (to_end.unsqueeze(-1) * Xc).swapaxes(-1, -2) @ Bc.unsqueeze(-3)  # [..., H, P, N]
        if state is None:
            state = fresh
        else:
            state = cum[..., -1:].exp().unsqueeze(-1) * state + fresh
    return outs[0] if len(outs) == 1 else concat(outs, axis=-3)


@dataclass(frozen=True)
class SSDConfig:
    d_model: int
    expand: int = 8
    n_heads: int = 4
    d_state: int = 32
    d_conv: int = 4
    chunk: int = 64

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model

    @property
    def head_dim(self) -> int:
        return self.d_inner // self.n_heads


class Mamba2Block(Module):
    """Gated SSD block: in-projection, causal conv + SiLU, scan, gate, norm, out-projection.

    The in-projection emits, in order, the gate ``z`` (``d_inner``), the
    conv path ``X|B|C`` (``d_inner + 2 * d_state``) and raw step sizes
    (``n_heads``).
    """

    def __init__(self, cfg: SSDConfig, rng: np.random.Generator):
        if cfg.d_inner % cfg.n_heads:
            raise ValueError(f"d_inner {cfg.d_inner} not divisible by n_heads {cfg.n_heads}")
        self.cfg = cfg
        d_in, N, H = cfg.d_inner, cfg.d_state, cfg.n_heads
        conv_ch = d_in + 2 * N
        self.in_proj = Linear(cfg.d_model, d_in + conv_ch + H, rng)
        bound = 1.0 / np.sqrt(cfg.d_conv)
        self.conv_w = Parameter(rng.uniform(-bound, bound, size=(cfg.d_conv, conv_ch)))
        self.conv_b = Parameter(rng.uniform(-bound, bound, size=conv_ch))
        # softplus(dt_bias) = 0.01 at init
        self.dt_bias = Parameter(np.full(H, np.log(np.expm1(0.01))))
        self.a_log = Parameter(np.log(np.linspace(1.0, H, H)))
        self.norm_g = Parameter(np.ones(d_in))
        self.norm_b = Parameter(np.zeros(d_in))
        self.out_proj = Linear(d_in, cfg.d_model, rng)

    def __call__(self, x: Tensor, chunked: bool = True) -> Tensor:
        cfg = self.cfg
        d_in, N, H, P = cfg.d_inner, cfg.d_state, cfg.n_heads, cfg.head_dim
        if x.shape[-1] != cfg.d_model:
            raise ValueError(f"block expects width {cfg.d_model}, got {x.shape[-1]}")
        proj = self.in_proj(x)
        z = proj[..., :d_in]
        xbc = proj[..., d_in:2 * d_in + 2 * N]
        dt_raw = proj[..., 2 * d_in + 2 * N:]
        xbc = F.silu(F.causal_conv1d(xbc, self.conv_w, self.conv_b))
        lead = x.shape[:-1]
        X = xbc[..., :d_in].reshape(lead + (H, P))
        Bm = xbc[..., d_in:d_in + N]
        Cm = xbc[..., d_in + N:]
        dt = F.softplus(dt_raw + self.dt_bias)
        if chunked:
            y = ssd_scan_chunked(X, dt, Bm, Cm, self.a_log, cfg.chunk)
        else:
            y = ssd_scan(X, dt, Bm, Cm, self.a_log)
        y = y.reshape(lead + (d_in,)) * F.silu(z)
        y = F.layer_norm(y, self.norm_g, self.norm_b)
        return self.out_proj(y)


def mamba2_block(x: Tensor, block: Mamba2Block) -> Tensor:
    return block(x)

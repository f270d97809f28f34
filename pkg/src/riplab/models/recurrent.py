"""CNN-LSTM (single and multi-view) and the GRU early-fusion baseline."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import functional as F
from ..nn import Linear, Module, Parameter
from ..tensor import Tensor, concat
from .base import N_CLASSES, Classifier

VIEWS3 = ("front", "left", "right")


def _views(n_views: int) -> tuple[str, ...]:
    if n_views not in (1, 3):
        raise ValueError(f"n_views must be 1 or 3, got {n_views}")
    return VIEWS3[:n_views]


def reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """Per-sample time reversal inside the valid prefix; padded steps map to themselves."""
    t = np.arange(T)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(t < lengths, lengths - 1 - t, t)


class LSTMDirection(Module):
    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(hidden)
        self.w_ih = Parameter(rng.uniform(-bound, bound, size=(n_in, 4 * hidden)))
        self.w_hh = Parameter(rng.uniform(-bound, bound, size=(hidden, 4 * hidden)))
        self.bias = Parameter(rng.uniform(-bound, bound, size=4 * hidden))

    def __call__(self, x: Tensor) -> Tensor:
        return F.lstm_recurrence(x @ self.w_ih + self.bias, self.w_hh)


class BiLSTMLayer(Module):
    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.fwd = LSTMDirection(n_in, hidden, rng)
        self.bwd = LSTMDirection(n_in, hidden, rng)

    def __call__(self, x: Tensor, lengths=None) -> Tensor:
        """``x [B, T, C]`` (or ``[T, C]``) -> ``[B, T, 2 * hidden]``, forward then backward states."""
        single = x.ndim == 2
        if single:
            x = x.unsqueeze(0)
        B, T = x.shape[:2]
        lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
        rev = reverse_index(lengths, T)
        h_fwd = self.fwd(x)
        h_bwd = F.gather_time(self.bwd(F.gather_time(x, rev)), rev)
        out = concat([h_fwd, h_bwd], axis=-1)
        return out[0] if single else out


def lstm_forward(layer: BiLSTMLayer, x: Tensor, lengths=None) -> Tensor:
    return layer(x, lengths)


class ConvBlock(Module):
    """Causal 1-D conv, masked batch norm, LeakyReLU, dropout.

    The conv has no bias: batch norm subtracts the per-channel mean, so a
    bias there would never receive a gradient.
    """

    def __init__(self, n_in: int, channels: int, kernel: int, rng: np.random.Generator,
                 slope: float = 0.01, dropout: float = 0.25):
        bound = 1.0 / np.sqrt(n_in * kernel)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(kernel, n_in, channels)))
        self.bn_gamma = Parameter(np.ones(channels))
        self.bn_beta = Parameter(np.zeros(channels))
        self._buffers = {"bn_mean": np.zeros(channels), "bn_var": np.ones(channels)}
        self.slope = slope
        self.p = dropout

    def __call__(self, x: Tensor, mask: np.ndarray, rng: np.random.Generator) -> Tensor:
        h = F.causal_conv1d_full(x, self.weight)
        h = F.batch_norm(h, self.bn_gamma, self.bn_beta, mask, self._buffers["bn_mean"],
                         self._buffers["bn_var"], self.training)
        h = F.leaky_relu(h, self.slope)
        return F.dropout(h, self.p, rng, self.training)


class CnnLstmModel(Classifier):
    """Per-view conv blocks, feature concatenation, stacked BiLSTM, last-valid-step head."""

    def __init__(self, feature_dim: int, rng: np.random.Generator, n_views: int = 1, conv_channels: int = 64,
                 kernel: int = 3, hidden: int = 128, layers: int = 2, dropout: float = 0.25,
                 slope: float = 0.01, dropout_seed: int = 0):
        self.views = _views(n_views)
        self.feature_dim = feature_dim
        self.convs = [ConvBlock(feature_dim, conv_channels, kernel, rng, slope, dropout) for _ in self.views]
        widths = [conv_channels * n_views] + [2 * hidden] * (layers - 1)
        self.lstm = [BiLSTMLayer(w, hidden, rng) for w in widths]
        self.head = Linear(2 * hidden, N_CLASSES, rng)
        self.hidden = hidden
        self.dropout_rng = np.random.default_rng(dropout_seed)

    def reseed_dropout(self, seed: int) -> None:
        self.dropout_rng = np.random.default_rng(seed)

    def logits(self, inputs: Sequence[Tensor], lengths) -> Tensor:
        lengths = self._check_inputs(inputs, lengths, self.feature_dim)
        B, T = inputs[0].shape[:2]
        mask = np.arange(T)[None, :] < lengths[:, None]
        feats = [conv(x, mask, self.dropout_rng) for conv, x in zip(self.convs, inputs)]
        h = feats[0] if len(feats) == 1 else concat(feats, axis=-1)
        for layer in self.lstm:
            h = layer(h, lengths)
        rows = np.arange(B)
        H = self.hidden
        rep = concat([h[rows, lengths - 1, :H], h[:, 0, H:]], axis=-1)
        return self.head(rep)


class BaselineRnnModel(Classifier):
    """Single GRU layer over per-frame concatenated views; last valid state feeds the head."""

    def __init__(self, feature_dim: int, rng: np.random.Generator, n_views: int = 1, hidden: int = 128):
        self.views = _views(n_views)
        self.feature_dim = feature_dim
        n_in = feature_dim * n_views
        bound = 1.0 / np.sqrt(hidden)
        self.w_ih = Parameter(rng.uniform(-bound, bound, size=(n_in, 3 * hidden)))
        self.b_ih = Parameter(rng.uniform(-bound, bound, size=3 * hidden))
        self.w_hh = Parameter(rng.uniform(-bound, bound, size=(hidden, 3 * hidden)))
        self.b_hh = Parameter(rng.uniform(-bound, bound, size=3 * hidden))
        self.head = Linear(hidden, N_CLASSES, rng)

    def logits(self, inputs: Sequence[Tensor], lengths) -> Tensor:
        lengths = self._check_inputs(inputs, lengths, self.feature_dim)
        x = inputs[0] if len(inputs) == 1 else concat(list(inputs), axis=-1)
        hs = F.gru_recurrence(x @ self.w_ih + self.b_ih, self.w_hh, self.b_hh)
        last = hs[np.arange(hs.shape[0]), lengths - 1]
        return self.head(last)

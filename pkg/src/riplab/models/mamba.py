"""Mamba2 classifiers: a single-view model and the learnable-weight view ensemble."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import functional as F
from ..nn import Linear, Parameter
from ..ssm import Mamba2Block, SSDConfig
from ..tensor import Tensor
from .base import N_CLASSES, Classifier


class FrontalMambaModel(Classifier):
    """Input projection, a stack of Mamba2 blocks, masked temporal mean pool, linear head."""

    def __init__(self, feature_dim: int, rng: np.random.Generator, d_model: int = 64, n_blocks: int = 2,
                 expand: int = 8, n_heads: int = 4, d_state: int = 32, d_conv: int = 4, chunk: int = 64,
                 view: str = "front"):
        self.views = (view,)
        self.feature_dim = feature_dim
        self.input_proj = Linear(feature_dim, d_model, rng)
        cfg = SSDConfig(d_model=d_model, expand=expand, n_heads=n_heads, d_state=d_state,
                        d_conv=d_conv, chunk=chunk)
        self.blocks = [Mamba2Block(cfg, rng) for _ in range(n_blocks)]
        self.head = Linear(d_model, N_CLASSES, rng)

    def logits(self, inputs: Sequence[Tensor], lengths) -> Tensor:
        lengths = self._check_inputs(inputs, lengths, self.feature_dim)
        h = self.input_proj(inputs[0])
        for block in self.blocks:
            h = block(h)
        return self.head(F.masked_mean_pool(h, lengths))


class MultiViewEnsemble(Classifier):
    """Three single-view Mamba2 models combined by learnable view weights.

    ``combine="logits"`` weights the per-view logits; ``"probs"`` weights the
    per-view softmax outputs.  Either way one softmax is applied to the
    weighted sum.
    """

    def __init__(self, members: Sequence[FrontalMambaModel], combine: str = "logits"):
        if len(members) != 3:
            raise ValueError("ensemble needs exactly three view models")
        if combine not in ("logits", "probs"):
            raise ValueError(f"combine must be 'logits' or 'probs', got {combine!r}")
        self.members = list(members)
        self.views = tuple(m.views[0] for m in members)
        self.combine = combine
        self.view_weights = Parameter(np.full(3, 1.0 / 3.0))

    def logits(self, inputs: Sequence[Tensor], lengths) -> Tensor:
        lengths = self._check_inputs(inputs, lengths)
        total = None
        for i, (model, x) in enumerate(zip(self.members, inputs)):
            out = model.logits([x], lengths)
            if self.combine == "probs":
                out = F.softmax(out)
            term = out * self.view_weights[i]
            total = term if total is None else total + term
        return total

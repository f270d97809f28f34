from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import functional as F
from ..nn import Module
from ..tensor import Tensor

N_CLASSES = 6


class Classifier(Module):
    """A sequence classifier over one or more views.

    Subclasses implement :meth:`logits`; ``views`` names the inputs they
    consume, in order.
    """

    views: tuple[str, ...] = ("front",)

    def logits(self, inputs: Sequence[Tensor], lengths) -> Tensor:
        raise NotImplementedError

    def forward(self, inputs: Sequence[Tensor], lengths) -> Tensor:
        return F.softmax(self.logits(inputs, lengths))

    __call__ = forward

    def _check_inputs(self, inputs: Sequence[Tensor], lengths, width: int | None = None) -> np.ndarray:
        if len(inputs) != len(self.views):
            raise ValueError(f"expected {len(self.views)} view batches {self.views}, got {len(inputs)}")
        B, T = inputs[0].shape[:2]
        for name, x in zip(self.views, inputs):
            if x.ndim != 3 or x.shape[:2] != (B, T):
                raise ValueError(f"view '{name}' batch {x.shape} misaligned with {inputs[0].shape}")
            if width is not None and x.shape[2] != width:
                raise ValueError(f"view '{name}' has feature width {x.shape[2]}, model expects {width}")
        lengths = np.asarray(lengths, dtype=np.int64)
        if lengths.shape != (B,) or np.any(lengths < 1) or np.any(lengths > T):
            raise ValueError(f"lengths {lengths.tolist()} invalid for batch [{B}, {T}]")
        return lengths

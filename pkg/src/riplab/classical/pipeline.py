"""Frame sampling -> flattening -> SMOTE -> one-vs-rest RBF SVM."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data.dataset import Sample
from ..data.labels import LABELS
from .resample import ResampleReport, sample_views, smote
from .svm import BinarySVM, OvrSvmModel, train_ovr


def flatten_samples(samples: Sequence[Sample], views: Sequence[str], k_frames: int,
                    rng: np.random.Generator) -> np.ndarray:
    return np.stack([sample_views([s.views[v] for v in views], k_frames, rng) for s in samples])


@dataclass
class SvmClassifier:
    views: tuple[str, ...] = ("front",)
    k_frames: int = 16
    C: float = 1.0
    gamma: float | None = None
    k_neighbors: int = 5
    tol: float = 1e-3
    max_passes: int = 1000
    seed: int = 0
    model: OvrSvmModel | None = None
    resample_report: ResampleReport | None = field(default=None, repr=False)

    def _rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def fit(self, samples: Sequence[Sample]) -> "SvmClassifier":
        X = flatten_samples(samples, self.views, self.k_frames, self._rng(0))
        y = np.array([int(s.label) for s in samples])
        Xb, yb, self.resample_report = smote(X, y, self.k_neighbors, self._rng(1))
        self.model = train_ovr(Xb, yb, len(LABELS), self.C, self.gamma, self.tol, self.max_passes, self.seed)
        return self

    def predict(self, samples: Sequence[Sample]) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("SvmClassifier is not fitted")
        X = flatten_samples(samples, self.views, self.k_frames, self._rng(2))
        return self.model.predict(X)

    # checkpoint round-trip

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for c, m in enumerate(self.model.machines):
            if m is None:
                continue
            out[f"svm.{c}.support_vectors"] = m.support_vectors
            out[f"svm.{c}.dual_coef"] = m.dual_coef
            out[f"svm.{c}.bias"] = np.array([m.bias])
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray], gamma: float, C: float) -> None:
        machines = []
        for c in range(len(LABELS)):
            key = f"svm.{c}.support_vectors"
            if key not in arrays:
                machines.append(None)
                continue
            sv = arrays[key]
            machines.append(BinarySVM(sv, arrays[f"svm.{c}.dual_coef"], float(arrays[f"svm.{c}.bias"][0]),
                                      gamma, C, np.arange(len(sv))))
        self.model = OvrSvmModel(machines, gamma, C)

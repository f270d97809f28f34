"""Fixed-size frame sampling and SMOTE oversampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ResampleError(ValueError):
    pass


def sample_frame_indices(T: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` sorted frame indices: distinct when ``T >= k``, with replacement otherwise."""
    if T < 1:
        raise ResampleError("cannot sample frames from an empty sequence")
    if k < 1:
        raise ResampleError(f"k must be >= 1, got {k}")
    idx = rng.choice(T, size=k, replace=T < k)
    return np.sort(idx)


def random_frame_sample(seq: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    seq = np.asarray(seq)
    idx = sample_frame_indices(seq.shape[0], k, rng)
    return seq[idx].reshape(-1)


def sample_views(views: Sequence[np.ndarray], k: int, rng: np.random.Generator) -> np.ndarray:
    """Sample one index set and apply it to every view, then concatenate the flat vectors."""
    idx = sample_frame_indices(views[0].shape[0], k, rng)
    return np.concatenate([np.asarray(v)[idx].reshape(-1) for v in views])


@dataclass
class ResampleReport:
    counts_before: dict[int, int]
    counts_after: dict[int, int]
    parent: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    neighbor: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    coef: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_synthetic(self) -> int:
        return int(self.parent.size)


def smote(X: np.ndarray, y: np.ndarray, k_neighbors: int = 5,
          rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray, ResampleReport]:
    """Oversample every class up to the majority count.

    Originals come first, unchanged; synthetic rows follow in class order.
    Row ``i`` of the synthetic block is
    ``X[parent[i]] + coef[i] * (X[neighbor[i]] - X[parent[i]])`` where the
    neighbor is one of the ``k_neighbors`` nearest same-class rows.
    """
    rng = rng or np.random.default_rng(0)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ResampleError(f"X {X.shape} and y {y.shape} disagree")
    if k_neighbors < 1:
        raise ResampleError("k_neighbors must be >= 1")
    classes, counts = np.unique(y, return_counts=True)
    before = {int(c): int(n) for c, n in zip(classes, counts)}
    lonely = [int(c) for c, n in zip(classes, counts) if n < 2]
    if lonely:
        raise ResampleError(f"classes {lonely} have a single row; SMOTE cannot interpolate")
    target = int(counts.max())

    parents, neighbors, coefs = [], [], []
    for c, n in zip(classes, counts):
        need = target - int(n)
        if need == 0:
            continue
        members = np.flatnonzero(y == c)
        Xc = X[members]
        sq = (Xc * Xc).sum(axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * Xc @ Xc.T
        np.fill_diagonal(d2, np.inf)
        k = min(k_neighbors, len(members) - 1)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        base = rng.integers(0, len(members), size=need)
        pick = nn[base, rng.integers(0, k, size=need)]
        parents.append(members[base])
        neighbors.append(members[pick])
        coefs.append(rng.random(need))

    if not parents:
        return X.copy(), y.copy(), ResampleReport(before, dict(before))
    parent = np.concatenate(parents)
    neighbor = np.concatenate(neighbors)
    coef = np.concatenate(coefs)
    synth = X[parent] + coef[:, None] * (X[neighbor] - X[parent])
    X_out = np.concatenate([X, synth])
    y_out = np.concatenate([y, y[parent]])
    after = {int(c): target for c in classes}
    return X_out, y_out, ResampleReport(before, after, parent, neighbor, coef)

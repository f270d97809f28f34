"""Synthetic multi-view maneuver dataset standing in for the real embeddings.

Each class ``c`` owns a unit prototype direction ``u_c`` and a temporal
envelope ``g_c``.  Front-view frames are ``signal * g_c(t / T) * u_c`` plus
AR(1) noise.  Mirror views are fixed random linear maps of the front latent
plus their own noise; lane changes get an amplified signal in the mirror on
their side.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import Dataset, Sample, split_dataset
from .labels import LABELS, ManeuverLabel

DEFAULT_CLASS_PROBS = {"ST": 0.30, "RT": 0.25, "LT": 0.20, "RLC": 0.10, "LLC": 0.05, "SS": 0.10}


@dataclass
class GenConfig:
    n_samples: int = 1000
    dim: int = 64
    fps: float = 2.0
    min_seconds: float = 5.0
    max_seconds: float = 30.0
    class_probs: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_PROBS))
    signal: float = 2.0
    noise: float = 1.0
    ar_coef: float = 0.8
    n_views: int = 3
    mirror_gain: float = 2.5
    view_noise: float = 0.5
    split_ratios: tuple = (0.5, 0.2, 0.3)

    def __post_init__(self):
        if set(self.class_probs) != set(LABELS):
            raise ValueError(f"class_probs must have exactly the keys {LABELS}")
        total = sum(self.class_probs.values())
        if abs(total - 1.0) > 1e-9 or min(self.class_probs.values()) < 0:
            raise ValueError(f"class distribution must be nonnegative and sum to 1, got {total}")
        if self.n_views not in (1, 3):
            raise ValueError("n_views must be 1 or 3")
        if self.n_samples < 1 or self.dim < 1 or self.fps <= 0:
            raise ValueError("n_samples, dim and fps must be positive")
        if not 0 < self.min_seconds <= self.max_seconds:
            raise ValueError("need 0 < min_seconds <= max_seconds")
        if not 0 <= self.ar_coef < 1:
            raise ValueError("ar_coef must lie in [0, 1)")
        self.split_ratios = tuple(self.split_ratios)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d


def envelope(label: ManeuverLabel, s: np.ndarray) -> np.ndarray:
    """Temporal signal profile over normalized time ``s`` in [0, 1)."""
    if label == ManeuverLabel.ST:
        return np.ones_like(s)
    if label == ManeuverLabel.SS:
        return np.exp(-3.0 * s)
    centre = 0.55 if label in (ManeuverLabel.RT, ManeuverLabel.LT) else 0.7
    return 1.0 / (1.0 + np.exp(-(s - centre) / 0.08))


def _ar1(rng: np.random.Generator, T: int, dim: int, scale: float, phi: float) -> np.ndarray:
    eps = rng.standard_normal((T, dim)) * scale
    out = np.empty((T, dim))
    out[0] = eps[0]
    innov = np.sqrt(1.0 - phi * phi)
    for t in range(1, T):
        out[t] = phi * out[t - 1] + innov * eps[t]
    return out


def generate_synthetic(cfg: GenConfig, seed: int) -> tuple[Dataset, dict]:
    """Build the dataset in memory (with pinned splits) and a generation report."""
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((len(LABELS), cfg.dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    mirrors = {v: rng.standard_normal((cfg.dim, cfg.dim)) / np.sqrt(cfg.dim) for v in ("left", "right")}
    boosted = {"left": ManeuverLabel.LLC, "right": ManeuverLabel.RLC}
    views = ("front", "left", "right") if cfg.n_views == 3 else ("front",)

    probs = np.array([cfg.class_probs[name] for name in LABELS])
    labels = rng.choice(len(LABELS), size=cfg.n_samples, p=probs)
    t_min = max(1, int(round(cfg.min_seconds * cfg.fps)))
    t_max = max(t_min, int(round(cfg.max_seconds * cfg.fps)))
    lengths = rng.integers(t_min, t_max + 1, size=cfg.n_samples)

    samples = []
    width = len(str(cfg.n_samples - 1))
    for i, (c, T) in enumerate(zip(labels, lengths)):
        label = ManeuverLabel(int(c))
        s = np.arange(T) / T
        clean = cfg.signal * envelope(label, s)[:, None] * protos[c][None, :]
        latent = clean + _ar1(rng, T, cfg.dim, cfg.noise, cfg.ar_coef)
        frames = {"front": latent}
        for v in views[1:]:
            src = latent + (cfg.mirror_gain - 1.0) * clean if label == boosted[v] else latent
            frames[v] = src @ mirrors[v] + cfg.view_noise * cfg.noise * rng.standard_normal((T, cfg.dim))
        samples.append(Sample(f"s{i:0{width}d}", label, {v: f.astype(np.float32) for v, f in frames.items()}))

    ds = Dataset(samples, cfg.dim, views, cfg.fps)
    train, val, test = split_dataset(ds, cfg.split_ratios, seed)
    ds.splits = {"train": [s.id for s in train.samples], "val": [s.id for s in val.samples],
                 "test": [s.id for s in test.samples]}
    report = {
        "seed": seed,
        "config": cfg.to_dict(),
        "n_samples": cfg.n_samples,
        "class_counts": ds.class_counts(),
        "split_sizes": {k: len(v) for k, v in ds.splits.items()},
        "length_range": [int(lengths.min()), int(lengths.max())],
    }
    return ds, report


def centroid_probe(train: Dataset, test: Dataset, view: str = "front") -> float:
    """Nearest-centroid accuracy on mean-pooled frames; a quick learnability check."""
    def pooled(ds):
        return np.stack([s.views[view].astype(np.float64).mean(axis=0) for s in ds.samples])

    xtr, ytr = pooled(train), train.labels()
    centroids = np.stack([xtr[ytr == c].mean(axis=0) if np.any(ytr == c) else np.full(xtr.shape[1], np.inf)
                          for c in range(len(LABELS))])
    xte = pooled(test)
    d = ((xte[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    return float(np.mean(np.argmin(d, axis=1) == test.labels()))

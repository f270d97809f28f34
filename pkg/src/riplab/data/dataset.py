"""Samples, manifest-backed datasets, normalization, batching and splitting.

Manifest (``manifest.json``, UTF-8 JSON)::

    {
      "format": "riplab-manifest",
      "version": 1,
      "dim": 64,
      "fps": 2,
      "views": ["front", "left", "right"],
      "samples": [
        {"id": "s0000", "label": "RT", "T": 23,
         "views": {"front": "features/s0000_front.ripf", ...}},
        ...
      ]
    }

View paths are relative to the manifest's directory.  An optional
``splits.json`` next to it pins the train/val/test partition by id.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ripf
from .labels import LABELS, ManeuverLabel
from .ripf import DataError, ManifestError, UnknownLabelError

MANIFEST_FORMAT = "riplab-manifest"
MANIFEST_VERSION = 1
ALL_VIEWS = ("front", "left", "right")


@dataclass
class Sample:
    id: str
    label: ManeuverLabel
    views: dict[str, np.ndarray]

    @property
    def T(self) -> int:
        return next(iter(self.views.values())).shape[0]


@dataclass
class Dataset:
    samples: list[Sample]
    dim: int
    views: tuple[str, ...]
    fps: float = 2.0
    splits: dict[str, list[str]] | None = None
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.labels(), minlength=len(LABELS))
        return {name: int(c) for name, c in zip(LABELS, counts)}

    def subset(self, ids: Sequence[str]) -> "Dataset":
        by_id = {s.id: s for s in self.samples}
        return Dataset([by_id[i] for i in ids], self.dim, self.views, self.fps, None, self.root)

    def split(self, name: str) -> "Dataset":
        if not self.splits or name not in self.splits:
            raise DataError(f"dataset has no '{name}' split")
        return self.subset(self.splits[name])


def parse_label(text: str, sample_id: str = "") -> ManeuverLabel:
    try:
        return ManeuverLabel[text]
    except KeyError:
        raise UnknownLabelError(f"unknown label {text!r} for sample {sample_id!r}; expected one of {LABELS}") from None


def _manifest_path(path: str | Path) -> Path:
    path = Path(path)
    return path / "manifest.json" if path.is_dir() else path


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a dataset from a manifest file or its directory."""
    mpath = _manifest_path(path)
    if not mpath.exists():
        raise ManifestError(f"manifest not found: {mpath}")
    try:
        meta = json.loads(mpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestError(f"{mpath}: not valid UTF-8 JSON ({exc})") from None
    if meta.get("format") != MANIFEST_FORMAT or meta.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{mpath}: not a {MANIFEST_FORMAT} v{MANIFEST_VERSION} manifest")
    try:
        dim = int(meta["dim"])
        views = tuple(meta["views"])
        entries = meta["samples"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{mpath}: missing or malformed field {exc}") from None
    if not set(views) <= set(ALL_VIEWS) or "front" not in views:
        raise ManifestError(f"{mpath}: views {views} must include 'front' and be drawn from {ALL_VIEWS}")
    root = mpath.parent
    samples = []
    seen = set()
    for entry in entries:
        sid = str(entry.get("id", ""))
        if not sid or sid in seen:
            raise ManifestError(f"{mpath}: missing or duplicate sample id {sid!r}")
        seen.add(sid)
        label = parse_label(entry.get("label", ""), sid)
        T = entry.get("T")
        frames = {}
        for view in views:
            rel = entry.get("views", {}).get(view)
            if rel is None:
                raise ManifestError(f"sample {sid}: no file for view '{view}'")
            fpath = root / rel
            if not fpath.exists():
                raise ManifestError(f"sample {sid}: missing file {fpath}")
            frames[view] = ripf.read(fpath, expect_dim=dim, expect_T=T, name=f"sample {sid} view {view}")
        samples.append(Sample(sid, label, frames))
    ds = Dataset(samples, dim, views, float(meta.get("fps", 0.0)), None, root)
    spath = root / "splits.json"
    if spath.exists():
        splits = json.loads(spath.read_text(encoding="utf-8"))
        parts = {k: list(splits[k]) for k in ("train", "val", "test")}
        flat = [i for ids in parts.values() for i in ids]
        if sorted(flat) != sorted(seen):
            raise ManifestError(f"{spath}: splits do not partition the sample ids")
        ds.splits = parts
    return ds


def write_dataset(ds: Dataset, out_dir: str | Path, extra: dict | None = None) -> Path:
    """Write RIPF files, manifest and (if present) splits; returns the manifest path."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in ds.samples:
        rels = {}
        for view in ds.views:
            rel = f"features/{s.id}_{view}.ripf"
            ripf.write(out / rel, s.views[view])
            rels[view] = rel
        entries.append({"id": s.id, "label": s.label.name, "T": s.T, "views": rels})
    meta = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, "dim": ds.dim, "fps": ds.fps,
            "views": list(ds.views), "samples": entries}
    if extra:
        meta.update(extra)
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if ds.splits:
        (out / "splits.json").write_text(json.dumps(ds.splits, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


# -- normalization -------------------------------------------------------------


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, seq: np.ndarray) -> np.ndarray:
        return (np.asarray(seq, dtype=np.float64) - self.mean) / self.std


STD_FLOOR = 1e-8


def fit_zscore(train: Dataset | Sequence[np.ndarray], view: str = "front") -> NormStats:
    """Per-dimension mean/std pooled over every training frame of one view."""
    seqs = [s.views[view] for s in train.samples] if isinstance(train, Dataset) else list(train)
    if not seqs:
        raise DataError("cannot fit normalization on an empty training set")
    frames = np.concatenate([np.asarray(s, dtype=np.float64) for s in seqs], axis=0)
    return NormStats(frames.mean(axis=0), np.maximum(frames.std(axis=0), STD_FLOOR))


def apply_zscore(stats: NormStats, seq: np.ndarray) -> np.ndarray:
    return stats.apply(seq)


@dataclass
class Normalizer:
    """One :class:`NormStats` per view."""

    stats: dict[str, NormStats] = field(default_factory=dict)

    @classmethod
    def fit(cls, train: Dataset, views: Sequence[str]) -> "Normalizer":
        return cls({v: fit_zscore(train, v) for v in views})

    def transform(self, ds: Dataset) -> list[Sample]:
        return [Sample(s.id, s.label, {v: self.stats[v].apply(s.views[v]) for v in self.stats})
                for s in ds.samples]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for v, st in self.stats.items():
            out[f"norm.{v}.mean"] = st.mean
            out[f"norm.{v}.std"] = st.std
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "Normalizer":
        views = sorted({k.split(".")[1] for k in arrays if k.startswith("norm.")}, key=ALL_VIEWS.index)
        return cls({v: NormStats(arrays[f"norm.{v}.mean"], arrays[f"norm.{v}.std"]) for v in views})


# -- batching --------------------------------------------------------------------


def pad_batch(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad sequences at the tail to ``[B, Tmax, dim]``; also return true lengths."""
    if not seqs:
        raise ValueError("pad_batch needs at least one sequence")
    dims = {s.shape[1] for s in seqs}
    if len(dims) != 1:
        raise ValueError(f"pad_batch: mixed feature dims {sorted(dims)}")
    lengths = np.array([s.shape[0] for s in seqs], dtype=np.int64)
    out = np.zeros((len(seqs), int(lengths.max()), dims.pop()), dtype=np.result_type(*seqs))
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out, lengths


def unpad(batch: np.ndarray, lengths: np.ndarray) -> list[np.ndarray]:
    return [batch[i, :n] for i, n in enumerate(lengths)]


# -- splitting ----------------------------------------------------------------


def _largest_remainder(total: int, ratios: Sequence[float]) -> np.ndarray:
    quotas = total * np.asarray(ratios, dtype=np.float64)
    counts = np.floor(quotas).astype(np.int64)
    order = np.argsort(-(quotas - counts), kind="stable")
    for i in order[: total - counts.sum()]:
        counts[i] += 1
    return counts


def allocate_split_counts(class_sizes: Sequence[int], ratios: Sequence[float]) -> np.ndarray:
    """Per-class x per-split counts.

    Split totals follow largest-remainder rounding of the grand total, and
    each class is distributed proportionally, handing its leftover units to
    the splits with the largest fractional quotas that still have room.
    """
    sizes = np.asarray(class_sizes, dtype=np.int64)
    ratios = np.asarray(ratios, dtype=np.float64)
    targets = _largest_remainder(int(sizes.sum()), ratios)
    quotas = sizes[:, None] * ratios[None, :]
    counts = np.floor(quotas).astype(np.int64)
    frac = quotas - counts
    room = targets - counts.sum(axis=0)
    left = sizes - counts.sum(axis=1)
    cells = sorted(((-frac[c, j], c, j) for c in range(len(sizes)) for j in range(len(ratios))))
    for _, c, j in cells:
        if left[c] > 0 and room[j] > 0:
            counts[c, j] += 1
            left[c] -= 1
            room[j] -= 1
    for c in range(len(sizes)):
        while left[c] > 0:
            j = int(np.argmax(room))
            counts[c, j] += 1
            left[c] -= 1
            room[j] -= 1
    return counts


def split_dataset(ds: Dataset, ratios: Sequence[float] = (0.5, 0.2, 0.3), seed: int = 0,
                  stratified: bool = True) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint, exhaustive train/val/test partition, deterministic in ``seed``."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three nonnegative values summing to 1, got {tuple(ratios)}")
    rng = np.random.default_rng(seed)
    ids = sorted(s.id for s in ds.samples)
    label_of = {s.id: int(s.label) for s in ds.samples}
    groups = [[i for i in ids if label_of[i] == c] for c in range(len(LABELS))] if stratified else [ids]
    counts = allocate_split_counts([len(g) for g in groups], ratios)
    parts: list[list[str]] = [[], [], []]
    for group, row in zip(groups, counts):
        order = [group[k] for k in rng.permutation(len(group))]
        start = 0
        for j in range(3):
            parts[j].extend(order[start:start + row[j]])
            start += row[j]
    parts = [sorted(p) for p in parts]
    return ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])


def resolve_splits(ds: Dataset, seed: int, ratios: Sequence[float] = (0.5, 0.2, 0.3)) -> dict[str, Dataset]:
    """Use the dataset's pinned splits if it has them, else split with ``seed``."""
    if ds.splits:
        return {name: ds.split(name) for name in ("train", "val", "test")}
    train, val, test = split_dataset(ds, ratios, seed)
    return {"train": train, "val": val, "test": test}

"""Run configuration, model construction, and the train/eval workflows behind the CLI.

A run config is a JSON object::

    {
      "task": "single" | "multi",
      "method": "mamba2" | "svm" | "cnn_lstm" | "baseline",
      "dataset": "path/to/dataset",
      "out": "path/to/run",
      "seed": 0,
      "train": {...TrainConfig overrides...},
      "model": {...method hyperparameter overrides...}
    }

Only ``method`` and ``dataset`` are required.  The resolved config echoes
every value together with where it came from (``default`` or ``config``).
"""
from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .classical.pipeline import SvmClassifier
from .data.dataset import ALL_VIEWS, DataError, Dataset, Normalizer, load_dataset, resolve_splits
from .metrics import EvalReport, evaluate
from .models import BaselineRnnModel, CnnLstmModel, FrontalMambaModel, MultiViewEnsemble
from .models.base import Classifier
from .train import TrainConfig, fit, predict

log = logging.getLogger(__name__)

METHODS = ("mamba2", "svm", "cnn_lstm", "baseline")
TASKS = ("single", "multi")
TOP_KEYS = {"task", "method", "dataset", "out", "seed", "train", "model"}
FORMAT = "riplab-run"

TRAIN_DEFAULTS = {
    "mamba2": dict(optimizer="adamw", lr=1e-3, weight_decay=1e-5, batch_size=16, epochs=20,
                   scheduler="steplr", step_size=3, gamma=0.8, early_stop_patience=5),
    "cnn_lstm": dict(optimizer="adam", lr=1e-3, weight_decay=0.0, batch_size=16, epochs=400,
                     scheduler="none", early_stop_patience=5),
    "baseline": dict(optimizer="adam", lr=1e-3, weight_decay=0.0, batch_size=16, epochs=50,
                     scheduler="none", early_stop_patience=5),
}

MODEL_DEFAULTS = {
    "mamba2": dict(d_model=64, n_blocks=2, expand=8, n_heads=4, d_state=32, d_conv=4, chunk=64,
                   combine="logits"),
    "cnn_lstm": dict(conv_channels=64, kernel=3, hidden=128, layers=2, dropout=0.25, slope=0.01),
    "baseline": dict(hidden=128),
    "svm": dict(k_frames=16, C=1.0, gamma=None, k_neighbors=5, tol=1e-3, max_passes=1000),
}


class ConfigError(ValueError):
    """Invalid or unknown configuration (CLI exit code 2)."""


class CompatError(DataError):
    """Checkpoint and dataset disagree (CLI exit code 3)."""


def task_views(task: str) -> tuple[str, ...]:
    return ALL_VIEWS if task == "multi" else ("front",)


def resolve_config(raw: dict) -> tuple[dict, list[str]]:
    """Fill defaults and validate; returns ``(resolved, warnings)``."""
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    method = raw.get("method")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    task = raw.get("task", "single")
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; valid tasks: {', '.join(TASKS)}")
    if "dataset" not in raw:
        raise ConfigError("config needs a 'dataset' path")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    warnings = []
    provenance = {k: ("config" if k in raw else "default") for k in ("task", "seed", "out")}

    user_model = raw.get("model", {}) or {}
    bad = set(user_model) - set(MODEL_DEFAULTS[method])
    if bad:
        raise ConfigError(f"unknown model keys for {method}: {sorted(bad)}; "
                          f"valid: {sorted(MODEL_DEFAULTS[method])}")
    model = {**MODEL_DEFAULTS[method], **user_model}
    for k in model:
        provenance[f"model.{k}"] = "config" if k in user_model else "default"

    user_train = raw.get("train", {}) or {}
    if method == "svm":
        train = None
        if user_train:
            warnings.append(f"svm ignores train keys {sorted(user_train)}")
    else:
        try:
            cfg = TrainConfig.from_dict({**TRAIN_DEFAULTS[method], "seed": seed, **user_train})
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
        train = cfg.to_dict()
        for k in train:
            provenance[f"train.{k}"] = ("config" if k in user_train
                                        else "seed" if k == "seed" else "default")

    resolved = {
        "format": FORMAT,
        "method": method,
        "task": task,
        "dataset": str(raw["dataset"]),
        "out": str(raw.get("out", f"runs/{method}_{task}")),
        "seed": seed,
        "views": list(task_views(task)),
        "model": model,
        "train": train,
        "provenance": dict(sorted(provenance.items())),
    }
    return resolved, warnings


def build_model(method: str, task: str, dim: int, model_hp: dict, seed: int) -> Classifier:
    rng = np.random.default_rng([seed, 0])
    n_views = len(task_views(task))
    hp = dict(model_hp)
    if method == "mamba2":
        combine = hp.pop("combine")
        if task == "single":
            return FrontalMambaModel(dim, rng, **hp)
        return MultiViewEnsemble([FrontalMambaModel(dim, rng, view=v, **hp) for v in ALL_VIEWS], combine)
    if method == "cnn_lstm":
        return CnnLstmModel(dim, rng, n_views=n_views, **hp)
    if method == "baseline":
        return BaselineRnnModel(dim, rng, n_views=n_views, **hp)
    raise ConfigError(f"no neural model for method {method!r}")


def build_svm(task: str, model_hp: dict, seed: int) -> SvmClassifier:
    return SvmClassifier(views=task_views(task), seed=seed, **model_hp)


def _check_views(ds: Dataset, views) -> None:
    missing = [v for v in views if v not in ds.views]
    if missing:
        raise CompatError(f"dataset at {ds.root} lacks views {missing}")


# -- fitted run wrapper ------------------------------------------------------------


@dataclass
class FittedRun:
    meta: dict
    normalizer: Normalizer
    model: Classifier | SvmClassifier

    @property
    def views(self) -> tuple[str, ...]:
        return tuple(self.meta["views"])

    def predict(self, ds: Dataset) -> np.ndarray:
        samples = self.normalizer.transform(ds)
        if isinstance(self.model, SvmClassifier):
            return self.model.predict(samples)
        return predict(self.model, samples)

    def arrays(self) -> dict[str, np.ndarray]:
        arrays = dict(self.normalizer.arrays())
        if isinstance(self.model, SvmClassifier):
            arrays.update(self.model.arrays())
        else:
            arrays.update({f"model.{k}": v for k, v in self.model.state_dict().items()})
        return arrays

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, self.meta, self.arrays())


def load_run(path: str | Path) -> FittedRun:
    """Rebuild a fitted model from a run directory or a checkpoint file."""
    path = Path(path)
    if path.is_dir():
        path = path / "model.ripc"
    if not path.exists():
        raise CompatError(f"no checkpoint at {path}")
    meta, arrays = checkpoint.load(path)
    if meta.get("format") != FORMAT:
        raise CompatError(f"{path} is not a {FORMAT} checkpoint")
    norm = Normalizer.from_arrays({k: v for k, v in arrays.items() if k.startswith("norm.")})
    if meta["method"] == "svm":
        model = build_svm(meta["task"], meta["model"], meta["seed"])
        model.load_arrays(arrays, meta["svm_gamma"], meta["model"]["C"])
    else:
        model = build_model(meta["method"], meta["task"], meta["dim"], meta["model"], meta["seed"])
        model.load_state_dict({k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")})
        model.eval()
    return FittedRun(meta, norm, model)


# -- workflows -------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def train_run(resolved: dict, out: str | Path | None = None) -> tuple[FittedRun, dict | None]:
    """Train per a resolved config; write checkpoint, history and the config echo."""
    out = Path(out or resolved["out"])
    ds = load_dataset(resolved["dataset"])
    views = tuple(resolved["views"])
    _check_views(ds, views)
    splits = resolve_splits(ds, resolved["seed"])
    if len(splits["train"]) == 0:
        raise DataError("training split is empty")
    norm = Normalizer.fit(splits["train"], views)
    train = norm.transform(splits["train"])
    meta = copy.deepcopy({k: resolved[k] for k in ("format", "method", "task", "seed", "views", "model", "train")})
    meta["dim"] = ds.dim
    history = None

    if resolved["method"] == "svm":
        clf = build_svm(resolved["task"], resolved["model"], resolved["seed"]).fit(train)
        meta["svm_gamma"] = clf.model.gamma
        meta["resample"] = {"counts_before": clf.resample_report.counts_before,
                            "n_synthetic": clf.resample_report.n_synthetic}
        model = clf
    else:
        model = build_model(resolved["method"], resolved["task"], ds.dim, resolved["model"], resolved["seed"])
        cfg = TrainConfig.from_dict({**resolved["train"], "betas": tuple(resolved["train"]["betas"])})
        model, hist = fit(model, train, norm.transform(splits["val"]), cfg)
        history = hist.to_dict()
        meta["best_epoch"] = hist.best_epoch

    run = FittedRun(meta, norm, model)
    out.mkdir(parents=True, exist_ok=True)
    run.save(out / "model.ripc")
    _write_json(out / "resolved_config.json", resolved)
    if history is not None:
        _write_json(out / "history.json", history)
    return run, history


def eval_run(model_path: str | Path, dataset: str | Path, split: str = "test",
             out: str | Path | None = None) -> EvalReport:
    """Evaluate a checkpoint on one split; writes ``report.json`` and a leaderboard row."""
    run = load_run(model_path)
    ds = load_dataset(dataset)
    if ds.dim != run.meta["dim"]:
        raise CompatError(f"checkpoint expects dim {run.meta['dim']}, dataset has {ds.dim}")
    _check_views(ds, run.views)
    if split not in ("train", "val", "test"):
        raise DataError(f"unknown split {split!r}")
    part = resolve_splits(ds, run.meta["seed"])[split]
    if len(part) == 0:
        raise DataError(f"split {split!r} is empty")
    report = evaluate(run.predict(part), part.labels())
    out = Path(out) if out is not None else (Path(model_path) if Path(model_path).is_dir() else Path(model_path).parent)
    out.mkdir(parents=True, exist_ok=True)
    body = {"method": run.meta["method"], "task": run.meta["task"], "split": split, **report.to_dict()}
    _write_json(out / f"report_{split}.json", body)
    append_leaderboard(out / "leaderboard.csv", run.meta["method"], run.meta["task"], report)
    return report


LEADERBOARD_FIELDS = ("method", "task", "acc", "f1")


def append_leaderboard(path: Path, method: str, task: str, report: EvalReport) -> None:
    d = report.to_dict()
    new = not path.exists()
    with path.open("a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(LEADERBOARD_FIELDS)
        w.writerow([method, task, f"{d['accuracy']:.2f}", f"{d['f1']:.2f}"])

"""Optimizers, learning-rate schedule and the early-stopping training loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import functional as F
from .data.dataset import Dataset, Sample, pad_batch
from .models.base import Classifier
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    optimizer: str = "adamw"
    lr: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 16
    epochs: int = 20
    scheduler: str = "none"
    step_size: int = 3
    gamma: float = 0.8
    early_stop_patience: int = 5
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("adamw", "adam"):
            raise ValueError(f"optimizer must be 'adamw' or 'adam', got {self.optimizer!r}")
        if self.scheduler not in ("steplr", "none"):
            raise ValueError(f"scheduler must be 'steplr' or 'none', got {self.scheduler!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.step_size < 1:
            raise ValueError("batch_size, epochs and step_size must be >= 1")
        if self.weight_decay < 0 or self.early_stop_patience < 0:
            raise ValueError("weight_decay and early_stop_patience must be nonnegative")
        self.betas = tuple(float(b) for b in self.betas)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


# -- optimizers ------------------------------------------------------------------


def init_adam_state(params: Sequence[np.ndarray]) -> dict:
    return {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None], state: dict, lr: float,
               betas=(0.9, 0.999), eps: float = 1e-8, wd: float = 0.0) -> None:
    """In-place Adam update with bias correction and decoupled weight decay.

    A ``None`` gradient leaves that parameter (and its moments) untouched.
    """
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        if wd:
            p *= 1.0 - lr * wd
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, wd=0.0) -> None:
    """Adam with classic L2 regularisation (``wd * p`` folded into the gradient)."""
    if wd:
        grads = [None if g is None else g + wd * p for p, g in zip(params, grads)]
    adamw_step(params, grads, state, lr, betas, eps, 0.0)


def step_lr(base_lr: float, epoch: int, step: int = 3, gamma: float = 0.8) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base_lr * gamma ** (epoch // step)


class Optimizer:
    def __init__(self, params: Sequence[Tensor], cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.state = init_adam_state([p.data for p in self.params])
        self._step = adamw_step if cfg.optimizer == "adamw" else adam_step

    def step(self, lr: float) -> None:
        self._step([p.data for p in self.params], [p.grad for p in self.params], self.state, lr,
                   self.cfg.betas, self.cfg.eps, self.cfg.weight_decay)


# -- batching and evaluation -----------------------------------------------------


def _samples(ds: Dataset | Sequence[Sample]) -> list[Sample]:
    return list(ds.samples) if isinstance(ds, Dataset) else list(ds)


def make_batch(samples: Sequence[Sample], views: Sequence[str]) -> tuple[list[Tensor], np.ndarray, np.ndarray]:
    inputs, lengths = [], None
    for v in views:
        x, lengths = pad_batch([np.asarray(s.views[v], dtype=np.float64) for s in samples])
        inputs.append(Tensor(x))
    return inputs, lengths, np.array([int(s.label) for s in samples], dtype=np.int64)


def predict_proba(model: Classifier, samples, batch_size: int = 64) -> np.ndarray:
    """Class probabilities in eval mode, batches taken in the given order."""
    samples = _samples(samples)
    was_training = model.training
    model.eval()
    out = []
    try:
        with no_grad():
            for i in range(0, len(samples), batch_size):
                inputs, lengths, _ = make_batch(samples[i:i + batch_size], model.views)
                out.append(model.forward(inputs, lengths).data)
    finally:
        model.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, 6))


def predict(model: Classifier, samples, batch_size: int = 64) -> np.ndarray:
    return np.argmax(predict_proba(model, samples, batch_size), axis=1)


def accuracy_on(model: Classifier, samples, batch_size: int = 64) -> float:
    samples = _samples(samples)
    labels = np.array([int(s.label) for s in samples])
    return float(np.mean(predict(model, samples, batch_size) == labels))


# -- training loop ---------------------------------------------------------------


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    @property
    def best_val_acc(self) -> float:
        return self.epochs[self.best_epoch]["val_acc"]

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch, "stopped_early": self.stopped_early}


def train_step(model: Classifier, opt: Optimizer, batch: Sequence[Sample], lr: float) -> float:
    inputs, lengths, targets = make_batch(batch, model.views)
    model.zero_grad()
    loss = F.cross_entropy(model.logits(inputs, lengths), targets)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"non-finite training loss {value}")
    loss.backward()
    opt.step(lr)
    return value


def fit(model: Classifier, train, val, cfg: TrainConfig) -> tuple[Classifier, History]:
    """Mini-batch training with best-epoch checkpointing on validation accuracy.

    Shuffling and dropout draw from their own seeded streams, so changing
    either leaves weight initialization alone.  ``early_stop_patience = 0``
    disables early stopping.  Train accuracy is measured in eval mode after
    each epoch, the same way validation accuracy is.
    """
    train, val = _samples(train), _samples(val)
    if not train:
        raise ValueError("empty training set")
    if not val:
        raise ValueError("empty validation set")
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    if hasattr(model, "reseed_dropout"):
        model.reseed_dropout(np.random.SeedSequence([cfg.seed, 2]).generate_state(1)[0])
    opt = Optimizer(model.parameters(), cfg)
    hist = History()
    best_state, best_acc, since_best = None, -1.0, 0

    for epoch in range(cfg.epochs):
        lr = step_lr(cfg.lr, epoch, cfg.step_size, cfg.gamma) if cfg.scheduler == "steplr" else cfg.lr
        model.train()
        order = shuffle_rng.permutation(len(train))
        losses, sizes = [], []
        for i in range(0, len(order), cfg.batch_size):
            batch = [train[j] for j in order[i:i + cfg.batch_size]]
            losses.append(train_step(model, opt, batch, lr))
            sizes.append(len(batch))
        row = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": float(np.average(losses, weights=sizes)),
            "train_acc": accuracy_on(model, train),
            "val_acc": accuracy_on(model, val),
        }
        hist.epochs.append(row)
        log.info("epoch %d lr %.3g loss %.4f train %.3f val %.3f", epoch, lr, row["train_loss"],
                 row["train_acc"], row["val_acc"])
        if row["val_acc"] > best_acc:
            best_acc, best_state, since_best = row["val_acc"], model.state_dict(), 0
            hist.best_epoch = epoch
        else:
            since_best += 1
            if cfg.early_stop_patience and since_best >= cfg.early_stop_patience:
                hist.stopped_early = True
                break

    model.load_state_dict(best_state)
    model.eval()
    return model, hist

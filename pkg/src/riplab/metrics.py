"""Competition metrics: accuracy, maneuver precision/recall/F1, per-class tables.

Maneuver counts classify each (prediction, target) pair:

* ``tp``  target is a maneuver and the prediction matches it
* ``fp``  target is a maneuver, prediction is a different maneuver
* ``fpp`` target is straight, a maneuver is predicted
* ``mp``  target is a maneuver, straight is predicted

Straight/straight pairs land in none of the four.  Then
``P = tp / (tp + fp + fpp)``, ``R = tp / (tp + fp + mp)`` and ``F1`` is their
harmonic mean, with any 0/0 taken as 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data.labels import LABELS, STRAIGHT

N = len(LABELS)


def _as_labels(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64).reshape(-1)
    if np.any(arr < 0) or np.any(arr >= N):
        raise ValueError(f"label codes must lie in [0, {N})")
    return arr


def _pair(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p, t = _as_labels(preds), _as_labels(targets)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions for {t.size} targets")
    return p, t


def accuracy(preds, targets) -> float:
    p, t = _pair(preds, targets)
    if p.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.count_nonzero(p == t)) / p.size


@dataclass(frozen=True)
class MetricCounts:
    tp: int = 0
    fp: int = 0
    fpp: int = 0
    mp: int = 0


def maneuver_counts(preds, targets) -> MetricCounts:
    p, t = _pair(preds, targets)
    t_man = t != STRAIGHT
    p_man = p != STRAIGHT
    return MetricCounts(
        tp=int(np.count_nonzero(t_man & (p == t))),
        fp=int(np.count_nonzero(t_man & p_man & (p != t))),
        fpp=int(np.count_nonzero(~t_man & p_man)),
        mp=int(np.count_nonzero(t_man & ~p_man)),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def maneuver_prf(c: MetricCounts) -> tuple[float, float, float]:
    p_den = c.tp + c.fp + c.fpp
    r_den = c.tp + c.fp + c.mp
    # harmonic mean of tp/p_den and tp/r_den, kept in counts to avoid rounding
    return _ratio(c.tp, p_den), _ratio(c.tp, r_den), _ratio(2.0 * c.tp, p_den + r_den)


def confusion_matrix(preds, targets) -> np.ndarray:
    """Counts with rows = target class, columns = predicted class."""
    p, t = _pair(preds, targets)
    cm = np.zeros((N, N), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def per_class_report(preds, targets) -> tuple[dict[str, dict[str, float | None]], np.ndarray]:
    """Per-class accuracy (row-normalized diagonal, i.e. recall) and one-vs-rest F1.

    A class absent from the targets gets ``acc=None``.
    """
    p, t = _pair(preds, targets)
    if p.size == 0:
        raise ValueError("per-class report of an empty set is undefined")
    cm = confusion_matrix(p, t)
    out = {}
    for c, name in enumerate(LABELS):
        tp = cm[c, c]
        row, col = cm[c].sum(), cm[:, c].sum()
        out[name] = {
            "acc": float(tp) / row if row else None,
            "f1": _ratio(2.0 * tp, row + col),
        }
    return out, cm


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    macro_f1: float
    counts: MetricCounts
    per_class: dict = field(default_factory=dict)
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((N, N), dtype=np.int64))
    n: int = 0

    def to_dict(self) -> dict:
        """Serialized form; scores are percentages with two decimals."""
        def pct(x):
            return None if x is None else round(100.0 * x, 2)

        return {
            "n": self.n,
            "accuracy": pct(self.accuracy),
            "precision": pct(self.precision),
            "recall": pct(self.recall),
            "f1": pct(self.f1),
            "macro_f1": pct(self.macro_f1),
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp, "fpp": self.counts.fpp, "mp": self.counts.mp},
            "per_class": {k: {"acc": pct(v["acc"]), "f1": pct(v["f1"])} for k, v in self.per_class.items()},
            "confusion": self.confusion.tolist(),
        }


def evaluate(preds, targets) -> EvalReport:
    p, t = _pair(preds, targets)
    counts = maneuver_counts(p, t)
    prec, rec, f1 = maneuver_prf(counts)
    per_class, cm = per_class_report(p, t)
    return EvalReport(
        accuracy=accuracy(p, t), precision=prec, recall=rec, f1=f1,
        macro_f1=float(np.mean([v["f1"] for v in per_class.values()])),
        counts=counts, per_class=per_class, confusion=cm, n=int(p.size),
    )


def format_confusion(cm: np.ndarray) -> str:
    width = max(5, len(str(int(cm.max()))) + 1)
    head = "target\\pred".ljust(12) + "".join(name.rjust(width) for name in LABELS)
    rows = [name.ljust(12) + "".join(str(int(v)).rjust(width) for v in cm[i]) for i, name in enumerate(LABELS)]
    return "\n".join([head] + rows)

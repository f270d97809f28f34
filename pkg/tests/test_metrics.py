import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riplab.data.labels import ManeuverLabel as L
from riplab.metrics import (
    MetricCounts, accuracy, confusion_matrix, evaluate, format_confusion, maneuver_counts, maneuver_prf,
    per_class_report,
)

labels = st.lists(st.integers(0, 5), min_size=1, max_size=60)
pairs = labels.flatmap(lambda t: st.tuples(st.lists(st.integers(0, 5), min_size=len(t), max_size=len(t)),
                                           st.just(t)))


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([0, 1, 2, 3], [0, 1, 3, 2]) == 0.5


def test_accuracy_errors():
    with pytest.raises(ValueError):
        accuracy([1, 2], [1])
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([6], [0])


def test_counts_all_correct_maneuvers():
    assert maneuver_counts([1, 2, 5], [1, 2, 5]) == MetricCounts(tp=3)


def test_counts_one_of_each():
    preds = [L.RT, L.LT, L.RT, L.ST]
    targets = [L.RT, L.RT, L.ST, L.RT]
    assert maneuver_counts(preds, targets) == MetricCounts(1, 1, 1, 1)


def test_straight_pairs_excluded():
    assert maneuver_counts([0] * 5, [0] * 5) == MetricCounts()


def test_prf_examples():
    p, r, f = maneuver_prf(MetricCounts(1, 1, 1, 1))
    assert p == r == f == pytest.approx(1 / 3, abs=0)
    assert maneuver_prf(MetricCounts(tp=7)) == (1.0, 1.0, 1.0)
    assert maneuver_prf(MetricCounts(fp=2, fpp=1, mp=3))[2] == 0.0
    assert maneuver_prf(MetricCounts()) == (0.0, 0.0, 0.0)


def test_per_class_examples():
    pc, cm = per_class_report([L.RT, L.LT, L.LT], [L.RT, L.RT, L.LT])
    assert pc["RT"]["acc"] == 0.5 and pc["LT"]["acc"] == 1.0
    assert pc["LT"]["f1"] == pytest.approx(2 / 3)
    assert pc["ST"]["acc"] is None
    assert cm.sum() == 3


def test_perfect_predictions_identity_confusion():
    y = [0, 1, 2, 3, 4, 5, 5, 0]
    pc, cm = per_class_report(y, y)
    assert np.array_equal(cm, np.diag(np.bincount(y, minlength=6)))
    assert all(v["acc"] == 1.0 for v in pc.values())


@settings(max_examples=100, deadline=None)
@given(pairs)
def test_confusion_invariants(pt):
    p, t = pt
    cm = confusion_matrix(p, t)
    assert np.trace(cm) / len(t) == accuracy(p, t)
    assert cm.sum(axis=1).tolist() == np.bincount(t, minlength=6).tolist()
    c = maneuver_counts(p, t)
    assert c.tp + c.fp + c.fpp + c.mp <= len(t)


@settings(max_examples=100, deadline=None)
@given(pairs)
def test_prf_bounds(pt):
    prec, rec, f1 = maneuver_prf(maneuver_counts(*pt))
    assert 0 <= prec <= 1 and 0 <= rec <= 1 and 0 <= f1 <= max(prec, rec)


@settings(max_examples=60, deadline=None)
@given(pairs, st.randoms(use_true_random=False))
def test_counts_permutation_invariant(pt, rnd):
    p, t = pt
    order = list(range(len(t)))
    rnd.shuffle(order)
    assert maneuver_counts(p, t) == maneuver_counts([p[i] for i in order], [t[i] for i in order])


@settings(max_examples=60, deadline=None)
@given(pairs, st.sampled_from([(1, 2), (3, 4), (2, 5), (1, 4)]))
def test_swapping_maneuver_classes_keeps_prf(pt, swap):
    a, b = swap
    remap = {a: b, b: a}
    p, t = pt
    p2 = [remap.get(x, x) for x in p]
    t2 = [remap.get(x, x) for x in t]
    assert maneuver_prf(maneuver_counts(p, t)) == maneuver_prf(maneuver_counts(p2, t2))


def test_evaluate_report_serialization():
    rep = evaluate([0, 1, 1, 2, 0, 3], [0, 1, 2, 2, 1, 3]).to_dict()
    assert set(rep) == {"n", "accuracy", "precision", "recall", "f1", "macro_f1", "counts", "per_class", "confusion"}
    assert rep["accuracy"] == 66.67
    assert rep["per_class"]["LLC"]["acc"] is None
    assert len(rep["confusion"]) == 6 and all(len(r) == 6 for r in rep["confusion"])
    assert rep["counts"] == {"tp": 3, "fp": 1, "fpp": 0, "mp": 1}


def test_accuracy_trace_on_1000_random_pairs():
    r = np.random.default_rng(0)
    p, t = r.integers(0, 6, 1000), r.integers(0, 6, 1000)
    assert accuracy(p, t) == np.trace(confusion_matrix(p, t)) / 1000


def test_format_confusion_has_all_labels():
    text = format_confusion(np.eye(6, dtype=int))
    for name in ("ST", "RT", "LT", "RLC", "LLC", "SS"):
        assert name in text

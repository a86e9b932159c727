from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import eer_enumeration
from qkswap.errors import DataError
from qkswap.metrics import confusion, confusion_metrics, eer, roc_and_eer, roc_curve


def test_all_correct():
    m = confusion_metrics([2.0, 1.0, -1.0, -3.0], [1, 1, 0, 0])
    assert m == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0, "fpr": 0.0}


def test_all_predicted_spoof():
    labels = [1] * 3 + [0] * 7
    m = confusion_metrics(np.ones(10), labels)
    assert m["recall"] == 1.0 and m["fpr"] == 1.0 and m["precision"] == pytest.approx(0.3)


def test_two_false_positives_out_of_twenty():
    scores = np.r_[np.ones(2), -np.ones(18), np.ones(20)]
    labels = [0] * 20 + [1] * 20
    assert confusion_metrics(scores, labels)["fpr"] == pytest.approx(0.10)


def test_threshold_is_strict():
    c = confusion([0.0, 0.0], [1, 0])
    assert (c.tp, c.fp, c.tn, c.fn) == (0, 0, 1, 1)
    assert c.precision == 0.0 and c.f1 == 0.0


def test_single_class_rejected():
    with pytest.raises(DataError):
        confusion_metrics([1.0, 2.0], [1, 1])
    with pytest.raises(DataError):
        eer([1.0, 2.0], [0, 0])
    with pytest.raises(DataError):
        eer([1.0, 2.0], [0, 2])


def test_eer_examples():
    assert eer([0.9, 0.1], [1, 0]) == 0.0
    assert eer(np.r_[np.arange(10.0), np.arange(10.0) + 20], [0] * 10 + [1] * 10) == 0.0
    assert eer([0.1, 0.9], [1, 0]) == 1.0
    # constant scores: a single interior crossing at 0.5
    assert eer(np.zeros(6), [0, 1, 0, 1, 0, 1]) == pytest.approx(0.5)


def test_roc_staircase_shape():
    curve = roc_curve([0.3, 0.1, 0.3, 0.9], [1, 0, 0, 1])
    assert np.isneginf(curve.thresholds[0]) and np.isposinf(curve.thresholds[-1])
    assert np.allclose(curve.thresholds[1:-1], [0.2, 0.6])
    assert np.all(np.diff(curve.fpr) <= 0) and np.all(np.diff(curve.tpr) <= 0)
    assert (curve.fpr[0], curve.tpr[0], curve.fpr[-1], curve.tpr[-1]) == (1, 1, 0, 0)
    fpr, fnr = curve.det
    assert np.allclose(fnr, 1 - curve.tpr)


def test_matches_exhaustive_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 200))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = np.round(rng.normal(labels * rng.uniform(0, 2), 1.0, n), int(rng.integers(1, 4)))
        assert abs(eer(scores, labels) - eer_enumeration(scores, labels)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5, allow_nan=False), st.integers(0, 1)),
                min_size=2, max_size=40).filter(lambda v: len({lab for _, lab in v}) == 2))
def test_eer_properties(pairs):
    scores = np.array([s for s, _ in pairs])
    labels = np.array([lab for _, lab in pairs])
    curve, e = roc_and_eer(scores, labels)
    assert 0.0 <= e <= 1.0
    assert abs(eer(-scores, 1 - labels) - e) <= 1e-9
    assert abs(e - eer_enumeration(scores, labels)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_negated_scores_give_complementary_eer(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 60))
    labels = rng.integers(0, 2, n)
    labels[:2] = (0, 1)
    scores = np.round(rng.normal(size=n), 1)
    e, flipped = eer(scores, labels), eer(-scores, labels)
    assert abs(e + flipped - 1.0) <= 1e-9
    assert min(e, flipped) <= 0.5 + 1e-9


def test_auc_above_half_does_not_bound_eer():
    # AUC > 0.5 yet the ROC crosses the anti-diagonal above 0.5
    rng = np.random.default_rng(127)
    n = int(rng.integers(4, 60))
    labels = rng.integers(0, 2, n)
    labels[:2] = (0, 1)
    scores = -rng.normal(size=n)
    pos, neg = scores[labels == 1], scores[labels == 0]
    auc = np.mean(pos[:, None] > neg[None, :])
    e = eer(scores, labels)
    assert auc > 0.5 and e > 0.5
    assert e == pytest.approx(eer_enumeration(scores, labels), abs=1e-9)

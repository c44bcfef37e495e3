"""Confusion counts, OA/AA/per-class, kappa."""

import itertools

import numpy as np
import pytest

from congcn import metrics
from congcn.errors import ContractError


def test_confusion_exact_prediction_diagonal():
    truth = np.array([[1, 2], [2, 1]])
    m = metrics.confusion(truth, truth, np.arange(4), 2)
    assert np.array_equal(m, [[2, 0], [0, 2]])


def test_confusion_single_miss():
    truth = np.array([[1]])
    pred = np.array([[2]])
    m = metrics.confusion(pred, truth, np.array([0]), 2)
    assert m[0, 1] == 1 and m.sum() == 1


def test_confusion_counts_only_test_pixels():
    truth = np.array([[1, 1, 2, 2]])
    pred = np.array([[1, 2, 2, 2]])
    m = metrics.confusion(pred, truth, np.array([0, 2]), 2)
    assert m.sum() == 2
    assert np.array_equal(m, [[1, 0], [0, 1]])


def test_confusion_rejects_unannotated_test_pixel():
    truth = np.array([[0, 1]])
    pred = np.array([[1, 1]])
    with pytest.raises(ContractError):
        metrics.confusion(pred, truth, np.array([0]), 1)


def test_oa_aa_hand_case():
    m = np.array([[1, 1], [0, 2]])
    assert metrics.overall_accuracy(m) == pytest.approx(0.75)
    assert metrics.per_class_accuracy(m) == pytest.approx([0.5, 1.0])
    assert metrics.average_accuracy(m) == pytest.approx(0.75)


def test_aa_skips_empty_classes():
    m = np.array([[3, 0, 0], [0, 0, 0], [1, 0, 1]])
    per = metrics.per_class_accuracy(m)
    assert np.isnan(per[1])
    assert metrics.average_accuracy(m) == pytest.approx((1.0 + 0.5) / 2)


def test_kappa_perfect_and_independent():
    assert metrics.kappa(np.diag([4, 7])) == 1.0
    assert metrics.kappa(np.array([[1, 1], [1, 1]])) == pytest.approx(0.0)


def test_kappa_hand_case():
    m = np.array([[20, 5], [10, 15]])
    total = 50
    p_o = 35 / total
    p_e = (25 * 30 + 25 * 20) / total ** 2
    assert metrics.kappa(m) == pytest.approx((p_o - p_e) / (1 - p_e), abs=1e-15)


def test_kappa_degenerate_single_class():
    assert metrics.kappa(np.array([[5, 0], [0, 0]])) == 1.0
    assert metrics.kappa(np.array([[0, 5], [0, 0]])) == 0.0


def test_metrics_exhaustive_2x2_against_direct_formulas():
    """Every 2x2 confusion matrix with entries 0..5 (1296 cases)."""
    checked = 0
    for a, b, c, d in itertools.product(range(6), repeat=4):
        m = np.array([[a, b], [c, d]], dtype=np.int64)
        total = m.sum()
        if total == 0:
            continue
        oa = metrics.overall_accuracy(m)
        assert oa == (a + d) / total
        per = metrics.per_class_accuracy(m)
        if a + b > 0:
            assert per[0] == a / (a + b)
        else:
            assert np.isnan(per[0])
        if c + d > 0:
            assert per[1] == d / (c + d)
        vals = [v for v in per if not np.isnan(v)]
        assert metrics.average_accuracy(m) == sum(vals) / len(vals)
        p_e = ((a + b) * (a + c) + (c + d) * (b + d)) / total ** 2
        if p_e >= 1.0:
            expect = 1.0 if oa == 1.0 else 0.0
        else:
            expect = (oa - p_e) / (1 - p_e)
        assert metrics.kappa(m) == expect
        checked += 1
    assert checked == 6 ** 4 - 1


def test_metrics_invariant_under_class_permutation():
    rng = np.random.default_rng(0)
    truth = rng.integers(1, 5, size=(10, 10))
    pred = rng.integers(1, 5, size=(10, 10))
    test_px = np.arange(100)
    m = metrics.confusion(pred, truth, test_px, 4)
    perm = np.array([0, 3, 1, 4, 2])  # class k -> perm[k]
    m2 = metrics.confusion(perm[pred], perm[truth], test_px, 4)
    assert metrics.overall_accuracy(m) == metrics.overall_accuracy(m2)
    assert metrics.average_accuracy(m) == pytest.approx(metrics.average_accuracy(m2))
    assert metrics.kappa(m) == pytest.approx(metrics.kappa(m2))


def test_report_fields():
    m = np.array([[3, 1], [0, 4]])
    rep = metrics.report(m)
    assert rep.n_test == 8
    assert 0.0 <= rep.oa <= 1.0
    assert "kappa" in rep.to_json()

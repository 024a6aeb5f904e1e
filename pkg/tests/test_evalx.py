import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgroute.errors import ValidationError
from ecgroute.evalx import (
    StressOutcome,
    compute_metrics,
    confidence_profile,
    confusion_csv,
    confusion_matrix,
    confusion_rows,
    default_bin_edges,
    metrics_csv,
    stress_mask,
    stress_mislocalize,
    stress_report,
    stress_table_csv,
)
from ecgroute.features import rr_quadruple
from ecgroute.ingest import CLASSES

from conftest import random_labels


def test_toy_example():
    m = compute_metrics(["N", "V", "V", "V"], ["N", "N", "V", "V"])
    assert m.micro_f1 == 0.75
    assert m.f1["N"] == pytest.approx(2 / 3) and m.f1["V"] == pytest.approx(0.8)
    assert m.present == ("N", "V")
    assert m.macro_f1 == pytest.approx(11 / 15)
    rows, empty = confusion_rows(m)
    assert rows[0].tolist() == [0.5, 0.0, 0.5, 0.0]
    assert empty.tolist() == [False, True, False, True]
    assert m.f1["S"] == 0.0 and m.support["S"] == 0


def _brute(pred, true):
    out = {}
    for c in CLASSES:
        tp = sum(p == c and t == c for p, t in zip(pred, true))
        fp = sum(p == c and t != c for p, t in zip(pred, true))
        fn = sum(p != c and t == c for p, t in zip(pred, true))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        out[c] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return out


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200))
def test_metrics_agree_with_recount(seed, n):
    rng = np.random.default_rng(seed)
    true = random_labels(rng, n)
    pred = random_labels(rng, n)
    m = compute_metrics(pred, true)
    ref = _brute(pred, true)
    for c in CLASSES:
        assert abs(m.f1[c] - ref[c]) <= 1e-12
    present = [c for c in CLASSES if c in true]
    assert abs(m.macro_f1 - np.mean([ref[c] for c in present])) <= 1e-12
    acc = np.mean([p == t for p, t in zip(pred, true)])
    assert abs(m.micro_f1 - acc) <= 1e-12
    assert m.confusion.sum() == n


def test_absent_class_leaves_macro_over_three():
    true = ["N", "S", "V", "N"]
    pred = ["N", "S", "N", "F"]
    m = compute_metrics(pred, true)
    assert m.present == ("N", "S", "V")
    assert m.macro_f1 == pytest.approx((m.f1["N"] + m.f1["S"] + m.f1["V"]) / 3)


def test_weighted_f1():
    true = ["N", "N", "N", "V"]
    m = compute_metrics(["N", "N", "V", "V"], true)
    assert m.weighted_f1 == pytest.approx(0.75 * m.f1["N"] + 0.25 * m.f1["V"])


def test_confusion_errors():
    with pytest.raises(ValidationError):
        confusion_matrix(["N"], ["N", "V"])
    with pytest.raises(ValidationError):
        confusion_matrix(["Q"], ["N"])


def test_csv_layouts():
    m = compute_metrics(["N", "V", "V", "V"], ["N", "N", "V", "V"])
    rows = list(csv.reader(io.StringIO(confusion_csv(m))))
    assert rows[0][1:] == list(CLASSES) and rows[1][1:] == ["1", "0", "1", "0"]
    norm = list(csv.reader(io.StringIO(confusion_csv(m, normalized=True))))
    assert [float(v) for v in norm[1][1:]] == [0.5, 0.0, 0.5, 0.0]
    mrows = list(csv.reader(io.StringIO(metrics_csv(m))))
    assert mrows[0] == ["class", "precision", "recall", "f1", "support"]
    assert [r[0] for r in mrows[1:5]] == list(CLASSES)


def test_default_bins():
    e = default_bin_edges()
    assert len(e) == 21
    assert e[0] == 0.0 and e[-1] == 1.0
    assert np.isclose(e[9], 0.9) and np.isclose(e[10], 0.98)
    assert np.allclose(np.diff(e[10:]), 0.002)


def test_confidence_profile_pooling():
    prof = confidence_profile([0.05, 0.06, 0.999, 1.0], [1, 2, 3, 4], [2, 2, 3, 2], [2, 3, 3, 4])
    assert prof[0].count == 2 and prof[0].minimal_f1 == pytest.approx(3 / 5) and prof[0].rich_f1 == pytest.approx(4 / 5)
    assert prof[-1].count == 2  # the last bin is closed at 1.0
    assert prof[-1].minimal_f1 == 1.0
    assert prof[5].count == 0 and prof[5].minimal_f1 is None
    with pytest.raises(ValidationError):
        confidence_profile([], [], [], [])


ANCHORS = (100, 400, 700, 1000)
LABELS = ("N", "V", "N", "S")


def test_mask_removes_target():
    p = stress_mask(ANCHORS, LABELS, 1)
    assert p.anchors == (100, 700, 1000) and p.labels == ("N", "N", "S")
    assert p.kept == (0, 2, 3) and p.interfered is None
    with pytest.raises(ValidationError):
        stress_mask(ANCHORS, LABELS, 4)


def test_mislocalize_changes_neighbour_rr():
    p = stress_mislocalize(ANCHORS, LABELS, 1, 6, 3600)
    assert p.anchors == (100, 406, 700, 1000) and p.interfered == 1
    # the next beat's pre-RR shrinks by exactly the offset
    assert rr_quadruple(p.anchors, 2)[0] == rr_quadruple(ANCHORS, 2)[0] - 6
    assert stress_mislocalize(ANCHORS, LABELS, 1, -30, 3600).anchors[1] == 370


def test_mislocalize_rejections():
    with pytest.raises(ValidationError):
        stress_mislocalize(ANCHORS, LABELS, 1, 0, 3600)
    with pytest.raises(ValidationError):
        stress_mislocalize(ANCHORS, LABELS, 1, 31, 3600)
    assert stress_mislocalize((5, 400), ("N", "N"), 0, -6, 3600) is None
    assert stress_mislocalize((3590,), ("N",), 0, 10, 3600) is None
    assert stress_mislocalize((100, 110), ("N", "N"), 0, 10, 3600) is None


def test_stress_report_signs():
    clean = compute_metrics(["N", "V", "N"], ["N", "V", "N"])
    stressed = compute_metrics(["N", "N", "N"], ["N", "V", "N"])
    d = stress_report(clean, stressed)
    assert d["V"] == 1.0 and d["N"] == pytest.approx(1 - 0.8)
    assert d["S"] is None and d["F"] is None


def test_stress_table():
    none = {c: None for c in CLASSES}
    mask = StressOutcome("mask", none, {"N": 0.01, "S": None, "V": -0.002, "F": None}, 5, 0, [])
    mis = StressOutcome("mislocalize", {"N": 0.5, "S": None, "V": 0.25, "F": None}, none, 5, 1, [6])
    rows = list(csv.reader(io.StringIO(stress_table_csv([mask, mis]))))
    assert rows[0] == ["label", "mask_interfered", "mask_non_interfered", "mislocalize_interfered", "mislocalize_non_interfered"]
    assert rows[1] == ["N", "--", "0.010000", "0.500000", "--"]
    assert rows[3] == ["V", "--", "-0.002000", "0.250000", "--"]

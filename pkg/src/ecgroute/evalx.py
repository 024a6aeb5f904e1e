"""Beat-level metrics, confidence profiles and the peak-perturbation stress protocol."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ingest import CLASS_INDEX, CLASSES

STRESS_OFFSETS = tuple(range(6, 31))


@dataclass
class ClassMetrics:
    confusion: np.ndarray  # rows = truth, columns = prediction, order CLASSES
    precision: dict
    recall: dict
    f1: dict
    support: dict
    macro_f1: float
    micro_f1: float
    present: tuple  # classes with nonzero support
    weighted_f1: float = 0.0

    def to_dict(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "present": list(self.present),
            "per_class": {
                c: {
                    "precision": self.precision[c],
                    "recall": self.recall[c],
                    "f1": self.f1[c],
                    "support": self.support[c],
                }
                for c in CLASSES
            },
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(pred, true) -> np.ndarray:
    if len(pred) != len(true):
        raise ValidationError(f"{len(pred)} predictions for {len(true)} truths")
    cm = np.zeros((len(CLASSES), len(CLASSES)), dtype=np.int64)
    try:
        t = np.array([CLASS_INDEX[c] for c in true], dtype=np.int64)
        p = np.array([CLASS_INDEX[c] for c in pred], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"label {exc} is not one of {CLASSES}") from exc
    np.add.at(cm, (t, p), 1)
    return cm


def metrics_from_confusion(cm) -> ClassMetrics:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValidationError("metrics need at least one beat")
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    prec = np.divide(tp, predicted, out=np.zeros(len(CLASSES)), where=predicted > 0)
    rec = np.divide(tp, support, out=np.zeros(len(CLASSES)), where=support > 0)
    denom = 2 * tp + (predicted - tp) + (support - tp)
    f1 = np.divide(2 * tp, denom, out=np.zeros(len(CLASSES)), where=denom > 0)
    present = support > 0
    return ClassMetrics(
        confusion=cm,
        precision=dict(zip(CLASSES, prec.tolist())),
        recall=dict(zip(CLASSES, rec.tolist())),
        f1=dict(zip(CLASSES, f1.tolist())),
        support=dict(zip(CLASSES, support.tolist())),
        macro_f1=float(f1[present].mean()),
        micro_f1=float(tp.sum() / total),
        present=tuple(c for c, p in zip(CLASSES, present) if p),
        weighted_f1=float(np.dot(f1, support) / total),
    )


def compute_metrics(pred, true) -> ClassMetrics:
    """One-vs-rest precision/recall/F1; Macro-F1 averages classes present in ``true``.

    On a closed label set Micro-F1 equals accuracy.
    """
    if len(true) == 0:
        raise ValidationError("metrics need at least one beat")
    return metrics_from_confusion(confusion_matrix(pred, true))


def confusion_rows(metrics: ClassMetrics) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalised confusion matrix and a mask of rows with no support (left at zero)."""
    cm = metrics.confusion.astype(float)
    sums = cm.sum(axis=1, keepdims=True)
    empty = sums[:, 0] == 0
    rows = np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)
    return rows, empty


def confusion_csv(metrics: ClassMetrics, normalized: bool = False) -> str:
    mat = confusion_rows(metrics)[0] if normalized else metrics.confusion
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\pred", *CLASSES])
    for c, row in zip(CLASSES, mat.tolist()):
        w.writerow([c, *[repr(float(v)) if normalized else int(v) for v in row]])
    return buf.getvalue()


def metrics_csv(metrics: ClassMetrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "precision", "recall", "f1", "support"])
    for c in CLASSES:
        w.writerow([c, repr(metrics.precision[c]), repr(metrics.recall[c]), repr(metrics.f1[c]), metrics.support[c]])
    w.writerow(["macro", "", "", repr(metrics.macro_f1), sum(metrics.support.values())])
    w.writerow(["micro", "", "", repr(metrics.micro_f1), sum(metrics.support.values())])
    return buf.getvalue()


def default_bin_edges() -> np.ndarray:
    """20 bins: 0.1 wide up to 0.9, one bin to 0.98, then ten 0.002-wide bins."""
    return np.unique(np.concatenate([np.linspace(0, 0.9, 10), [0.98], np.linspace(0.98, 1.0, 11)]))


@dataclass
class ProfileBin:
    lo: float
    hi: float
    count: int
    minimal_f1: float | None
    rich_f1: float | None


def confidence_profile(confidences, minimal_correct, rich_correct, n_beats, edges=None) -> list[ProfileBin]:
    """Pooled per-bin Micro-F1 of both branches against segment confidence.

    Each segment contributes its number of correct beats under either branch
    and its beat count; the last bin is closed on the right.
    """
    c = np.asarray(confidences, dtype=float)
    if c.size == 0:
        raise ValidationError("confidence profile needs at least one segment")
    edges = default_bin_edges() if edges is None else np.asarray(edges, dtype=float)
    idx = np.clip(np.searchsorted(edges, c, side="right") - 1, 0, len(edges) - 2)
    mc = np.asarray(minimal_correct, dtype=float)
    rc = np.asarray(rich_correct, dtype=float)
    nb = np.asarray(n_beats, dtype=float)
    out = []
    for b in range(len(edges) - 1):
        sel = idx == b
        beats = nb[sel].sum()
        out.append(
            ProfileBin(
                float(edges[b]),
                float(edges[b + 1]),
                int(sel.sum()),
                float(mc[sel].sum() / beats) if beats else None,
                float(rc[sel].sum() / beats) if beats else None,
            )
        )
    return out


# --- stress protocol -------------------------------------------------------


@dataclass
class Perturbed:
    anchors: tuple
    labels: tuple
    kept: tuple  # original beat index of each remaining anchor
    interfered: int | None  # original index of the shifted beat, if any


def stress_mask(anchors, labels, k: int) -> Perturbed:
    """Remove beat ``k``; it is no longer a prediction target."""
    if not 0 <= k < len(anchors):
        raise ValidationError(f"no beat {k} to mask")
    kept = tuple(i for i in range(len(anchors)) if i != k)
    return Perturbed(
        tuple(anchors[i] for i in kept), tuple(labels[i] for i in kept), kept, None
    )


def stress_mislocalize(anchors, labels, k: int, offset: int, length: int) -> Perturbed | None:
    """Shift beat ``k`` by ``offset`` samples (|offset| in 6..30).

    Returns ``None`` when the shift would leave the segment or reorder beats.
    """
    if abs(int(offset)) not in STRESS_OFFSETS:
        raise ValidationError(f"offset {offset} outside +-[6, 30] samples")
    if not 0 <= k < len(anchors):
        raise ValidationError(f"no beat {k} to shift")
    new = int(anchors[k]) + int(offset)
    if not 0 <= new < length:
        return None
    if (k > 0 and new <= anchors[k - 1]) or (k + 1 < len(anchors) and new >= anchors[k + 1]):
        return None
    moved = list(anchors)
    moved[k] = new
    return Perturbed(tuple(moved), tuple(labels), tuple(range(len(anchors))), k)


@dataclass
class GroupTally:
    truth: list
    clean: list
    stressed: list

    def delta_f1(self) -> dict:
        if not self.truth:
            return {c: None for c in CLASSES}
        clean = compute_metrics(self.clean, self.truth)
        stressed = compute_metrics(self.stressed, self.truth)
        return stress_report(clean, stressed)


def stress_report(clean: ClassMetrics, stressed: ClassMetrics) -> dict:
    """Per-class ``F1_clean - F1_stress``; positive means degradation.

    Classes absent from the truths of both runs map to ``None``.
    """
    out = {}
    for c in CLASSES:
        if clean.support[c] == 0 and stressed.support[c] == 0:
            out[c] = None
        else:
            out[c] = clean.f1[c] - stressed.f1[c]
    return out


@dataclass
class StressOutcome:
    perturbation: str
    interfered: dict
    non_interfered: dict
    trials: int
    skipped: int
    offsets: list


def run_stress(system, segments, perturbation: str, seed: int = 0) -> StressOutcome:
    """Perturb one random beat per segment and compare routed predictions.

    ``segments`` yields ``(segment_id, signal, anchors, labels, divisor)``;
    ``system`` is a :class:`~ecgroute.routing.RoutedClassifier`.
    """
    if perturbation not in ("mask", "mislocalize"):
        raise ValidationError(f"unknown perturbation {perturbation!r}")
    rng = np.random.default_rng(seed)
    inter = GroupTally([], [], [])
    other = GroupTally([], [], [])
    trials = skipped = 0
    offsets = []
    for seg_id, signal, anchors, labels, divisor in segments:
        if len(anchors) == 0:
            continue
        k = int(rng.integers(len(anchors)))
        off = int(rng.choice(STRESS_OFFSETS)) * (1 if rng.random() < 0.5 else -1)
        if perturbation == "mask":
            pert = stress_mask(anchors, labels, k)
        else:
            pert = stress_mislocalize(anchors, labels, k, off, len(signal))
            if pert is None:
                skipped += 1
                continue
            offsets.append(off)
        clean = system.classify(seg_id, signal, anchors, divisor)
        stressed = system.classify(seg_id, signal, pert.anchors, divisor)
        trials += 1
        if stressed is None:
            continue
        for pos, orig in enumerate(pert.kept):
            if labels[orig] is None:  # unmatched detection, not scored
                continue
            group = inter if orig == pert.interfered else other
            group.truth.append(labels[orig])
            group.clean.append(clean.labels[orig])
            group.stressed.append(stressed.labels[pos])
    return StressOutcome(
        perturbation,
        inter.delta_f1() if perturbation == "mislocalize" else {c: None for c in CLASSES},
        other.delta_f1(),
        trials,
        skipped,
        offsets,
    )


def stress_table_csv(outcomes) -> str:
    """Columns Mask/Mislocalize x Interfered/Non-interfered, one row per class."""
    by = {o.perturbation: o for o in outcomes}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "mask_interfered", "mask_non_interfered", "mislocalize_interfered", "mislocalize_non_interfered"])

    def cell(o, group, c):
        if o is None:
            return ""
        v = getattr(o, group)[c]
        return "--" if v is None else f"{v:.6f}"

    for c in CLASSES:
        m, s = by.get("mask"), by.get("mislocalize")
        w.writerow([c, cell(m, "interfered", c), cell(m, "non_interfered", c), cell(s, "interfered", c), cell(s, "non_interfered", c)])
    return buf.getvalue()

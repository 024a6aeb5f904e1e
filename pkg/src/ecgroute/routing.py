"""Confidence gating between the minimal and rich classifiers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .features import segment_features, timing_features
from .ingest import CLASSES
from .model import ClassifierParams, predict

MODES = ("mean", "min")
TAU_ABOVE_ALL = 1.0 + 1e-9
TOOL_CALLS = {"minimal": 2, "rich": 4}


def beat_confidence(posterior) -> float:
    return float(np.max(posterior))


@dataclass(frozen=True)
class SegmentConfidence:
    beat_confidences: tuple
    aggregate: float
    mode: str = "mean"


def segment_confidence(posteriors, mode: str = "mean") -> SegmentConfidence:
    """Per-beat max posterior, aggregated by mean or min."""
    if mode not in MODES:
        raise ValidationError(f"unknown confidence mode {mode!r}")
    p = np.atleast_2d(np.asarray(posteriors, dtype=float))
    if p.size == 0 or p.shape[0] == 0:
        raise ValidationError("segment confidence needs at least one beat")
    beats = p.max(axis=1)
    agg = float(beats.mean()) if mode == "mean" else float(beats.min())
    return SegmentConfidence(tuple(beats.tolist()), agg, mode)


@dataclass
class SweepItem:
    """One induction-split segment: its confidence and both branches' labels."""

    subject: str
    confidence: float
    minimal: Sequence[str]
    rich: Sequence[str] | None
    truth: Sequence[str]


@dataclass
class SweepResult:
    tau: float
    micro_f1: float
    n_rich: int
    candidates: list = field(default_factory=list)  # (tau, micro_f1, n_rich)


def _correct(pred, truth) -> int:
    return sum(p == t for p, t in zip(pred, truth))


def sweep_threshold(items: Sequence[SweepItem], allowed_subjects=None) -> SweepResult:
    """Choose the threshold maximising beat-level Micro-F1 on the induction split.

    Candidates are 0, every observed confidence and a value above 1. A
    segment keeps the minimal labels when its confidence is at least the
    threshold. Ties prefer fewer rich routings, then the larger threshold.
    If ``allowed_subjects`` is given, any other subject is treated as leakage.
    """
    if not items:
        raise ValidationError("threshold sweep needs at least one segment")
    if allowed_subjects is not None:
        allowed = set(allowed_subjects)
        leaked = sorted({it.subject for it in items} - allowed)
        if leaked:
            raise ValidationError(f"subjects outside the induction split in sweep: {leaked}")
    for it in items:
        if it.minimal is None or it.rich is None:
            raise ValidationError(f"segment of {it.subject} lacks a branch prediction")
        if not (len(it.minimal) == len(it.rich) == len(it.truth)):
            raise ValidationError(f"segment of {it.subject} has misaligned predictions")

    conf = np.array([it.confidence for it in items], dtype=float)
    min_ok = np.array([_correct(it.minimal, it.truth) for it in items], dtype=np.int64)
    rich_ok = np.array([_correct(it.rich, it.truth) for it in items], dtype=np.int64)
    n_beats = int(sum(len(it.truth) for it in items))

    cands = np.unique(np.concatenate([[0.0], conf, [TAU_ABOVE_ALL]]))
    best = None
    table = []
    for tau in cands:
        rich = conf < tau
        correct = int(min_ok[~rich].sum() + rich_ok[rich].sum())
        n_rich = int(rich.sum())
        f1 = correct / n_beats if n_beats else 0.0
        table.append((float(tau), f1, n_rich))
        key = (correct, -n_rich, tau)
        if best is None or key > best[0]:
            best = (key, float(tau), f1, n_rich)
    _, tau, f1, n_rich = best
    return SweepResult(tau, f1, n_rich, table)


@dataclass
class RoutedPrediction:
    segment_id: str
    confidence: SegmentConfidence
    branch: str  # "minimal" or "rich"
    labels: tuple
    anchors: tuple = ()
    truth: tuple | None = None

    @property
    def tool_calls(self) -> int:
        return TOOL_CALLS[self.branch]

    def to_dict(self) -> dict:
        d = {
            "segment": self.segment_id,
            "confidence": self.confidence.aggregate,
            "mode": self.confidence.mode,
            "branch": self.branch,
            "tool_calls": self.tool_calls,
            "anchors": list(self.anchors),
            "labels": list(self.labels),
        }
        if self.truth is not None:
            d["truth"] = list(self.truth)
        return d


def route(
    segment_id: str,
    minimal_posteriors,
    tau: float,
    rich_predictor: Callable[[], Sequence[str]],
    mode: str = "mean",
    anchors=(),
    truth=None,
) -> RoutedPrediction:
    """Keep the minimal labels when confidence >= ``tau``; otherwise call ``rich_predictor`` once."""
    p = np.atleast_2d(np.asarray(minimal_posteriors, dtype=float))
    conf = segment_confidence(p, mode)
    if conf.aggregate >= tau:
        labels = tuple(CLASSES[i] for i in p.argmax(axis=1))
        branch = "minimal"
    else:
        labels = tuple(rich_predictor())
        branch = "rich"
        if len(labels) != p.shape[0]:
            raise ValidationError("rich predictor returned the wrong number of labels")
    return RoutedPrediction(segment_id, conf, branch, labels, tuple(anchors), None if truth is None else tuple(truth))


def routing_report(routed: Sequence[RoutedPrediction]) -> dict:
    """Average tool calls, rich fraction and per-branch Micro-F1 (when truths are known)."""
    n = len(routed)
    if n == 0:
        return {"segments": 0, "avg_tool_calls": 0.0, "rich_fraction": 0.0, "micro_f1": {}}
    calls = sum(r.tool_calls for r in routed)
    n_rich = sum(r.branch == "rich" for r in routed)
    f1 = {}
    for branch in ("minimal", "rich", "all"):
        sel = [r for r in routed if r.truth is not None and (branch == "all" or r.branch == branch)]
        beats = sum(len(r.truth) for r in sel)
        if beats:
            f1[branch] = sum(_correct(r.labels, r.truth) for r in sel) / beats
    return {
        "segments": n,
        "minimal_segments": n - n_rich,
        "rich_segments": n_rich,
        "avg_tool_calls": calls / n,
        "rich_fraction": n_rich / n,
        "micro_f1": f1,
    }


@dataclass
class ThresholdArtifact:
    dataset: str
    mode: str
    tau: float
    induced_on: list
    micro_f1_at_tau: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ThresholdArtifact":
        return cls(**json.loads(text))


@dataclass
class RoutedClassifier:
    """Peak-anchored two-tier classifier with a fixed confidence threshold.

    The minimal branch needs only anchor timing; the signal is read for the
    rich features only when a segment is routed to the rich branch.
    """

    minimal: ClassifierParams
    rich: ClassifierParams
    tau: float
    mode: str = "mean"
    sampling_rate_hz: float = 360.0
    local_window: int = 10
    morph_scaling: str = "minmax"
    rich_calls: int = 0

    def minimal_posteriors(self, anchors, divisor=None) -> np.ndarray:
        return np.atleast_2d(predict(self.minimal, timing_features(anchors, divisor, self.local_window)))

    def rich_labels(self, signal, anchors, divisor=None) -> list[str]:
        self.rich_calls += 1
        feats = segment_features(signal, anchors, self.sampling_rate_hz, divisor, self.local_window, self.morph_scaling)
        p = np.atleast_2d(predict(self.rich, feats))
        return [CLASSES[i] for i in p.argmax(axis=1)]

    def classify(self, segment_id, signal, anchors, divisor=None, truth=None, tau=None) -> RoutedPrediction | None:
        """Route one segment; ``None`` when it has no anchors."""
        if len(anchors) == 0:
            return None
        post = self.minimal_posteriors(anchors, divisor)
        return route(
            segment_id,
            post,
            self.tau if tau is None else tau,
            lambda: self.rich_labels(signal, anchors, divisor),
            self.mode,
            anchors,
            truth,
        )

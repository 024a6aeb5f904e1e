"""Shift-based re-anchoring of minority-class beats into extra 10 s windows."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ValidationError
from .ingest import Record, Segment, beats_in_window, cut_segments, segment_length

DEFAULT_TARGETS = {"S": 0.10, "V": 0.10, "F": 0.05}
DEFAULT_OFFSETS = (0.2, 0.35, 0.5, 0.65, 0.8)


@dataclass
class AugmentPlan:
    targets: dict
    offsets: tuple
    # class -> (beats of that class, total extra windows wanted)
    budget: dict = field(default_factory=dict)
    assignments: list = field(default_factory=list)  # (record, beat_index, fraction)

    def offsets_for(self, cls: str, rank: int) -> tuple:
        """Ladder prefix for the ``rank``-th beat of ``cls``; extras are spread evenly."""
        n, total = self.budget.get(cls, (0, 0))
        if n == 0 or total == 0:
            return ()
        k = (rank + 1) * total // n - rank * total // n
        return self.offsets[:k]

    def per_beat(self, cls: str) -> float:
        n, total = self.budget.get(cls, (0, 0))
        return total / n if n else 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "targets": self.targets,
                "offsets": list(self.offsets),
                "budget": {c: list(v) for c, v in self.budget.items()},
                "assignments": [list(a) for a in self.assignments],
            },
            indent=1,
        )


def _check_ladder(offsets) -> tuple:
    offsets = tuple(float(f) for f in offsets)
    if not offsets:
        raise ValidationError("offset ladder is empty")
    if any(not 0.0 < f < 1.0 for f in offsets):
        raise ValidationError("offset fractions must lie strictly inside (0, 1)")
    if len(set(offsets)) != len(offsets):
        raise ValidationError("offset ladder has repeated fractions")
    return offsets


def plan_augmentation(class_counts: dict, targets: dict | None = None, offsets=DEFAULT_OFFSETS, beats=None) -> AugmentPlan:
    """Decide how many extra windows each minority beat receives.

    A class ``c`` with ``n_c`` beats and target ratio ``r`` wants
    ``round(r * n_N) - n_c`` extra windows, capped at one window per ladder
    offset per beat. Classes at or above target get nothing. ``beats`` is an
    optional ordered sequence of ``(record, beat_index, class)`` from the
    training split; when given, the plan lists concrete assignments.
    """
    targets = dict(DEFAULT_TARGETS if targets is None else targets)
    offsets = _check_ladder(offsets)
    for cls, r in targets.items():
        if not r > 0:
            raise ValidationError(f"target ratio for {cls} must be positive, got {r}")
        if r > 1:
            raise ValidationError(f"target ratio for {cls} must be at most 1, got {r}")
        if cls == "N":
            raise ValidationError("N is the reference class and takes no target")
    n_ref = int(class_counts.get("N", 0))
    plan = AugmentPlan(targets, offsets)
    for cls, r in targets.items():
        n = int(class_counts.get(cls, 0))
        want = int(round(r * n_ref)) - n
        plan.budget[cls] = (n, 0 if n == 0 or want <= 0 else min(want, n * len(offsets)))

    if beats is not None:
        rank: dict[str, int] = {}
        for rec, idx, cls in beats:
            if cls not in plan.budget:
                continue
            k = rank.get(cls, 0)
            rank[cls] = k + 1
            for f in plan.offsets_for(cls, k):
                plan.assignments.append((rec, int(idx), f))
        for cls, (n, _) in plan.budget.items():
            if rank.get(cls, 0) != n:
                raise ValidationError(f"class {cls}: counts say {n} beats, beat list has {rank.get(cls, 0)}")
    return plan


def minority_beats(records, classes=("S", "V", "F")) -> list[tuple[str, int, str]]:
    """``(record, beat_index, class)`` of every beat whose class is in ``classes``."""
    out = []
    for rec in records:
        _, labels = rec.beats()
        out += [(rec.subject_id, i, c) for i, c in enumerate(labels.tolist()) if c in classes]
    return out


def reanchor(record: Record, beat_sample: int, fraction: float, seconds: float = 10.0) -> Segment | None:
    """Window of ``seconds`` placing ``beat_sample`` at ``fraction`` of its length.

    The start is clipped to the record, so near the edges the beat lands
    elsewhere. Returns ``None`` if the record is shorter than one window.
    """
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"fraction must lie strictly inside (0, 1), got {fraction}")
    length = segment_length(record.sampling_rate_hz, seconds)
    if record.n_samples < length:
        return None
    start = int(beat_sample) - int(round(fraction * length))
    start = min(max(start, 0), record.n_samples - length)
    anchors, labels = beats_in_window(record, start, length)
    return Segment(
        record.subject_id, start, length, anchors, labels, "augmented",
        target_anchor=int(beat_sample) - start, target_fraction=float(fraction),
    )


def dedup(segments) -> list[Segment]:
    """Drop repeated ``(record, start)`` windows; base-grid windows win over augmented ones."""
    segments = list(segments)
    base = {s.key for s in segments if s.origin == "base"}
    seen = set()
    out = []
    for s in segments:
        if s.key in seen or (s.origin == "augmented" and s.key in base):
            continue
        seen.add(s.key)
        out.append(s)
    return out


def augment(records, plan: AugmentPlan, seconds: float = 10.0) -> list[Segment]:
    """Augmented windows for every plan assignment, in plan order."""
    by_id = {r.subject_id: r for r in records}
    out = []
    for rec_id, idx, f in plan.assignments:
        rec = by_id.get(rec_id)
        if rec is None:
            raise ValidationError(f"plan references unknown record {rec_id}")
        samples, _ = rec.beats()
        if not 0 <= idx < len(samples):
            raise ValidationError(f"plan references beat {idx} missing from record {rec_id}")
        seg = reanchor(rec, int(samples[idx]), f, seconds)
        if seg is not None:
            out.append(seg)
    return out


def training_segments(records, targets=None, offsets=DEFAULT_OFFSETS, seconds: float = 10.0, manifest=None):
    """Base grid plus deduplicated augmented windows for training subjects.

    With a split ``manifest``, any record outside its optimisation split
    is rejected so test and induction subjects are never augmented.
    Returns ``(segments, plan)``.
    """
    records = list(records)
    if manifest is not None:
        foreign = [r.subject_id for r in records if r.subject_id not in manifest.d1_subjects]
        if foreign:
            raise ValidationError(f"augmentation restricted to training subjects; got {foreign}")
    counts = {"N": 0, "S": 0, "V": 0, "F": 0}
    for rec in records:
        for c in rec.beats()[1].tolist():
            counts[c] += 1
    plan = plan_augmentation(counts, targets, offsets, minority_beats(records, tuple((targets or DEFAULT_TARGETS).keys())))
    base = [s for r in records for s in cut_segments(r, seconds)]
    return dedup(base + augment(records, plan, seconds)), plan


def write_jsonl(segments) -> str:
    return "".join(json.dumps(s.to_dict(), sort_keys=True) + "\n" for s in segments)


def read_jsonl(text: str) -> list[Segment]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(Segment.from_dict(json.loads(line)))
        except (ValueError, KeyError) as exc:
            raise ValidationError(f"segment line {n}: {exc}") from exc
    return out

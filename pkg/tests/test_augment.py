import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgroute.augment import (
    DEFAULT_OFFSETS,
    augment,
    dedup,
    minority_beats,
    plan_augmentation,
    read_jsonl,
    reanchor,
    training_segments,
    write_jsonl,
)
from ecgroute.errors import ValidationError
from ecgroute.ingest import DS1, DS2, Record, Segment, build_split
from ecgroute.synthetic import SyntheticConfig, synthetic_record

# beat counts of the de Chazal training half of the arrhythmia database
DS1_COUNTS = {"N": 45866, "S": 944, "V": 3788, "F": 415}


def record(n=20_000, beats=((5000, "A"), (100, "V"), (9000, "N"))):
    beats = sorted(beats)
    return Record("r1", 360, np.zeros((1, n)), (200.0,), (0,), np.array([b for b, _ in beats]), tuple(s for _, s in beats))


def test_class_above_target_gets_nothing():
    plan = plan_augmentation({"N": 100, "S": 30, "V": 5, "F": 0})
    assert plan.budget["S"] == (30, 0)
    assert plan.budget["V"] == (5, 5)
    assert plan.budget["F"] == (0, 0)
    assert plan.offsets_for("S", 0) == ()


def test_rarer_class_gets_at_least_as_many_offsets():
    plan = plan_augmentation(DS1_COUNTS)
    assert plan.per_beat("S") >= plan.per_beat("V")
    assert plan.per_beat("F") >= plan.per_beat("V")


def test_ds1_like_counts_reach_target():
    plan = plan_augmentation(DS1_COUNTS)
    for cls, r in plan.targets.items():
        n, extra = plan.budget[cls]
        target = r * DS1_COUNTS["N"]
        assert abs((n + extra) - target) <= 0.1 * target


def test_ladder_cap_and_even_spread():
    plan = plan_augmentation({"N": 1000, "S": 3}, {"S": 0.5})
    assert plan.budget["S"] == (3, 15)  # capped at five offsets per beat
    plan = plan_augmentation({"N": 100, "S": 4}, {"S": 0.1})
    assert [len(plan.offsets_for("S", k)) for k in range(4)] == [1, 2, 1, 2]
    assert sum(len(plan.offsets_for("S", k)) for k in range(4)) == 6


def test_plan_rejections():
    with pytest.raises(ValidationError):
        plan_augmentation({"N": 10}, {"S": 0.0})
    with pytest.raises(ValidationError):
        plan_augmentation({"N": 10}, {"S": 1.5})
    with pytest.raises(ValidationError):
        plan_augmentation({"N": 10}, {"N": 0.5})
    with pytest.raises(ValidationError):
        plan_augmentation({"N": 10}, offsets=())
    with pytest.raises(ValidationError):
        plan_augmentation({"N": 10}, offsets=(0.5, 1.0))
    with pytest.raises(ValidationError, match="beat list"):
        plan_augmentation({"N": 10, "S": 2}, {"S": 0.5}, beats=[("r", 0, "S")])


def test_reanchor_examples():
    rec = record()
    seg = reanchor(rec, 5000, 0.5)
    assert seg.start_sample == 3200 and seg.target_anchor == 1800
    assert seg.origin == "augmented" and (1800, "S") in zip(seg.anchors, seg.labels)
    edge = reanchor(rec, 100, 0.9)
    assert edge.start_sample == 0 and edge.target_anchor == 100
    tail = reanchor(rec, 19_990, 0.2)
    assert tail.start_sample == 20_000 - 3600
    assert reanchor(record(n=3000, beats=((100, "V"),)), 100, 0.5) is None
    with pytest.raises(ValidationError):
        reanchor(rec, 5000, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 19_999), st.sampled_from(DEFAULT_OFFSETS))
def test_unclipped_target_position(beat, f):
    rec = record()
    seg = reanchor(rec, beat, f)
    start = beat - round(f * 3600)
    if 0 <= start <= 20_000 - 3600:
        assert abs(seg.target_anchor - f * 3600) <= 1
    assert 0 <= seg.start_sample <= 20_000 - 3600


def test_dedup_prefers_base_and_keeps_order():
    b = Segment("r", 0, 3600, origin="base")
    a1 = Segment("r", 0, 3600, origin="augmented", target_anchor=5, target_fraction=0.2)
    a2 = Segment("r", 50, 3600, origin="augmented", target_anchor=5, target_fraction=0.2)
    a3 = Segment("r", 50, 3600, origin="augmented", target_anchor=5, target_fraction=0.35)
    assert dedup([a1, a2, b, a3]) == [a2, b]


def test_augment_roundtrip_and_determinism():
    cfg = SyntheticConfig(records=["a", "b"], seconds=60.0)
    recs = [synthetic_record(n, cfg) for n in cfg.records]
    segs, plan = training_segments(recs)
    again, plan2 = training_segments(recs)
    assert segs == again and plan.to_json() == plan2.to_json()
    assert read_jsonl(write_jsonl(segs)) == segs
    aug = [s for s in segs if s.origin == "augmented"]
    assert aug and len({s.key for s in segs}) == len(segs)
    assert len(augment(recs, plan)) == len(plan.assignments)
    assert {r for r, _, _ in plan.assignments} <= {r for r, _, _ in minority_beats(recs)}


def test_non_training_subjects_rejected():
    m = build_split(DS1, DS2, (9, 1), seed=0)
    cfg = SyntheticConfig(records=[DS2[0]], seconds=20.0)
    with pytest.raises(ValidationError, match="training subjects"):
        training_segments([synthetic_record(DS2[0], cfg)], manifest=m)
    with pytest.raises(ValidationError):
        training_segments([synthetic_record(m.d2_subjects[0], cfg)], manifest=m)


def test_read_jsonl_reports_line():
    with pytest.raises(ValidationError, match="line 2"):
        read_jsonl(write_jsonl([Segment("r", 0, 10)]) + "{}\n")

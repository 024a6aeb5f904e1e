import json
import os

import numpy as np
import pytest

from ecgroute.errors import DataError, ValidationError
from ecgroute.ingest import (
    DS1,
    DS2,
    MITDB_RECORDS,
    Record,
    Segment,
    SplitManifest,
    beats_in_window,
    build_split,
    class_counts,
    cut_segments,
    load_records,
    map_aami,
    read_record,
    segment_length,
)


def make_record(n=10_000, anns=((100, "N"), (400, "V"), (700, "Q"), (900, "+"), (3700, "A")), fs=360):
    return Record(
        "r1", fs, np.zeros((1, n)), (200.0,), (0,),
        np.array([a for a, _ in anns]), tuple(s for _, s in anns),
    )


def test_aami_mapping_table():
    expected = {
        "N": "N", "L": "N", "R": "N", "e": "N", "j": "N",
        "A": "S", "a": "S", "J": "S", "S": "S",
        "V": "V", "E": "V", "F": "F",
        "/": "Q", "f": "Q", "Q": "Q",
    }
    for sym, cls in expected.items():
        assert map_aami(sym) == cls
    for sym in "+~|x!\"[]()p^tu?=@sTD*Br":
        assert map_aami(sym) is None


def test_database_split_lists():
    assert len(DS1) == len(DS2) == 22
    assert not set(DS1) & set(DS2)
    assert len(MITDB_RECORDS) == 48
    assert set(MITDB_RECORDS) - set(DS1) - set(DS2) == {"102", "104", "107", "217"}


def test_segment_length_and_grid():
    assert segment_length(360) == 3600
    rec = make_record(n=3600 * 2 + 1000)
    segs = cut_segments(rec)
    assert [s.start_sample for s in segs] == [0, 3600]  # partial tail dropped
    # Q and non-beat annotations are not anchors
    assert segs[0].anchors == (100, 400) and segs[0].labels == ("N", "V")
    assert segs[1].anchors == (100,) and segs[1].labels == ("S",)


def test_record_of_650000_samples_has_180_segments():
    rec = Record("x", 360, np.zeros((1, 650_000)), (200.0,), (0,), np.zeros(0, int), ())
    assert len(cut_segments(rec)) == 180


def test_beats_in_window_is_half_open():
    rec = make_record()
    assert beats_in_window(rec, 100, 300) == ((0,), ("N",))
    assert beats_in_window(rec, 101, 300) == ((299,), ("V",))


def test_record_validation():
    with pytest.raises(ValidationError, match="not ordered"):
        make_record(anns=((5, "N"), (3, "N")))
    with pytest.raises(ValidationError, match="beyond end"):
        make_record(n=10, anns=((10, "N"),))
    with pytest.raises(ValidationError, match="sampling rate"):
        make_record(fs=0)
    # equal sample positions are legal in the annotation format
    make_record(anns=((5, "N"), (5, "+")))


def test_record_arrays_are_read_only():
    rec = make_record()
    with pytest.raises(ValueError):
        rec.signals[0, 0] = 1.0


def test_segment_validation_and_roundtrip():
    s = Segment("100", 3600, 3600, (1, 5), ("N", "V"), "augmented", target_anchor=5, target_fraction=0.5)
    assert Segment.from_dict(json.loads(json.dumps(s.to_dict()))) == s
    with pytest.raises(ValidationError):
        Segment("100", 0, 10, (5, 5), ("N", "N"))
    with pytest.raises(ValidationError):
        Segment("100", 0, 10, (10,), ("N",))
    with pytest.raises(ValidationError):
        Segment("100", 0, 10, (1,), ("N",), origin="other")


def test_build_split_partition_and_determinism():
    m = build_split(DS1, DS2, (9, 1), seed=7)
    assert len(m.d2_subjects) == 2  # round(22 / 10)
    assert set(m.d1_subjects) | set(m.d2_subjects) == set(DS1)
    assert m == build_split(DS1, DS2, (9, 1), seed=7)
    assert SplitManifest.from_json(m.to_json()) == m
    assert m.role(DS2[0]) == "ds2" and m.role(m.d2_subjects[0]) == "d2"
    with pytest.raises(ValidationError):
        build_split(["100", "101"], ["101"])


def test_split_manifest_rejects_leaks():
    with pytest.raises(ValidationError):
        SplitManifest(("a", "b"), ("b",), ("a",), ("b",))
    with pytest.raises(ValidationError):
        SplitManifest(("a", "b"), ("c",), ("a",), ("c",))


def test_generated_dataset_roundtrip_counts(synthetic_dir):
    with open(os.path.join(synthetic_dir, "synthetic.json")) as fh:
        manifest = json.load(fh)
    names = sorted(manifest["records"])
    recs = load_records(synthetic_dir, names, jobs=3)
    assert [r.subject_id for r in recs] == names
    for rec in recs:
        truth = manifest["records"][rec.subject_id]
        assert class_counts([rec]) == truth["counts"]
        assert rec.annotations == [tuple(a) for a in truth["annotations"]]
        assert rec.n_samples == truth["n_samples"]


def test_read_record_converts_to_millivolts(synthetic_dir):
    rec = read_record(synthetic_dir, "s01")
    assert rec.sampling_rate_hz == 360 and rec.signals.shape[0] == 2
    # R peaks of normal beats sit near +1.2 mV
    samples, labels = rec.beats()
    n = samples[labels == "N"]
    assert 0.9 < np.median(rec.signals[0, n]) < 1.5


def test_missing_files_raise_data_error(tmp_path):
    with pytest.raises(DataError, match="missing header"):
        read_record(str(tmp_path), "nope")

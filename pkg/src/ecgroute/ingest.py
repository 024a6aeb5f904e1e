"""Records, AAMI label mapping, base-grid segmentation and subject splits."""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError, ParseError, ValidationError
from .wfdb_io import parse_annotations, parse_header, read_signals

CLASSES = ("N", "S", "V", "F")
CLASS_INDEX = {c: i for i, c in enumerate(CLASSES)}

_AAMI = {}
_AAMI.update(dict.fromkeys("NLRej", "N"))
_AAMI.update(dict.fromkeys("AaJS", "S"))
_AAMI.update(dict.fromkeys("VE", "V"))
_AAMI["F"] = "F"
_AAMI.update(dict.fromkeys("/fQ", "Q"))

# Inter-patient protocol of de Chazal et al. (2004); paced records 102, 104,
# 107 and 217 belong to neither set.
DS1 = (
    "101", "106", "108", "109", "112", "114", "115", "116", "118", "119", "122",
    "124", "201", "203", "205", "207", "208", "209", "215", "220", "223", "230",
)
DS2 = (
    "100", "103", "105", "111", "113", "117", "121", "123", "200", "202", "210",
    "212", "213", "214", "219", "221", "222", "228", "231", "232", "233", "234",
)
MITDB_RECORDS = tuple(sorted(DS1 + DS2 + ("102", "104", "107", "217")))

SEGMENT_SECONDS = 10.0


def map_aami(symbol: str) -> str | None:
    """Map a WFDB beat symbol to its AAMI class, or ``None`` for non-beat annotations."""
    return _AAMI.get(symbol)


@dataclass(frozen=True, eq=False)
class Record:
    """One subject's signal and annotations.

    ``signals`` has shape ``(n_channels, n_samples)`` and holds millivolts.
    Arrays are made read-only so a record can be shared between threads.
    """

    subject_id: str
    sampling_rate_hz: int
    signals: np.ndarray
    adc_gain: tuple
    adc_zero: tuple
    ann_samples: np.ndarray
    ann_symbols: tuple
    channel_names: tuple = ()

    def __post_init__(self):
        sig = np.array(self.signals, dtype=np.float64, ndmin=2)
        samples = np.asarray(self.ann_samples, dtype=np.int64)
        if self.sampling_rate_hz <= 0:
            raise ValidationError("sampling rate must be positive")
        if len(samples) != len(self.ann_symbols):
            raise ValidationError("annotation samples and symbols differ in length")
        if len(samples) and (np.any(np.diff(samples) < 0) or samples[0] < 0):
            raise ValidationError(f"{self.subject_id}: annotations are not ordered")
        if len(samples) and samples[-1] >= sig.shape[1]:
            raise ValidationError(f"{self.subject_id}: annotation beyond end of signal")
        sig.flags.writeable = False
        samples.flags.writeable = False
        object.__setattr__(self, "signals", sig)
        object.__setattr__(self, "ann_samples", samples)
        object.__setattr__(self, "ann_symbols", tuple(self.ann_symbols))

    @property
    def n_samples(self) -> int:
        return self.signals.shape[1]

    @property
    def annotations(self) -> list[tuple[int, str]]:
        return list(zip(self.ann_samples.tolist(), self.ann_symbols))

    def beats(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample positions and AAMI classes of every N/S/V/F beat."""
        return self._beat_table

    def qrs_samples(self) -> np.ndarray:
        """Positions of every beat annotation, Q beats included (detector reference)."""
        keep = np.array([map_aami(s) is not None for s in self.ann_symbols], dtype=bool)
        return self.ann_samples[keep] if keep.size else self.ann_samples[:0]

    @cached_property
    def _beat_table(self):
        classes = np.array([map_aami(s) or "" for s in self.ann_symbols], dtype="<U1")
        keep = np.isin(classes, CLASSES)
        return self.ann_samples[keep], classes[keep]


@dataclass(frozen=True)
class Segment:
    record_ref: str
    start_sample: int
    length_samples: int
    anchors: tuple = ()
    labels: tuple = ()
    origin: str = "base"
    # augmented windows remember the beat they were built around
    target_anchor: int | None = None
    target_fraction: float | None = None

    def __post_init__(self):
        anchors = tuple(int(a) for a in self.anchors)
        if len(anchors) != len(self.labels):
            raise ValidationError("anchors and labels differ in length")
        if any(b <= a for a, b in zip(anchors, anchors[1:])):
            raise ValidationError("anchors must be strictly increasing")
        if anchors and (anchors[0] < 0 or anchors[-1] >= self.length_samples):
            raise ValidationError("anchor outside the segment")
        if self.origin not in ("base", "augmented"):
            raise ValidationError(f"unknown segment origin {self.origin!r}")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def key(self) -> tuple[str, int]:
        return (self.record_ref, self.start_sample)

    def to_dict(self) -> dict:
        d = {
            "record": self.record_ref,
            "start": self.start_sample,
            "length": self.length_samples,
            "origin": self.origin,
            "anchors": list(self.anchors),
            "labels": list(self.labels),
        }
        if self.target_anchor is not None:
            d["target_anchor"] = self.target_anchor
            d["target_fraction"] = self.target_fraction
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(
            record_ref=str(d["record"]),
            start_sample=int(d["start"]),
            length_samples=int(d["length"]),
            anchors=tuple(d["anchors"]),
            labels=tuple(d["labels"]),
            origin=d.get("origin", "base"),
            target_anchor=d.get("target_anchor"),
            target_fraction=d.get("target_fraction"),
        )

    def signal(self, record: Record, channel: int = 0) -> np.ndarray:
        return record.signals[channel, self.start_sample : self.start_sample + self.length_samples]


def segment_length(sampling_rate_hz: float, seconds: float = SEGMENT_SECONDS) -> int:
    length = math.floor(seconds * sampling_rate_hz)
    if length < 1:
        raise ValidationError("segment duration times sampling rate must be at least one sample")
    return length


def beats_in_window(record: Record, start: int, length: int) -> tuple[tuple, tuple]:
    """Anchors (window-relative) and AAMI labels of N/S/V/F beats inside a window."""
    samples, classes = record.beats()
    lo = np.searchsorted(samples, start, side="left")
    hi = np.searchsorted(samples, start + length, side="left")
    return tuple((samples[lo:hi] - start).tolist()), tuple(classes[lo:hi].tolist())


def cut_segments(record: Record, seconds: float = SEGMENT_SECONDS) -> list[Segment]:
    """Split a record on the non-overlapping grid, dropping the trailing partial window."""
    length = segment_length(record.sampling_rate_hz, seconds)
    out = []
    for k in range(record.n_samples // length):
        start = k * length
        anchors, labels = beats_in_window(record, start, length)
        out.append(Segment(record.subject_id, start, length, anchors, labels, "base"))
    return out


def read_record(directory: str, name: str, annotator: str = "atr") -> Record:
    """Load ``<name>.hea``, its format-212 signal file and ``<name>.<annotator>``."""
    hea_path = os.path.join(directory, f"{name}.hea")
    try:
        with open(hea_path) as fh:
            header = parse_header(fh.read())
    except FileNotFoundError as exc:
        raise DataError(f"missing header {hea_path}") from exc
    try:
        raw = read_signals(header, directory)
    except FileNotFoundError as exc:
        raise DataError(f"missing signal file for record {name}: {exc.filename}") from exc
    gains = np.array([s.gain for s in header.signals], dtype=np.float64)
    baselines = np.array([s.baseline for s in header.signals], dtype=np.float64)
    mv = (raw.astype(np.float64) - baselines[:, None]) / gains[:, None]
    ann_path = os.path.join(directory, f"{name}.{annotator}")
    try:
        with open(ann_path, "rb") as fh:
            anns = parse_annotations(fh.read())
    except FileNotFoundError as exc:
        raise DataError(f"missing annotation file {ann_path}") from exc
    except ParseError as exc:
        raise ParseError(f"{ann_path}: {exc}") from exc
    fs = header.sampling_rate
    return Record(
        subject_id=name,
        sampling_rate_hz=int(round(fs)),
        signals=mv,
        adc_gain=tuple(float(g) for g in gains),
        adc_zero=tuple(s.adc_zero for s in header.signals),
        ann_samples=np.array([a[0] for a in anns], dtype=np.int64),
        ann_symbols=tuple(a[1] for a in anns),
        channel_names=tuple(s.description for s in header.signals),
    )


def load_records(directory: str, names, jobs: int = 1) -> list[Record]:
    names = list(names)
    if jobs <= 1:
        return [read_record(directory, n) for n in names]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda n: read_record(directory, n), names))


def class_counts(records) -> dict[str, int]:
    """Per-AAMI-class beat counts (including Q) summed over ``records``."""
    counts = Counter()
    for rec in records:
        for sym in rec.ann_symbols:
            cls = map_aami(sym)
            if cls is not None:
                counts[cls] += 1
    return {c: counts.get(c, 0) for c in CLASSES + ("Q",)}


@dataclass(frozen=True)
class SplitManifest:
    ds1_subjects: tuple
    ds2_subjects: tuple
    d1_subjects: tuple
    d2_subjects: tuple
    seed: int = 0
    ratio: tuple = (9, 1)

    def __post_init__(self):
        ds1, ds2 = set(self.ds1_subjects), set(self.ds2_subjects)
        if ds1 & ds2:
            raise ValidationError(f"subjects in both DS1 and DS2: {sorted(ds1 & ds2)}")
        d1, d2 = set(self.d1_subjects), set(self.d2_subjects)
        if d1 & d2 or d1 | d2 != ds1:
            raise ValidationError("d1/d2 must partition DS1")

    def role(self, subject: str) -> str:
        if subject in self.d1_subjects:
            return "d1"
        if subject in self.d2_subjects:
            return "d2"
        if subject in self.ds2_subjects:
            return "ds2"
        raise KeyError(subject)

    def to_json(self) -> str:
        return json.dumps(
            {
                "ds1": list(self.ds1_subjects),
                "ds2": list(self.ds2_subjects),
                "d1": list(self.d1_subjects),
                "d2": list(self.d2_subjects),
                "seed": self.seed,
                "ratio": list(self.ratio),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        d = json.loads(text)
        return cls(
            tuple(d["ds1"]), tuple(d["ds2"]), tuple(d["d1"]), tuple(d["d2"]),
            d.get("seed", 0), tuple(d.get("ratio", (9, 1))),
        )


def build_split(ds1, ds2, ratio=(9, 1), seed: int = 0, subjects=None) -> SplitManifest:
    """Partition DS1 into an optimisation split d1 and a route-induction split d2.

    The d2 size is ``round(|DS1| * r2 / (r1 + r2))`` (half up), kept within
    ``[1, |DS1| - 1]`` when DS1 has at least two subjects.
    """
    ds1 = sorted({str(s) for s in ds1})
    ds2 = sorted({str(s) for s in ds2})
    overlap = set(ds1) & set(ds2)
    if overlap:
        raise ValidationError(f"subjects assigned to both DS1 and DS2: {sorted(overlap)}")
    if subjects is not None:
        missing = {str(s) for s in subjects} - set(ds1) - set(ds2)
        if missing:
            raise ValidationError(f"subjects without a DS1/DS2 assignment: {sorted(missing)}")
    r1, r2 = ratio
    if r1 < 0 or r2 < 0 or r1 + r2 <= 0:
        raise ValidationError("split ratio must be nonnegative with a positive sum")
    n = len(ds1)
    k = math.floor(n * r2 / (r1 + r2) + 0.5)
    if n >= 2 and r2 > 0:
        k = min(max(k, 1), n - 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    d2 = sorted(ds1[i] for i in order[:k])
    d1 = sorted(s for s in ds1 if s not in d2)
    return SplitManifest(tuple(ds1), tuple(ds2), tuple(d1), tuple(d2), seed, (r1, r2))

"""Pan-Tompkins R-peak detection and tolerance-based peak matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks, lfilter

from .errors import ValidationError

DESIGN_RATE = 200.0

# Difference equations of the original 200 Hz design.
_LP_B = np.array([1, 0, 0, 0, 0, 0, -2, 0, 0, 0, 0, 0, 1], dtype=float)
_LP_A = np.array([1, -2, 1], dtype=float)
_HP_B = np.zeros(33)
_HP_B[[0, 16, 17, 32]] = [-1 / 32, 1, -1, 1 / 32]
_HP_A = np.array([1, -1], dtype=float)
_BANDPASS_DELAY = 5 + 16
_DERIV = np.array([2, 1, 0, -1, -2], dtype=float) / 8
_MWI_WIDTH = 30  # 150 ms at 200 Hz


def _resample_linear(x, fs_in, fs_out):
    if fs_in == fs_out:
        return x
    n_out = int(np.floor(len(x) * fs_out / fs_in))
    t_in = np.arange(len(x)) / fs_in
    t_out = np.arange(n_out) / fs_out
    return np.interp(t_out, t_in, x)


def integrated_energy(signal, sampling_rate_hz):
    """Band-pass, differentiate, square and integrate at 200 Hz.

    Every stage is shifted to zero group delay, so an energy maximum sits
    on its QRS complex. Returns the 200 Hz integrator output.
    """
    x = _resample_linear(np.asarray(signal, dtype=float), float(sampling_rate_hz), DESIGN_RATE)
    x = x - np.median(x)
    bp = lfilter(_HP_B, _HP_A, lfilter(_LP_B, _LP_A, x))
    bp = np.concatenate([bp[_BANDPASS_DELAY:], np.zeros(min(_BANDPASS_DELAY, len(bp)))])
    deriv = np.convolve(bp, _DERIV, mode="same")
    return np.convolve(deriv * deriv, np.ones(_MWI_WIDTH) / _MWI_WIDTH, mode="same")


def _threshold_detect(mwi, fs, refractory):
    """Dual adaptive thresholds with search-back, on the integrator output."""
    if len(mwi) == 0 or mwi.max() <= 0:
        return []
    candidates, _ = find_peaks(mwi, distance=refractory)
    if len(candidates) == 0:
        return []
    learn = mwi[: int(2 * fs)]
    spki = 0.25 * learn.max()
    npki = 0.5 * learn.mean()

    def thresholds():
        thr1 = npki + 0.25 * (spki - npki)
        return thr1, 0.5 * thr1

    qrs: list[int] = []
    rr: list[int] = []
    noise: list[int] = []

    def accept(p, weight):
        nonlocal spki
        spki = weight * mwi[p] + (1 - weight) * spki
        if qrs:
            rr.append(p - qrs[-1])
            del rr[:-8]
        qrs.append(p)

    def search_back(upto):
        if not qrs or not rr:
            return False
        limit = 1.66 * np.mean(rr)
        if upto - qrs[-1] <= limit:
            return False
        _, thr2 = thresholds()
        pool = [q for q in noise if qrs[-1] + refractory < q < upto and mwi[q] > thr2]
        if not pool:
            return False
        best = max(pool, key=lambda q: mwi[q])
        noise.remove(best)
        accept(best, 0.25)
        return True

    for p in candidates:
        while search_back(p):
            pass
        thr1, _ = thresholds()
        if mwi[p] > thr1 and (not qrs or p - qrs[-1] > refractory):
            accept(p, 0.125)
        else:
            npki = 0.125 * mwi[p] + 0.875 * npki
            noise.append(p)
    while search_back(len(mwi)):
        pass
    return sorted(qrs)


def detect_rpeaks(signal, sampling_rate_hz, refractory_ms=200.0, refine_ms=40.0) -> np.ndarray:
    """Locate R peaks; returns strictly increasing sample indices at the native rate.

    Detections on the integrator are mapped back to the input rate and moved
    to the signal maximum within ``refine_ms`` of the detection.
    """
    if sampling_rate_hz < 100:
        raise ValidationError(f"unsupported sampling rate {sampling_rate_hz} Hz (need >= 100 Hz)")
    x = np.asarray(signal, dtype=float)
    if len(x) < sampling_rate_hz:
        raise ValidationError("signal shorter than one second")
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal contains non-finite values")
    mwi = integrated_energy(x, sampling_rate_hz)
    refractory200 = int(round(refractory_ms * DESIGN_RATE / 1000))
    hits = _threshold_detect(mwi, DESIGN_RATE, refractory200)
    if not hits:
        return np.zeros(0, dtype=np.int64)

    half = int(round(refine_ms * sampling_rate_hz / 1000))
    scale = sampling_rate_hz / DESIGN_RATE
    refined = []
    for h in hits:
        c = min(int(round(h * scale)), len(x) - 1)
        lo, hi = max(0, c - half), min(len(x), c + half + 1)
        refined.append(lo + int(np.argmax(x[lo:hi])))

    # two detections may refine onto nearby samples; keep the taller one
    refractory = int(round(refractory_ms * sampling_rate_hz / 1000))
    out: list[int] = []
    for p in sorted(set(refined)):
        if out and p - out[-1] < refractory:
            if x[p] > x[out[-1]]:
                out[-1] = p
            continue
        out.append(p)
    return np.asarray(out, dtype=np.int64)


@dataclass
class MatchReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    pairs: list = field(default_factory=list)  # (detected index, annotated index)

    @property
    def f1(self) -> float:
        denom = 2 * self.true_positives + self.false_positives + self.false_negatives
        return 1.0 if denom == 0 else 2 * self.true_positives / denom

    def __add__(self, other: "MatchReport") -> "MatchReport":
        return MatchReport(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )


def tolerance_samples(tolerance_ms: float, sampling_rate_hz: float) -> float:
    return tolerance_ms * sampling_rate_hz / 1000.0


def match_peaks(detected, annotated, sampling_rate_hz, tolerance_ms=30.0) -> MatchReport:
    """One-to-one greedy nearest-neighbour matching within ``tolerance_ms``.

    Closest pairs are taken first; equal distances go to the pair that
    starts earlier in time, then to the earlier annotated peak.
    """
    det = np.asarray(detected, dtype=np.int64)
    ann = np.asarray(annotated, dtype=np.int64)
    tol = tolerance_samples(tolerance_ms, sampling_rate_hz)
    cands = []
    for i, d in enumerate(det.tolist()):
        lo = np.searchsorted(ann, d - tol, side="left")
        hi = np.searchsorted(ann, d + tol, side="right")
        for j in range(lo, hi):
            a = int(ann[j])
            dist = abs(d - a)
            if dist <= tol:
                cands.append((dist, min(a, d), a, d, i, j))
    cands.sort()
    used_d, used_a = set(), set()
    pairs = []
    for *_, i, j in cands:
        if i in used_d or j in used_a:
            continue
        used_d.add(i)
        used_a.add(j)
        pairs.append((i, j))
    pairs.sort()
    tp = len(pairs)
    return MatchReport(tp, len(det) - tp, len(ann) - tp, pairs)


UNMATCHED = None


def align_labels(detected, annotated, labels, sampling_rate_hz, tolerance_ms=30.0) -> list:
    """Label each detection with its matched annotation's class, or ``UNMATCHED``."""
    report = match_peaks(detected, annotated, sampling_rate_hz, tolerance_ms)
    out = [UNMATCHED] * len(detected)
    for i, j in report.pairs:
        out[i] = labels[j]
    return out


def format_peaks(positions) -> str:
    """Whitespace-separated sample list, e.g. ``"77 370 663"``."""
    return " ".join(str(int(p)) for p in positions)


def parse_peaks(text: str) -> np.ndarray:
    text = text.strip().rstrip(".")
    if not text:
        return np.zeros(0, dtype=np.int64)
    values = np.array([int(t) for t in text.split()], dtype=np.int64)
    if np.any(np.diff(values) <= 0):
        raise ValidationError("peak positions must be strictly increasing")
    return values

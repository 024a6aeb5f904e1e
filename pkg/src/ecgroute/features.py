"""Per-beat rhythm and morphology features (23 values per beat).

Layout: ``rr(4) | norm_rr(4) | amp(1) | hos(10) | my_morph(4)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

WINDOW = 180
R_OFFSET = 90
WINDOW_RATE = 360.0
HOS_BLOCKS = 5
LOCAL_WINDOW = 10

RR_SLICE = slice(0, 4)
NORM_RR_SLICE = slice(4, 8)
AMP_SLICE = slice(8, 9)
HOS_SLICE = slice(9, 19)
MORPH_SLICE = slice(19, 23)
N_FEATURES = 23

FEATURE_NAMES = (
    ["rr_pre", "rr_next", "rr_local", "rr_global"]
    + ["nrr_pre", "nrr_next", "nrr_local", "nrr_global"]
    + ["amp"]
    + [f"skew_{i}" for i in range(1, 6)]
    + [f"kurt_{i}" for i in range(1, 6)]
    + ["morph_p", "morph_q", "morph_s", "morph_t"]
)
MINIMAL_MASK = tuple(range(8))
RICH_MASK = tuple(range(N_FEATURES))

# (start, stop, use max) per landmark, stop exclusive
LANDMARKS = ((0, 40, True), (75, 85, False), (95, 105, False), (150, 180, True))


def _round(x):
    # half-to-even, as numpy and Python round
    return np.round(np.asarray(x, dtype=float))


def rr_table(anchors, local_window: int = LOCAL_WINDOW) -> np.ndarray:
    """Unrounded ``(pre, next, local, global)`` for every anchor, shape ``(K, 4)``.

    ``pre`` of the first beat is its distance from the segment start and
    ``next`` of the last beat falls back to its own ``pre``. ``local`` is the
    mean of the last ``local_window`` pre-RR values including the current
    beat; ``global`` is the mean of all earlier pre-RR values (``local`` for
    the first beat).
    """
    a = np.asarray(anchors, dtype=float)
    if a.size == 0:
        raise ValidationError("rr features need at least one anchor")
    pre = np.diff(a, prepend=0.0)
    nxt = np.append(np.diff(a), pre[-1])
    csum = np.concatenate([[0.0], np.cumsum(pre)])
    k = np.arange(len(a))
    lo = np.maximum(0, k - local_window + 1)
    local = (csum[k + 1] - csum[lo]) / (k + 1 - lo)
    glob = np.where(k > 0, csum[k] / np.maximum(k, 1), local)
    return np.column_stack([pre, nxt, local, glob])


def rr_quadruple(anchors, k: int, local_window: int = LOCAL_WINDOW) -> tuple[int, int, int, int]:
    """RR quadruple of beat ``k`` in samples, means rounded to the nearest sample."""
    if len(anchors) == 0:
        raise ValidationError("rr features need at least one anchor")
    row = rr_table(anchors[: k + 2], local_window)[k]
    return tuple(int(v) for v in _round(row))


def rr_divisor(anchors) -> float:
    """Default normalisation divisor: mean pre-RR over the segment."""
    return float(np.mean(rr_table(anchors)[:, 0]))


def normalize_rr(rr, divisor: float) -> np.ndarray:
    if not divisor > 0:
        raise ValidationError(f"normalisation divisor must be positive, got {divisor}")
    return np.asarray(rr, dtype=float) / divisor


def r_amplitude(signal, anchor: int) -> float:
    return float(np.asarray(signal)[anchor])


def beat_windows(signal, anchors, sampling_rate_hz: float = WINDOW_RATE):
    """Fixed 180-sample windows centred on each anchor.

    Other sampling rates cover the same +-0.25 s and are linearly
    resampled. Positions outside the signal read as zero. Returns the
    ``(K, 180)`` windows and ``(K, 2)`` left/right padding flags.
    """
    x = np.asarray(signal, dtype=float)
    a = np.asarray(anchors, dtype=float)
    offsets = (np.arange(WINDOW) - R_OFFSET) * (sampling_rate_hz / WINDOW_RATE)
    pos = a[:, None] + offsets[None, :]
    n = len(x)
    if sampling_rate_hz == WINDOW_RATE:
        idx = pos.astype(np.int64)
        inside = (idx >= 0) & (idx < n)
        win = np.where(inside, x[np.clip(idx, 0, n - 1)], 0.0)
    else:
        win = np.interp(pos, np.arange(n), x, left=0.0, right=0.0)
        inside = (pos >= 0) & (pos <= n - 1)
        win = np.where(inside, win, 0.0)
    flags = np.column_stack([~inside[:, 0], ~inside[:, -1]]) if len(a) else np.zeros((0, 2), bool)
    return win, flags


def hos_features(window) -> np.ndarray:
    """Skewness of five 36-sample blocks followed by their (non-excess) kurtosis."""
    return hos_batch(np.asarray(window, dtype=float)[None, :])[0]


def hos_batch(windows) -> np.ndarray:
    w = np.asarray(windows, dtype=float)
    if w.shape[-1] != WINDOW:
        raise ValidationError(f"beat window must have {WINDOW} samples")
    blocks = w.reshape(w.shape[0], HOS_BLOCKS, WINDOW // HOS_BLOCKS)
    centred = blocks - blocks.mean(axis=2, keepdims=True)
    m2 = np.mean(centred**2, axis=2)
    m3 = np.mean(centred**3, axis=2)
    m4 = np.mean(centred**4, axis=2)
    const = np.ptp(blocks, axis=2) == 0
    safe = np.where(const, 1.0, m2)
    skew = np.where(const, 0.0, m3 / safe**1.5)
    kurt = np.where(const, 0.0, m4 / safe**2)
    return np.concatenate([skew, kurt], axis=1)


def my_morph(window, scaling: str = "minmax") -> np.ndarray:
    """Distances from the R sample to four landmark extrema.

    ``minmax`` rescales the five points (R and the four extrema) to the unit
    square on each axis before measuring; an axis with zero range
    contributes nothing. ``zscore`` measures time in window lengths and
    amplitude on the z-scored window. Ties go to the leftmost sample.
    """
    return morph_batch(np.asarray(window, dtype=float)[None, :], scaling)[0]


def _landmarks(w):
    idx = np.empty((w.shape[0], len(LANDMARKS)), dtype=np.int64)
    for j, (lo, hi, use_max) in enumerate(LANDMARKS):
        part = w[:, lo:hi]
        idx[:, j] = (np.argmax(part, axis=1) if use_max else np.argmin(part, axis=1)) + lo
    return idx


def morph_batch(windows, scaling: str = "minmax") -> np.ndarray:
    w = np.asarray(windows, dtype=float)
    if w.shape[-1] != WINDOW:
        raise ValidationError(f"beat window must have {WINDOW} samples")
    idx = _landmarks(w)
    rows = np.arange(w.shape[0])[:, None]
    if scaling == "zscore":
        mu = w.mean(axis=1, keepdims=True)
        sd = w.std(axis=1, keepdims=True)
        z = np.where(sd > 0, (w - mu) / np.where(sd > 0, sd, 1.0), 0.0)
        dt = (idx - R_OFFSET) / WINDOW
        dv = z[rows, idx] - z[:, [R_OFFSET]]
        return np.sqrt(dt**2 + dv**2)
    if scaling != "minmax":
        raise ValidationError(f"unknown my_morph scaling {scaling!r}")
    xs = np.hstack([idx, np.full((w.shape[0], 1), R_OFFSET)]).astype(float)
    ys = np.hstack([w[rows, idx], w[:, [R_OFFSET]]])

    def unit(v):
        lo = v.min(axis=1, keepdims=True)
        span = v.max(axis=1, keepdims=True) - lo
        return np.where(span > 0, (v - lo) / np.where(span > 0, span, 1.0), 0.0)

    xs, ys = unit(xs), unit(ys)
    return np.sqrt((xs[:, :4] - xs[:, 4:]) ** 2 + (ys[:, :4] - ys[:, 4:]) ** 2)


def assemble(rr, norm_rr, amp, hos, morph) -> np.ndarray:
    vec = np.concatenate([
        np.asarray(rr, float).ravel(),
        np.asarray(norm_rr, float).ravel(),
        np.atleast_1d(np.asarray(amp, float)),
        np.asarray(hos, float).ravel(),
        np.asarray(morph, float).ravel(),
    ])
    if vec.shape != (N_FEATURES,):
        raise ValidationError(f"feature vector has {vec.size} values, expected {N_FEATURES}")
    return vec


def split(vec) -> dict[str, np.ndarray]:
    v = np.asarray(vec, dtype=float)
    if v.shape[-1] != N_FEATURES:
        raise ValidationError(f"feature vector has {v.shape[-1]} values, expected {N_FEATURES}")
    return {
        "rr": v[..., RR_SLICE],
        "norm_rr": v[..., NORM_RR_SLICE],
        "amp": v[..., AMP_SLICE],
        "hos": v[..., HOS_SLICE],
        "my_morph": v[..., MORPH_SLICE],
    }


def timing_features(anchors, divisor: float | None = None, local_window: int = LOCAL_WINDOW) -> np.ndarray:
    """The eight timing columns (rr, norm_rr) for every anchor; no signal needed."""
    anchors = np.asarray(anchors, dtype=np.int64)
    if anchors.size == 0:
        return np.zeros((0, 8))
    raw = rr_table(anchors, local_window)
    if divisor is None:
        divisor = float(raw[:, 0].mean())
    return np.hstack([_round(raw), normalize_rr(raw, max(divisor, 1.0))])


def segment_features(
    signal,
    anchors,
    sampling_rate_hz: float = WINDOW_RATE,
    divisor: float | None = None,
    local_window: int = LOCAL_WINDOW,
    morph_scaling: str = "minmax",
) -> np.ndarray:
    """Feature matrix ``(K, 23)`` for all anchors of one segment.

    ``divisor`` defaults to the segment's mean pre-RR.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    if anchors.size == 0:
        return np.zeros((0, N_FEATURES))
    windows, _ = beat_windows(signal, anchors, sampling_rate_hz)
    x = np.asarray(signal, dtype=float)
    out = np.empty((len(anchors), N_FEATURES))
    out[:, :8] = timing_features(anchors, divisor, local_window)
    out[:, AMP_SLICE] = x[anchors][:, None]
    out[:, HOS_SLICE] = hos_batch(windows)
    out[:, MORPH_SLICE] = morph_batch(windows, morph_scaling)
    return out


def _fmt(v, digits):
    return repr(float(v)) if digits is None else f"{v:.{digits}f}"


def format_beat(anchor: int, vec, digits: int | None = None) -> str:
    """One transcript entry: ``[anchor:RR=..;norm_RR=..;amp=..;HOS=[..];myMorph=[..]]``.

    ``digits=None`` writes full precision so the line parses back exactly.
    """
    g = split(vec)
    rr = ",".join(str(int(v)) for v in g["rr"])
    nrr = ",".join(_fmt(v, digits) for v in g["norm_rr"])
    hos = ",".join(_fmt(v, digits) for v in g["hos"])
    morph = ",".join(_fmt(v, digits) for v in g["my_morph"])
    return f"[{int(anchor)}:RR={rr};norm_RR={nrr};amp={_fmt(g['amp'][0], digits)};HOS=[{hos}];myMorph=[{morph}]]"


def parse_beat(line: str) -> tuple[int, np.ndarray]:
    line = line.strip()
    if not (line.startswith("[") and line.endswith("]")):
        raise ValidationError(f"not a feature entry: {line!r}")
    anchor, _, body = line[1:-1].partition(":")
    fields = {}
    for part in body.split(";"):
        key, _, value = part.partition("=")
        fields[key] = [float(t) for t in value.strip("[]").split(",")]
    try:
        vec = assemble(fields["RR"], fields["norm_RR"], fields["amp"], fields["HOS"], fields["myMorph"])
    except KeyError as exc:
        raise ValidationError(f"feature entry lacks field {exc}") from exc
    return int(anchor), vec


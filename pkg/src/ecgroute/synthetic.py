"""Miniature ECG datasets with known beats, written in the native WFDB formats.

Beats are sums of Gaussian waves (P, Q, R, S, T). Supraventricular beats
arrive early with the normal QRS; ventricular beats arrive early with a
wide QRS and are followed by a compensatory pause; fusion beats blend the
two shapes. Every record comes with a ground-truth manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .ingest import Record, map_aami
from .wfdb_io import Header, SignalSpec, write_annotations, write_fmt212_record

ADC_GAIN = 200.0
ADC_ZERO = 1024

# (centre s, amplitude mV, width s) per wave
_WAVES = {
    "N": [(-0.20, 0.15, 0.025), (-0.03, -0.12, 0.008), (0.0, 1.20, 0.010), (0.03, -0.25, 0.008), (0.28, 0.30, 0.045)],
    "S": [(-0.16, -0.08, 0.020), (-0.03, -0.10, 0.008), (0.0, 1.10, 0.010), (0.03, -0.28, 0.008), (0.26, 0.25, 0.040)],
    "V": [(0.0, 1.50, 0.030), (0.07, -0.55, 0.030), (0.32, -0.45, 0.060)],
    "Q": [(-0.03, -0.30, 0.010), (0.0, 0.90, 0.014), (0.04, -0.30, 0.010), (0.30, 0.20, 0.050)],
}
_SYMBOL = {"N": "N", "S": "A", "V": "V", "F": "F", "Q": "Q"}


def beat_shape(cls: str, fs: float, half_width_s: float = 0.45) -> np.ndarray:
    """Template of one beat, R peak at the centre sample."""
    t = np.arange(-int(half_width_s * fs), int(half_width_s * fs) + 1) / fs

    def waves(spec):
        return sum(a * np.exp(-0.5 * ((t - c) / w) ** 2) for c, a, w in spec)

    if cls == "F":
        return 0.5 * waves(_WAVES["N"]) + 0.5 * waves(_WAVES["V"])
    return waves(_WAVES[cls])


@dataclass
class SyntheticConfig:
    records: list = field(default_factory=lambda: [f"s{i:02d}" for i in range(1, 13)])
    seconds: float = 120.0
    sampling_rate_hz: int = 360
    rate_bpm: tuple = (60.0, 90.0)  # per-record heart rate drawn from this range
    # per-record class probabilities are drawn up to these maxima
    class_rates: dict = field(default_factory=lambda: {"S": 0.10, "V": 0.10, "F": 0.04, "Q": 0.01})
    premature_s: float = 0.6  # pre-RR of a supraventricular beat, fraction of RR
    premature_v: float = 0.65
    premature_f: float = 0.8  # fusion beats come slightly early
    hrv: float = 0.01  # relative jitter of normal RR intervals
    snr_db: float | None = 30.0
    seed: int = 0


def beat_schedule(rr_samples: float, n_samples: int, classes_p: dict, cfg: SyntheticConfig, rng) -> list[tuple[int, str]]:
    """Beat positions and classes; a premature beat is always followed by a normal one."""
    out = []
    t = 0.5 * rr_samples
    prev = "N"
    names = list(classes_p)
    probs = np.array([classes_p[c] for c in names])
    while True:
        cls = "N"
        if prev == "N" and out:
            u = rng.random()
            edges = np.cumsum(probs)
            hit = np.flatnonzero(u < edges)
            if hit.size:
                cls = names[hit[0]]
        jitter = 1.0 + cfg.hrv * rng.standard_normal() if cfg.hrv else 1.0
        if not out:
            pos = t
        elif cls == "S":
            pos = out[-1][0] + cfg.premature_s * rr_samples
        elif cls == "V":
            pos = out[-1][0] + cfg.premature_v * rr_samples
        elif cls == "F":
            pos = out[-1][0] + cfg.premature_f * rr_samples
        elif prev == "V":
            # compensatory pause: two normal cycles from the beat before the V
            pos = out[-2][0] + 2 * rr_samples if len(out) > 1 else out[-1][0] + rr_samples
        else:
            pos = out[-1][0] + rr_samples * jitter
        p = int(round(pos))
        # keep the whole QRS inside the record
        if p >= n_samples - int(0.3 * cfg.sampling_rate_hz):
            break
        out.append((p, cls))
        prev = cls
    return out


def synthesize_record(name: str, cfg: SyntheticConfig, rng) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Return raw ADC channels ``(2, n)`` and ``(sample, symbol)`` annotations."""
    fs = cfg.sampling_rate_hz
    n = int(cfg.seconds * fs)
    bpm = rng.uniform(*cfg.rate_bpm)
    rr = 60.0 * fs / bpm
    probs = {c: float(rng.uniform(0.3, 1.0) * p) for c, p in cfg.class_rates.items()}
    beats = beat_schedule(rr, n, probs, cfg, rng)

    sig = np.zeros(n)
    shapes = {c: beat_shape(c, fs) for c in ("N", "S", "V", "F", "Q")}
    for pos, cls in beats:
        shape = shapes[cls]
        half = len(shape) // 2
        lo, hi = max(0, pos - half), min(n, pos + half + 1)
        sig[lo:hi] += shape[lo - (pos - half) : len(shape) - ((pos + half + 1) - hi)]
    sig += 0.05 * np.sin(2 * np.pi * 0.25 * np.arange(n) / fs + rng.uniform(0, 2 * np.pi))
    if cfg.snr_db is not None:
        power = np.mean(sig**2)
        sig += rng.standard_normal(n) * np.sqrt(power / 10 ** (cfg.snr_db / 10))
    second = -0.4 * sig + 0.02 * rng.standard_normal(n)
    raw = np.clip(np.round(np.vstack([sig, second]) * ADC_GAIN) + ADC_ZERO, -2048, 2047).astype(np.int64)
    anns = [(0, "+")] + [(p, _SYMBOL[c]) for p, c in beats]
    return raw, anns


def gen_synthetic(directory: str, cfg: SyntheticConfig | None = None) -> dict:
    """Write ``.hea``/``.dat``/``.atr`` files plus ``synthetic.json`` (the ground truth)."""
    cfg = cfg or SyntheticConfig()
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    truth = {}
    for name in cfg.records:
        raw, anns = synthesize_record(name, cfg, rng)
        header = Header(
            name, 2, float(cfg.sampling_rate_hz), raw.shape[1],
            [
                SignalSpec(f"{name}.dat", 212, ADC_GAIN, ADC_ZERO, "mV", 11, ADC_ZERO, int(raw[0, 0]), "MLII"),
                SignalSpec(f"{name}.dat", 212, ADC_GAIN, ADC_ZERO, "mV", 11, ADC_ZERO, int(raw[1, 0]), "V1"),
            ],
            comments=["synthetic record"],
        )
        write_fmt212_record(directory, header, raw)
        with open(os.path.join(directory, f"{name}.atr"), "wb") as fh:
            fh.write(write_annotations(anns))
        counts = {c: 0 for c in ("N", "S", "V", "F", "Q")}
        for _, sym in anns:
            c = map_aami(sym)
            if c:
                counts[c] += 1
        truth[name] = {"n_samples": int(raw.shape[1]), "annotations": anns, "counts": counts}
    half = len(cfg.records) // 2
    manifest = {
        "config": asdict(cfg),
        "records": truth,
        "ds1": list(cfg.records[:half]),
        "ds2": list(cfg.records[half:]),
    }
    with open(os.path.join(directory, "synthetic.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def synthetic_record(name: str = "syn", cfg: SyntheticConfig | None = None) -> Record:
    """In-memory record built like :func:`gen_synthetic` (no files)."""
    cfg = cfg or SyntheticConfig(records=[name])
    raw, anns = synthesize_record(name, cfg, np.random.default_rng(cfg.seed))
    return Record(
        subject_id=name,
        sampling_rate_hz=cfg.sampling_rate_hz,
        signals=(raw - ADC_ZERO) / ADC_GAIN,
        adc_gain=(ADC_GAIN, ADC_GAIN),
        adc_zero=(ADC_ZERO, ADC_ZERO),
        ann_samples=np.array([a[0] for a in anns]),
        ann_symbols=tuple(a[1] for a in anns),
        channel_names=("MLII", "V1"),
    )


def impulse_train(rate_bpm: float, seconds: float, fs: float, snr_db: float | None, rng, gain: float = 1.0, offset: float = 0.0):
    """QRS-like pulse train at a fixed rate with white noise; returns ``(signal, peaks)``."""
    n = int(seconds * fs)
    rr = 60.0 * fs / rate_bpm
    peaks = np.arange(0.5 * rr, n - 0.1 * fs, rr).round().astype(np.int64)
    shape = beat_shape("N", fs)
    half = len(shape) // 2
    sig = np.zeros(n)
    for p in peaks:
        lo, hi = max(0, p - half), min(n, p + half + 1)
        sig[lo:hi] += shape[lo - (p - half) : len(shape) - ((p + half + 1) - hi)]
    if snr_db is not None:
        sig += rng.standard_normal(n) * np.sqrt(np.mean(sig**2) / 10 ** (snr_db / 10))
    return gain * sig + offset, peaks

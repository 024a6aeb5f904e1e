"""Readers and writers for the WFDB files used by the MIT-BIH family.

Only signal format 212 and the MIT annotation format are supported.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

# Annotation code -> symbol, as in the WFDB library (ecgcodes.h / annot.c).
ANNOTATION_SYMBOLS = {
    1: "N", 2: "L", 3: "R", 4: "a", 5: "V", 6: "F", 7: "J", 8: "A", 9: "S",
    10: "E", 11: "j", 12: "/", 13: "Q", 14: "~", 16: "|", 18: "s", 19: "T",
    20: "*", 21: "D", 22: '"', 23: "=", 24: "p", 25: "B", 26: "^", 27: "t",
    28: "+", 29: "u", 30: "?", 31: "!", 32: "[", 33: "]", 34: "e", 35: "n",
    36: "@", 37: "x", 38: "f", 39: "(", 40: ")", 41: "r",
}
SYMBOL_CODES = {sym: code for code, sym in ANNOTATION_SYMBOLS.items()}

_SKIP, _NUM, _SUB, _CHN, _AUX = 59, 60, 61, 62, 63


def decode_fmt212(data: bytes, n_samples: int) -> np.ndarray:
    """Unpack ``n_samples`` signed 12-bit values from format-212 bytes.

    Every 3-byte group holds two samples. Samples of multi-channel records
    are interleaved, so the caller reshapes the flat result.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be nonnegative")
    n_groups = (n_samples + 1) // 2
    needed = n_groups * 3
    if n_samples % 2:
        # the second half of the final group is padding and may be absent
        needed -= 1
    if len(data) < needed:
        raise ParseError(
            f"format 212 stream truncated: need {needed} bytes for {n_samples} samples, "
            f"have {len(data)}",
            offset=len(data),
        )
    raw = np.frombuffer(bytes(data[:needed]) + b"\x00" * (n_groups * 3 - needed), dtype=np.uint8)
    groups = raw.reshape(n_groups, 3).astype(np.int32)
    first = groups[:, 0] | ((groups[:, 1] & 0x0F) << 8)
    second = groups[:, 2] | ((groups[:, 1] & 0xF0) << 4)
    out = np.empty(n_groups * 2, dtype=np.int32)
    out[0::2] = first
    out[1::2] = second
    out = out[:n_samples]
    out[out > 2047] -= 4096
    return out.astype(np.int16)


def encode_fmt212(samples) -> bytes:
    """Pack signed 12-bit integers into format-212 bytes (inverse of :func:`decode_fmt212`)."""
    values = np.asarray(samples, dtype=np.int64)
    if values.size and (values.min() < -2048 or values.max() > 2047):
        raise ValueError("format 212 holds values in [-2048, 2047]")
    if values.size % 2:
        values = np.append(values, 0)
    u = (values & 0xFFF).reshape(-1, 2)
    packed = np.empty((u.shape[0], 3), dtype=np.uint8)
    packed[:, 0] = u[:, 0] & 0xFF
    packed[:, 1] = ((u[:, 0] >> 8) & 0x0F) | ((u[:, 1] >> 4) & 0xF0)
    packed[:, 2] = u[:, 1] & 0xFF
    return packed.tobytes()


def parse_annotations(data: bytes) -> list[tuple[int, str]]:
    """Decode an MIT-format annotation stream into ``(sample, symbol)`` pairs.

    SKIP, NUM, SUB, CHN and AUX pseudo-annotations are consumed; so are
    NOTQRS entries (code 0 with a nonzero interval), which carry no symbol.
    """
    if len(data) % 2:
        raise ParseError("annotation stream has odd length", offset=len(data) - 1)
    words = np.frombuffer(bytes(data), dtype="<u2")
    out: list[tuple[int, str]] = []
    t = 0
    i = 0
    n = len(words)
    while i < n:
        word = int(words[i])
        code, value = word >> 10, word & 0x3FF
        offset = 2 * i
        if word == 0:
            return out
        if code == _SKIP:
            if i + 2 >= n:
                raise ParseError("SKIP annotation missing its 32-bit interval", offset=offset)
            hi, lo = int(words[i + 1]), int(words[i + 2])
            interval = (hi << 16) | lo
            if interval >= 1 << 31:
                interval -= 1 << 32
            t += interval
            i += 3
            continue
        if code in (_NUM, _SUB, _CHN):
            i += 1
            continue
        if code == _AUX:
            i += 1 + (value + 1) // 2
            if i > n:
                raise ParseError("AUX payload runs past end of stream", offset=offset)
            continue
        t += value
        if code == 0:
            i += 1
            continue
        symbol = ANNOTATION_SYMBOLS.get(code)
        if symbol is None:
            raise ParseError(f"unknown annotation code {code}", offset=offset)
        out.append((t, symbol))
        i += 1
    raise ParseError("annotation stream is not terminated by a zero word", offset=len(data))


def write_annotations(annotations) -> bytes:
    """Encode ``(sample, symbol)`` pairs in MIT format, with SKIPs for long gaps."""
    words: list[int] = []
    t = 0
    for sample, symbol in annotations:
        delta = int(sample) - t
        if delta < 0:
            raise ValueError("annotations must be sorted by sample")
        code = SYMBOL_CODES[symbol]
        if delta > 0x3FF:
            words += [_SKIP << 10, (delta >> 16) & 0xFFFF, delta & 0xFFFF]
            delta = 0
        words.append((code << 10) | delta)
        t = int(sample)
    words.append(0)
    return np.asarray(words, dtype="<u2").tobytes()


@dataclass
class SignalSpec:
    filename: str
    fmt: int
    gain: float
    baseline: int
    units: str
    adc_resolution: int
    adc_zero: int
    initial_value: int | None = None
    description: str = ""


@dataclass
class Header:
    record_name: str
    n_signals: int
    sampling_rate: float
    n_samples: int
    signals: list[SignalSpec] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)


_GAIN_RE = re.compile(r"^(?P<gain>[-+0-9.eE]+)(\((?P<baseline>-?\d+)\))?(/(?P<units>\S+))?$")


def parse_header(text: str) -> Header:
    """Parse a single-segment WFDB header (``.hea``)."""
    lines = []
    comments = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        lines.append(line)
    if not lines:
        raise ParseError("empty header")
    rec = lines[0].split()
    if len(rec) < 2:
        raise ParseError(f"malformed record line: {lines[0]!r}")
    name = rec[0]
    if "/" in name:
        raise ParseError("multi-segment records are not supported")
    n_signals = int(rec[1])
    fs = float(rec[2].split("/")[0]) if len(rec) > 2 else 250.0
    n_samples = int(rec[3]) if len(rec) > 3 else 0
    header = Header(name, n_signals, fs, n_samples, comments=comments)
    if len(lines) - 1 < n_signals:
        raise ParseError(f"header declares {n_signals} signals but lists {len(lines) - 1}")
    for line in lines[1 : 1 + n_signals]:
        parts = line.split()
        if len(parts) < 2:
            raise ParseError(f"malformed signal line: {line!r}")
        fmt_field = parts[1]
        fmt = int(re.match(r"\d+", fmt_field).group(0))
        gain, baseline, units = 200.0, None, "mV"
        if len(parts) > 2:
            m = _GAIN_RE.match(parts[2])
            if not m:
                raise ParseError(f"malformed gain field: {parts[2]!r}")
            gain = float(m.group("gain")) or 200.0
            if m.group("baseline") is not None:
                baseline = int(m.group("baseline"))
            units = m.group("units") or "mV"
        adc_res = int(parts[3]) if len(parts) > 3 else 12
        adc_zero = int(parts[4]) if len(parts) > 4 else 0
        init = int(parts[5]) if len(parts) > 5 else None
        desc = " ".join(parts[8:]) if len(parts) > 8 else ""
        header.signals.append(
            SignalSpec(
                filename=parts[0],
                fmt=fmt,
                gain=gain,
                baseline=adc_zero if baseline is None else baseline,
                units=units,
                adc_resolution=adc_res,
                adc_zero=adc_zero,
                initial_value=init,
                description=desc,
            )
        )
    return header


def format_header(header: Header) -> str:
    fs = f"{header.sampling_rate:g}"
    lines = [f"{header.record_name} {header.n_signals} {fs} {header.n_samples}"]
    for s in header.signals:
        init = 0 if s.initial_value is None else s.initial_value
        lines.append(
            f"{s.filename} {s.fmt} {s.gain:g}/{s.units} {s.adc_resolution} {s.adc_zero} {init} 0 0 {s.description}".rstrip()
        )
    lines += [f"# {c}" for c in header.comments]
    return "\n".join(lines) + "\n"


def read_signals(header: Header, directory: str) -> np.ndarray:
    """Read raw ADC values, returning an ``(n_signals, n_samples)`` int array."""
    out = np.empty((header.n_signals, header.n_samples), dtype=np.int16)
    # signals sharing a file are interleaved in declaration order
    groups: dict[str, list[int]] = {}
    for idx, spec in enumerate(header.signals):
        if spec.fmt != 212:
            raise ParseError(f"signal format {spec.fmt} is not supported (only 212)")
        groups.setdefault(spec.filename, []).append(idx)
    for filename, idxs in groups.items():
        path = os.path.join(directory, filename)
        with open(path, "rb") as fh:
            data = fh.read()
        total = header.n_samples * len(idxs)
        flat = decode_fmt212(data, total)
        out[idxs] = flat.reshape(header.n_samples, len(idxs)).T
    return out


def write_fmt212_record(directory: str, header: Header, raw: np.ndarray) -> None:
    """Write header and interleaved format-212 signal file for ``raw``."""
    raw = np.asarray(raw)
    filename = header.signals[0].filename
    with open(os.path.join(directory, filename), "wb") as fh:
        fh.write(encode_fmt212(raw.T.reshape(-1)))
    with open(os.path.join(directory, header.record_name + ".hea"), "w") as fh:
        fh.write(format_header(header))


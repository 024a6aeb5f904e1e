"""Run configuration: a JSON document merged over defaults, with field-level checks."""

from __future__ import annotations

import copy
import hashlib
import json
import os

from .augment import DEFAULT_OFFSETS, DEFAULT_TARGETS
from .errors import ValidationError
from .fetch import MITDB_URL, default_cache_dir

DATASETS = ("mitdb", "synthetic")

DEFAULTS = {
    "dataset": "synthetic",
    "data_dir": None,  # defaults to <cache>/<dataset>
    "records": None,  # defaults to ds1 + ds2
    "base_url": MITDB_URL,
    "output_dir": "runs/default",
    "seed": 0,
    "channel": 0,
    "segment_seconds": 10.0,
    "split": {"ds1": None, "ds2": None, "ratio": [9, 1]},
    "augment": {"enabled": True, "targets": dict(DEFAULT_TARGETS), "offsets": list(DEFAULT_OFFSETS)},
    "detector": {"refractory_ms": 200.0, "refine_ms": 40.0, "tolerance_ms": 30.0},
    "features": {"anchors": "annotated", "divisor": "segment", "local_window": 10, "morph_scaling": "minmax"},
    "model": {"epochs": 2000, "l2": 1e-4, "learning_rate": None, "class_weighting": "balanced"},
    "routing": {"mode": "mean", "tau": None},
    "stress": {"perturbations": ["mask", "mislocalize"]},
    "synthetic": {"records": 12, "seconds": 120.0, "snr_db": 30.0},
}


def _merge(base: dict, over: dict, path: str, errors: list) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            errors.append(f"{where}: unknown field")
        elif isinstance(base[key], dict) and key not in ("targets",):
            if not isinstance(value, dict):
                errors.append(f"{where}: expected an object")
            else:
                out[key] = _merge(base[key], value, where + ".", errors)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(cfg: dict) -> list[str]:
    """Every problem found, as ``field: message`` strings."""
    e = []
    if cfg["dataset"] not in DATASETS:
        e.append(f"dataset: must be one of {DATASETS}")
    if not _is_int(cfg["seed"]):
        e.append("seed: must be an integer")
    if not _is_int(cfg["channel"]) or cfg["channel"] < 0:
        e.append("channel: must be a nonnegative integer")
    if not _is_num(cfg["segment_seconds"]) or cfg["segment_seconds"] <= 0:
        e.append("segment_seconds: must be positive")
    for key in ("records",):
        v = cfg[key]
        if v is not None and (not isinstance(v, list) or not all(isinstance(s, str) for s in v)):
            e.append(f"{key}: must be a list of record names")
    for key in ("ds1", "ds2"):
        v = cfg["split"][key]
        if v is not None and (not isinstance(v, list) or not v or not all(isinstance(s, str) for s in v)):
            e.append(f"split.{key}: must be a nonempty list of record names")
    r = cfg["split"]["ratio"]
    if not (isinstance(r, list) and len(r) == 2 and all(_is_num(x) and x > 0 for x in r)):
        e.append("split.ratio: must be two positive numbers")
    aug = cfg["augment"]
    if not isinstance(aug["enabled"], bool):
        e.append("augment.enabled: must be true or false")
    if not isinstance(aug["targets"], dict):
        e.append("augment.targets: must be an object")
    else:
        for c, v in aug["targets"].items():
            if c not in ("S", "V", "F"):
                e.append(f"augment.targets.{c}: only S, V and F take targets")
            elif not _is_num(v) or not 0 < v <= 1:
                e.append(f"augment.targets.{c}: must lie in (0, 1]")
    offs = aug["offsets"]
    if not isinstance(offs, list) or not offs or not all(_is_num(f) and 0 < f < 1 for f in offs):
        e.append("augment.offsets: must be a nonempty list of fractions in (0, 1)")
    for key, v in cfg["detector"].items():
        if not _is_num(v) or v <= 0:
            e.append(f"detector.{key}: must be positive")
    f = cfg["features"]
    if f["anchors"] not in ("annotated", "detected"):
        e.append("features.anchors: must be 'annotated' or 'detected'")
    if f["divisor"] not in ("segment", "record"):
        e.append("features.divisor: must be 'segment' or 'record'")
    if f["morph_scaling"] not in ("minmax", "zscore"):
        e.append("features.morph_scaling: must be 'minmax' or 'zscore'")
    if not _is_int(f["local_window"]) or f["local_window"] < 1:
        e.append("features.local_window: must be a positive integer")
    m = cfg["model"]
    if not _is_int(m["epochs"]) or m["epochs"] < 1:
        e.append("model.epochs: must be a positive integer")
    if not _is_num(m["l2"]) or m["l2"] < 0:
        e.append("model.l2: must be nonnegative")
    if m["learning_rate"] is not None and (not _is_num(m["learning_rate"]) or m["learning_rate"] <= 0):
        e.append("model.learning_rate: must be positive or null")
    if m["class_weighting"] not in ("balanced", "none"):
        e.append("model.class_weighting: must be 'balanced' or 'none'")
    if cfg["routing"]["mode"] not in ("mean", "min"):
        e.append("routing.mode: must be 'mean' or 'min'")
    tau = cfg["routing"]["tau"]
    if tau is not None and (not _is_num(tau) or tau < 0):
        e.append("routing.tau: must be a nonnegative number or null")
    p = cfg["stress"]["perturbations"]
    if not isinstance(p, list) or not set(p) <= {"mask", "mislocalize"}:
        e.append("stress.perturbations: allowed values are 'mask' and 'mislocalize'")
    s = cfg["synthetic"]
    if not _is_int(s["records"]) or s["records"] < 4:
        e.append("synthetic.records: must be an integer >= 4")
    if not _is_num(s["seconds"]) or s["seconds"] < 2 * cfg["segment_seconds"]:
        e.append("synthetic.seconds: must cover at least two segments")
    if s["snr_db"] is not None and not _is_num(s["snr_db"]):
        e.append("synthetic.snr_db: must be a number or null")
    return e


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the file at ``path``, then ``overrides`` (command-line flags).

    Relative paths in the file resolve against the file's directory.
    """
    errors: list[str] = []
    cfg = copy.deepcopy(DEFAULTS)
    base_dir = os.getcwd()
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ValidationError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg = _merge(cfg, doc, "", errors)
        base_dir = os.path.dirname(os.path.abspath(path))
    if overrides:
        cfg = _merge(cfg, overrides, "", errors)
    # unknown fields are dropped by the merge, so values can still be checked
    if not any(m.endswith("expected an object") for m in errors):
        errors += validate(cfg)
    if errors:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(errors))
    if cfg["data_dir"] is None:
        cfg["data_dir"] = os.path.join(default_cache_dir(), cfg["dataset"])
    for key in ("data_dir", "output_dir"):
        cfg[key] = os.path.normpath(os.path.join(base_dir, cfg[key]))
    return cfg


def digest(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()

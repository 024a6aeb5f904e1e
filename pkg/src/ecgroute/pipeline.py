"""Stage runner: each stage reads upstream artifacts and writes its own.

A stage writes its payload files and then ``<stage>.json``, a manifest that
records the digest of the config sections it depends on, the digests of
its upstream manifests and of every file it wrote. Downstream stages refuse
stale or missing inputs and name the stage to rerun.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import augment as aug
from .config import digest
from .errors import DataError, ValidationError
from .evalx import (
    compute_metrics,
    confidence_profile,
    confusion_csv,
    metrics_csv,
    run_stress,
    stress_table_csv,
)
from .features import N_FEATURES, segment_features
from .fetch import fetch_dataset, require_ok, sha256_file
from .ingest import (
    CLASSES,
    DS1,
    DS2,
    Record,
    Segment,
    build_split,
    class_counts,
    cut_segments,
    load_records,
)
from .model import ClassifierParams, predict, predict_labels, train
from .peaks import UNMATCHED, align_labels, detect_rpeaks, format_peaks, match_peaks, parse_peaks
from .routing import RoutedClassifier, SweepItem, ThresholdArtifact, route, routing_report, segment_confidence, sweep_threshold

log = logging.getLogger(__name__)

STAGES = ("fetch", "ingest", "augment", "detect", "features", "train", "sweep", "evaluate", "stress", "report")


class StageError(DataError):
    """An upstream artifact is missing, stale or tampered with."""


# --- artifact plumbing ------------------------------------------------------


def atomic_write(path: str, data: bytes | str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _npy_bytes(arr) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


class Run:
    """One configured run rooted at ``cfg['output_dir']``."""

    def __init__(self, cfg: dict, jobs: int = 1, offline: bool = False):
        self.cfg = cfg
        self.out = cfg["output_dir"]
        self.jobs = max(1, int(jobs))
        self.offline = offline
        self._records: dict[str, Record] = {}

    # paths and manifests
    def path(self, *parts) -> str:
        return os.path.join(self.out, *parts)

    def manifest_path(self, stage: str) -> str:
        return self.path(f"{stage}.json")

    def manifest(self, stage: str, needed_by: str | None = None) -> dict:
        p = self.manifest_path(stage)
        if not os.path.exists(p):
            who = f" needed by '{needed_by}'" if needed_by else ""
            raise StageError(f"artifact of stage '{stage}'{who} not found in {self.out}; run '{stage}' first")
        with open(p) as fh:
            return json.load(fh)

    def config_key(self, stage: str) -> dict:
        c = self.cfg
        if stage == "fetch":
            return {"dataset": c["dataset"], "records": c["records"], "base_url": c["base_url"]}
        if stage == "ingest":
            return {k: c[k] for k in ("dataset", "records", "split", "segment_seconds", "seed", "channel")}
        if stage == "augment":
            return {"augment": c["augment"]}
        if stage == "detect":
            return {"detector": c["detector"], "channel": c["channel"]}
        if stage == "features":
            return {"features": c["features"], "channel": c["channel"]}
        if stage == "train":
            return {"model": c["model"], "seed": c["seed"]}
        if stage == "sweep":
            return {"mode": c["routing"]["mode"]}
        if stage == "evaluate":
            return {"mode": c["routing"]["mode"], "tau": c["routing"]["tau"]}
        if stage == "stress":
            return {
                "mode": c["routing"]["mode"], "tau": c["routing"]["tau"], "stress": c["stress"],
                "seed": c["seed"], "features": c["features"],
            }
        return {}

    def upstream_of(self, stage: str) -> list[str]:
        anchors_detected = self.cfg["features"]["anchors"] == "detected"
        return {
            "fetch": [],
            "ingest": [],
            "augment": ["ingest"],
            "detect": ["ingest"],
            "features": ["ingest", "augment"] + (["detect"] if anchors_detected else []),
            "train": ["features"],
            "sweep": ["features", "train"],
            "evaluate": ["features", "train", "sweep"],
            "stress": ["ingest", "train", "sweep"] + (["detect"] if anchors_detected else []),
            "report": ["sweep", "evaluate", "stress"],
        }[stage]

    def check_upstream(self, stage: str) -> dict:
        """Verify every upstream manifest is current; returns their digests."""
        out = {}
        for up in self.upstream_of(stage):
            m = self.manifest(up, stage)
            if m["config_hash"] != digest(self.config_key(up)):
                raise StageError(f"artifact of stage '{up}' was built with a different configuration; rerun '{up}'")
            for name, sha in m["files"].items():
                p = self.path(name)
                if not os.path.exists(p) or sha256_file(p) != sha:
                    raise StageError(f"file {name} of stage '{up}' is missing or modified; rerun '{up}'")
            for upup, sha in m["upstream"].items():
                if sha256_file(self.manifest_path(upup)) != sha:
                    raise StageError(f"stage '{up}' is older than its input '{upup}'; rerun '{up}'")
            out[up] = sha256_file(self.manifest_path(up))
        return out

    def commit(self, stage: str, files: dict, payload: dict, upstream: dict, inputs: dict | None = None) -> dict:
        hashes = {}
        for name, data in sorted(files.items()):
            atomic_write(self.path(name), data)
            hashes[name] = sha256_file(self.path(name))
        manifest = {
            "stage": stage,
            "config_hash": digest(self.config_key(stage)),
            "upstream": upstream,
            "files": hashes,
            "payload": payload,
        }
        if inputs is not None:
            manifest["inputs"] = inputs
        atomic_write(self.manifest_path(stage), _dumps(manifest))
        return manifest

    # data access
    def split_subjects(self) -> tuple[list, list]:
        ds1, ds2 = self.cfg["split"]["ds1"], self.cfg["split"]["ds2"]
        if ds1 is None or ds2 is None:
            if self.cfg["dataset"] == "mitdb":
                ds1 = ds1 or list(DS1)
                ds2 = ds2 or list(DS2)
            else:
                meta = os.path.join(self.cfg["data_dir"], "synthetic.json")
                if not os.path.exists(meta):
                    raise DataError(f"no synthetic dataset in {self.cfg['data_dir']}; run 'gen-synthetic' first")
                with open(meta) as fh:
                    doc = json.load(fh)
                ds1 = ds1 or doc["ds1"]
                ds2 = ds2 or doc["ds2"]
        return list(ds1), list(ds2)

    def record_names(self) -> list[str]:
        if self.cfg["records"] is not None:
            return list(self.cfg["records"])
        ds1, ds2 = self.split_subjects()
        return sorted(set(ds1) | set(ds2))

    def records(self, names) -> list[Record]:
        missing = [n for n in names if n not in self._records]
        if missing:
            if not os.path.isdir(self.cfg["data_dir"]):
                hint = "fetch" if self.cfg["dataset"] == "mitdb" else "gen-synthetic"
                raise DataError(f"data directory {self.cfg['data_dir']} does not exist; run '{hint}' first")
            for rec in load_records(self.cfg["data_dir"], missing, self.jobs):
                self._records[rec.subject_id] = rec
        return [self._records[n] for n in names]

    def map_segments(self, fn, items):
        if self.jobs == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fn, items))


# --- stages -----------------------------------------------------------------


def stage_fetch(run: Run) -> dict:
    if run.cfg["dataset"] != "mitdb":
        raise ValidationError("only the mitdb dataset is downloaded; synthetic data comes from 'gen-synthetic'")
    results = fetch_dataset(run.cfg["base_url"], run.record_names(), run.cfg["data_dir"], offline=run.offline)
    require_ok(results)
    status = {r.filename: r.status for r in results}
    return run.commit("fetch", {}, {"files": status, "directory": run.cfg["data_dir"]}, {})


def stage_ingest(run: Run) -> dict:
    ds1, ds2 = run.split_subjects()
    names = run.record_names()
    unknown = sorted(set(ds1 + ds2) - set(names))
    if unknown:
        raise ValidationError(f"split subjects not among the configured records: {unknown}")
    records = run.records(names)
    split = build_split(ds1, ds2, tuple(run.cfg["split"]["ratio"]), run.cfg["seed"])
    inputs = {}
    for n in names:
        for ext in ("hea", "dat", "atr"):
            p = os.path.join(run.cfg["data_dir"], f"{n}.{ext}")
            inputs[f"{n}.{ext}"] = sha256_file(p)
    lines = []
    per_record = {}
    for rec in records:
        if run.cfg["channel"] >= rec.signals.shape[0]:
            raise ValidationError(f"channel {run.cfg['channel']} not present in record {rec.subject_id}")
        segs = cut_segments(rec, run.cfg["segment_seconds"])
        lines.append(aug.write_jsonl(segs))
        per_record[rec.subject_id] = class_counts([rec])
    totals = class_counts(records)
    payload = {
        "records": len(records),
        "beats": sum(totals.values()),
        "class_counts": totals,
        "per_record": per_record,
    }
    return run.commit(
        "ingest",
        {"segments.jsonl": "".join(lines), "split.json": split.to_json() + "\n"},
        payload,
        run.check_upstream("ingest"),
        inputs,
    )


def _load_split(run: Run):
    from .ingest import SplitManifest

    with open(run.path("split.json")) as fh:
        return SplitManifest.from_json(fh.read())


def _load_segments(run: Run, name: str) -> list[Segment]:
    with open(run.path(name)) as fh:
        return aug.read_jsonl(fh.read())


def stage_augment(run: Run) -> dict:
    upstream = run.check_upstream("augment")
    split = _load_split(run)
    d1 = run.records(list(split.d1_subjects))
    a = run.cfg["augment"]
    if a["enabled"]:
        segs, plan = aug.training_segments(d1, a["targets"], a["offsets"], run.cfg["segment_seconds"], split)
        plan_json = plan.to_json()
    else:
        segs = [s for r in d1 for s in cut_segments(r, run.cfg["segment_seconds"])]
        plan_json = "{}"
    added = [s for s in segs if s.origin == "augmented"]
    target_counts = {c: 0 for c in CLASSES}
    for s in added:
        k = s.anchors.index(s.target_anchor) if s.target_anchor in s.anchors else None
        if k is not None:
            target_counts[s.labels[k]] += 1
    payload = {"base_segments": len(segs) - len(added), "augmented_segments": len(added), "augmented_targets": target_counts}
    return run.commit("augment", {"train_segments.jsonl": aug.write_jsonl(segs), "augment_plan.json": plan_json + "\n"}, payload, upstream)


def stage_detect(run: Run) -> dict:
    upstream = run.check_upstream("detect")
    d = run.cfg["detector"]
    names = run.record_names()
    records = run.records(names)
    ch = run.cfg["channel"]

    def one(rec):
        peaks = detect_rpeaks(rec.signals[ch], rec.sampling_rate_hz, d["refractory_ms"], d["refine_ms"])
        return peaks, match_peaks(peaks, rec.qrs_samples(), rec.sampling_rate_hz, d["tolerance_ms"])

    results = run.map_segments(one, records)
    files = {}
    per = {}
    total = None
    for rec, (peaks, rep) in zip(records, results):
        files[f"peaks/{rec.subject_id}.txt"] = format_peaks(peaks) + "\n"
        per[rec.subject_id] = {"tp": rep.true_positives, "fp": rep.false_positives, "fn": rep.false_negatives, "f1": rep.f1}
        total = rep if total is None else total + rep
    payload = {"per_record": per, "f1": total.f1 if total else 1.0}
    return run.commit("detect", files, payload, upstream)


def _segment_rows(run: Run, seg: Segment, rec: Record, detected, divisor):
    """Anchors, labels and feature rows of one segment under the configured anchor source."""
    fcfg = run.cfg["features"]
    sig = seg.signal(rec, run.cfg["channel"])
    if detected is None:
        anchors, labels = seg.anchors, seg.labels
    else:
        lo = np.searchsorted(detected, seg.start_sample)
        hi = np.searchsorted(detected, seg.start_sample + seg.length_samples)
        anchors = tuple((detected[lo:hi] - seg.start_sample).tolist())
        labels = tuple(align_labels(anchors, seg.anchors, seg.labels, rec.sampling_rate_hz, run.cfg["detector"]["tolerance_ms"]))
    rows = segment_features(sig, anchors, rec.sampling_rate_hz, divisor, fcfg["local_window"], fcfg["morph_scaling"])
    return anchors, labels, rows


def _record_divisor(run: Run, rec: Record, detected) -> float | None:
    if run.cfg["features"]["divisor"] != "record":
        return None
    pos = detected if detected is not None else rec.beats()[0]
    return float(np.mean(np.diff(pos))) if len(pos) > 1 else None


def _detected(run: Run, name: str):
    if run.cfg["features"]["anchors"] != "detected":
        return None
    with open(run.path("peaks", f"{name}.txt")) as fh:
        return parse_peaks(fh.read())


def stage_features(run: Run) -> dict:
    upstream = run.check_upstream("features")
    split = _load_split(run)
    base = _load_segments(run, "segments.jsonl")
    groups = {
        "train": _load_segments(run, "train_segments.jsonl"),
        "d2": [s for s in base if s.record_ref in split.d2_subjects],
        "ds1": [s for s in base if s.record_ref in split.ds1_subjects],
        "ds2": [s for s in base if s.record_ref in split.ds2_subjects],
    }
    names = sorted({s.record_ref for g in groups.values() for s in g})
    recs = {r.subject_id: r for r in run.records(names)}
    detected = {n: _detected(run, n) for n in names}
    divisors = {n: _record_divisor(run, recs[n], detected[n]) for n in names}

    files = {}
    payload = {}
    for gname, segs in groups.items():
        out = run.map_segments(
            lambda s: _segment_rows(run, s, recs[s.record_ref], detected[s.record_ref], divisors[s.record_ref]), segs
        )
        index = []
        blocks = []
        row = 0
        for seg, (anchors, labels, rows) in zip(segs, out):
            index.append(
                {
                    "id": f"{seg.record_ref}:{seg.start_sample}",
                    "record": seg.record_ref,
                    "origin": seg.origin,
                    "anchors": list(anchors),
                    "labels": list(labels),
                    "rows": [row, row + len(anchors)],
                }
            )
            blocks.append(rows)
            row += len(anchors)
        mat = np.vstack(blocks) if blocks else np.zeros((0, N_FEATURES))
        files[f"features/{gname}.npy"] = _npy_bytes(mat)
        files[f"features/{gname}.json"] = _dumps(index)
        payload[gname] = {"segments": len(segs), "beats": int(mat.shape[0])}
    return run.commit("features", files, payload, upstream)


class FeatureSet:
    def __init__(self, run: Run, group: str):
        self.rows = np.load(run.path("features", f"{group}.npy"), allow_pickle=False)
        with open(run.path("features", f"{group}.json")) as fh:
            self.index = json.load(fh)

    def labelled(self):
        """Rows and labels of scored beats (unmatched detections excluded)."""
        keep = []
        labels = []
        for seg in self.index:
            for k, lab in enumerate(seg["labels"]):
                if lab is not UNMATCHED:
                    keep.append(seg["rows"][0] + k)
                    labels.append(lab)
        return self.rows[keep], labels

    def segments(self):
        for seg in self.index:
            lo, hi = seg["rows"]
            if hi > lo:
                yield seg, self.rows[lo:hi]


def stage_train(run: Run) -> dict:
    upstream = run.check_upstream("train")
    m = run.cfg["model"]
    kw = dict(
        class_weighting=m["class_weighting"], epochs=m["epochs"], learning_rate=m["learning_rate"], l2=m["l2"], seed=run.cfg["seed"]
    )
    x, y = FeatureSet(run, "train").labelled()
    minimal = train(x, y, "minimal", **kw)
    rich = train(x, y, "rich", **kw)
    xo, yo = FeatureSet(run, "ds1").labelled()
    oracle = train(xo, yo, "rich", **kw)
    payload = {
        "train_beats": len(y),
        "oracle_beats": len(yo),
        "final_loss": {"minimal": minimal.loss_history[-1], "rich": rich.loss_history[-1], "oracle": oracle.loss_history[-1]},
    }
    files = {
        "models/minimal.json": minimal.to_json() + "\n",
        "models/rich.json": rich.to_json() + "\n",
        "models/oracle.json": oracle.to_json() + "\n",
    }
    return run.commit("train", files, payload, upstream)


def _models(run: Run):
    out = []
    for name in ("minimal", "rich", "oracle"):
        with open(run.path("models", f"{name}.json")) as fh:
            out.append(ClassifierParams.from_json(fh.read()))
    return out


def _branch_outputs(minimal, rich, seg, rows, mode):
    post = np.atleast_2d(predict(minimal, rows))
    conf = segment_confidence(post, mode)
    min_lab = [CLASSES[i] for i in post.argmax(axis=1)]
    rich_lab = predict_labels(rich, rows)
    scored = [k for k, lab in enumerate(seg["labels"]) if lab is not UNMATCHED]
    return post, conf, min_lab, rich_lab, scored


def stage_sweep(run: Run) -> dict:
    upstream = run.check_upstream("sweep")
    minimal, rich, _ = _models(run)
    mode = run.cfg["routing"]["mode"]
    split = _load_split(run)
    items = []
    for seg, rows in FeatureSet(run, "d2").segments():
        _, conf, ml, rl, scored = _branch_outputs(minimal, rich, seg, rows, mode)
        if not scored:
            continue
        items.append(
            SweepItem(
                seg["record"], conf.aggregate,
                [ml[k] for k in scored], [rl[k] for k in scored], [seg["labels"][k] for k in scored],
            )
        )
    if not items:
        raise DataError("route-induction split has no scored beats")
    result = sweep_threshold(items, allowed_subjects=split.d2_subjects)
    art = ThresholdArtifact(run.cfg["dataset"], mode, result.tau, sorted(split.d2_subjects), result.micro_f1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "micro_f1", "rich_segments"])
    for tau, f1, n_rich in result.candidates:
        w.writerow([repr(tau), repr(f1), n_rich])
    by_tau = {t: f for t, f, _ in result.candidates}
    payload = {
        "tau": result.tau,
        "micro_f1": result.micro_f1,
        "rich_segments": result.n_rich,
        "segments": len(items),
        "pure_minimal_micro_f1": by_tau[min(by_tau)],
        "pure_rich_micro_f1": by_tau[max(by_tau)],
    }
    return run.commit("sweep", {"threshold.json": art.to_json() + "\n", "sweep.csv": buf.getvalue()}, payload, upstream)


def _threshold(run: Run) -> ThresholdArtifact:
    with open(run.path("threshold.json")) as fh:
        return ThresholdArtifact.from_json(fh.read())


def _tau(run: Run) -> float:
    override = run.cfg["routing"]["tau"]
    return float(override) if override is not None else _threshold(run).tau


def stage_evaluate(run: Run) -> dict:
    upstream = run.check_upstream("evaluate")
    minimal, rich, oracle = _models(run)
    mode = run.cfg["routing"]["mode"]
    tau = _tau(run)
    routed = []
    flat = {"truth": [], "routed": [], "minimal": [], "rich": [], "oracle": []}
    prof = {"conf": [], "min_ok": [], "rich_ok": [], "n": []}
    for seg, rows in FeatureSet(run, "ds2").segments():
        post, conf, ml, rl, scored = _branch_outputs(minimal, rich, seg, rows, mode)
        r = route(seg["id"], post, tau, lambda: rl, mode, seg["anchors"], seg["labels"])
        if not scored:
            continue
        ol = predict_labels(oracle, rows)
        truth = [seg["labels"][k] for k in scored]
        r.anchors = tuple(seg["anchors"][k] for k in scored)
        r.labels = tuple(r.labels[k] for k in scored)
        r.truth = tuple(truth)
        routed.append(r)
        flat["truth"] += truth
        flat["routed"] += list(r.labels)
        flat["minimal"] += [ml[k] for k in scored]
        flat["rich"] += [rl[k] for k in scored]
        flat["oracle"] += [ol[k] for k in scored]
        prof["conf"].append(conf.aggregate)
        prof["min_ok"].append(sum(ml[k] == t for k, t in zip(scored, truth)))
        prof["rich_ok"].append(sum(rl[k] == t for k, t in zip(scored, truth)))
        prof["n"].append(len(scored))
    if not flat["truth"]:
        raise DataError("test split has no scored beats")
    metrics = {name: compute_metrics(flat[name], flat["truth"]) for name in ("routed", "minimal", "rich", "oracle")}
    files = {f"eval/confusion_{n}.csv": confusion_csv(m) for n, m in metrics.items()}
    files.update({f"eval/metrics_{n}.csv": metrics_csv(m) for n, m in metrics.items()})
    files["eval/predictions.jsonl"] = "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in routed)
    bins = confidence_profile(prof["conf"], prof["min_ok"], prof["rich_ok"], prof["n"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lo", "hi", "segments", "minimal_micro_f1", "rich_micro_f1"])
    for b in bins:
        w.writerow([repr(b.lo), repr(b.hi), b.count, "" if b.minimal_f1 is None else repr(b.minimal_f1), "" if b.rich_f1 is None else repr(b.rich_f1)])
    files["eval/confidence_profile.csv"] = buf.getvalue()
    payload = {
        "tau": tau,
        "tau_source": "override" if run.cfg["routing"]["tau"] is not None else "sweep",
        "mode": mode,
        "metrics": {n: m.to_dict() for n, m in metrics.items()},
        "routing": routing_report(routed),
    }
    return run.commit("evaluate", files, payload, upstream)


def stage_stress(run: Run) -> dict:
    upstream = run.check_upstream("stress")
    minimal, rich, _ = _models(run)
    split = _load_split(run)
    mode = run.cfg["routing"]["mode"]
    base = [s for s in _load_segments(run, "segments.jsonl") if s.record_ref in split.ds2_subjects]
    names = sorted({s.record_ref for s in base})
    recs = {r.subject_id: r for r in run.records(names)}
    fs = {r.sampling_rate_hz for r in recs.values()}
    if len(fs) != 1:
        raise ValidationError("stress run needs a single sampling rate across test records")
    fcfg = run.cfg["features"]
    system = RoutedClassifier(minimal, rich, _tau(run), mode, fs.pop(), fcfg["local_window"], fcfg["morph_scaling"])
    detected = {n: _detected(run, n) for n in names}
    divisors = {n: _record_divisor(run, recs[n], detected[n]) for n in names}

    def items():
        for s in base:
            rec = recs[s.record_ref]
            sig = s.signal(rec, run.cfg["channel"])
            if detected[s.record_ref] is None:
                anchors, labels = s.anchors, s.labels
            else:
                anchors, labels, _ = _segment_rows(run, s, rec, detected[s.record_ref], None)
            yield f"{s.record_ref}:{s.start_sample}", sig, anchors, labels, divisors[s.record_ref]

    outcomes = []
    for i, kind in enumerate(run.cfg["stress"]["perturbations"]):
        outcomes.append(run_stress(system, items(), kind, seed=run.cfg["seed"] + i))
    payload = {
        o.perturbation: {
            "interfered": o.interfered,
            "non_interfered": o.non_interfered,
            "trials": o.trials,
            "skipped": o.skipped,
        }
        for o in outcomes
    }
    return run.commit("stress", {"stress.csv": stress_table_csv(outcomes)}, payload, upstream)


def stage_report(run: Run) -> dict:
    upstream = run.check_upstream("report")
    ev = run.manifest("evaluate")["payload"]
    sw = run.manifest("sweep")["payload"]
    st = run.manifest("stress")["payload"]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["system", "micro_f1", "macro_f1", "weighted_f1", *[f"f1_{c}" for c in CLASSES]])
    for name in ("routed", "minimal", "rich", "oracle"):
        m = ev["metrics"][name]
        w.writerow([name, f"{m['micro_f1']:.6f}", f"{m['macro_f1']:.6f}", f"{m['weighted_f1']:.6f}",
                    *[f"{m['per_class'][c]['f1']:.6f}" for c in CLASSES]])
    metrics_table = buf.getvalue()

    r = ev["routing"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "mode", "segments", "minimal_segments", "rich_segments", "rich_fraction", "avg_tool_calls"])
    w.writerow([f"{ev['tau']:.6f}", ev["mode"], r["segments"], r["minimal_segments"], r["rich_segments"],
                f"{r['rich_fraction']:.6f}", f"{r['avg_tool_calls']:.6f}"])
    routing_table = buf.getvalue()

    with open(run.path("stress.csv")) as fh:
        stress_table = fh.read()

    lines = [
        f"dataset: {run.cfg['dataset']}",
        f"threshold: {ev['tau']:.6f} ({ev['tau_source']}, mode {ev['mode']})",
        f"induction split: routed micro-F1 {sw['micro_f1']:.4f}, minimal only {sw['pure_minimal_micro_f1']:.4f}, rich only {sw['pure_rich_micro_f1']:.4f}",
        "",
        "test split:",
    ]
    for name in ("routed", "minimal", "rich", "oracle"):
        m = ev["metrics"][name]
        lines.append(f"  {name:8s} micro-F1 {m['micro_f1']:.4f}  macro-F1 {m['macro_f1']:.4f}")
    lines += [
        f"  routing: {r['rich_segments']}/{r['segments']} segments to rich, {r['avg_tool_calls']:.3f} tool calls per segment",
        "",
        "stress (F1 clean minus F1 stressed):",
    ]
    for kind, o in st.items():
        for group in ("interfered", "non_interfered"):
            vals = ", ".join(f"{c}={'--' if o[group][c] is None else format(o[group][c], '.4f')}" for c in CLASSES)
            lines.append(f"  {kind:11s} {group:14s} {vals}")
    summary = "\n".join(lines) + "\n"
    files = {
        "report/metrics.csv": metrics_table,
        "report/routing.csv": routing_table,
        "report/stress.csv": stress_table,
        "report/summary.txt": summary,
    }
    return run.commit("report", files, {"summary": summary}, upstream)


STAGE_FUNCS = {
    "fetch": stage_fetch,
    "ingest": stage_ingest,
    "augment": stage_augment,
    "detect": stage_detect,
    "features": stage_features,
    "train": stage_train,
    "sweep": stage_sweep,
    "evaluate": stage_evaluate,
    "stress": stage_stress,
    "report": stage_report,
}


def run_stage(run: Run, stage: str) -> dict:
    if stage not in STAGE_FUNCS:
        raise ValidationError(f"unknown stage {stage!r}")
    log.info("stage %s -> %s", stage, run.out)
    return STAGE_FUNCS[stage](run)


def run_all(run: Run, include_fetch: bool = False) -> None:
    for stage in STAGES:
        if stage == "fetch" and not include_fetch:
            continue
        run_stage(run, stage)

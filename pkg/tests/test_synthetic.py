import json
import os

import numpy as np

from ecgroute.ingest import read_record
from ecgroute.synthetic import SyntheticConfig, gen_synthetic, synthetic_record


def test_manifest_layout(synthetic_dir):
    with open(os.path.join(synthetic_dir, "synthetic.json")) as fh:
        m = json.load(fh)
    assert len(m["ds1"]) == len(m["ds2"]) == 6
    assert not set(m["ds1"]) & set(m["ds2"])
    for name in m["ds1"] + m["ds2"]:
        for ext in ("hea", "dat", "atr"):
            assert os.path.exists(os.path.join(synthetic_dir, f"{name}.{ext}"))


def test_every_class_occurs(synthetic_dir):
    with open(os.path.join(synthetic_dir, "synthetic.json")) as fh:
        m = json.load(fh)
    total = {c: sum(r["counts"][c] for r in m["records"].values()) for c in "NSVFQ"}
    assert all(v > 0 for v in total.values())
    assert total["N"] > 5 * max(total["S"], total["V"], total["F"])


def test_files_match_in_memory_record(tmp_path):
    cfg = SyntheticConfig(records=["a", "b"], seconds=20.0, seed=3)
    gen_synthetic(str(tmp_path), cfg)
    rec = read_record(str(tmp_path), "a")
    mem = synthetic_record("a", cfg)
    assert rec.annotations == mem.annotations
    # ADC quantisation at 200 units per mV
    assert np.abs(rec.signals - mem.signals).max() <= 0.5 / 200 + 1e-12


def test_generation_is_deterministic(tmp_path):
    cfg = SyntheticConfig(records=["a", "b"], seconds=20.0)
    gen_synthetic(str(tmp_path / "1"), cfg)
    gen_synthetic(str(tmp_path / "2"), cfg)
    for name in ("a.dat", "a.atr", "b.hea", "synthetic.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


def test_no_beats_near_record_end():
    rec = synthetic_record("x", SyntheticConfig(records=["x"], seconds=30.0))
    assert rec.ann_samples[-1] < rec.n_samples - 0.3 * 360

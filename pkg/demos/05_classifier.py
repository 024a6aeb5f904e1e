"""
Two classifier tiers
====================

Both tiers are class-balanced softmax regressions fitted by full-batch
gradient descent. The minimal tier sees timing only; the rich tier sees
every feature.
"""

import numpy as np

from ecgroute.ingest import cut_segments
from ecgroute.features import segment_features
from ecgroute.model import grad_check, predict, predict_labels, train
from ecgroute.synthetic import SyntheticConfig, synthetic_record

cfg = SyntheticConfig(records=["demo"], seconds=300.0, seed=2)
rec = synthetic_record("demo", cfg)
rows, labels = [], []
for seg in cut_segments(rec):
    if seg.anchors:
        rows.append(segment_features(seg.signal(rec), seg.anchors, rec.sampling_rate_hz))
        labels += seg.labels
x = np.vstack(rows)
y = np.array(labels)

for tier in ("minimal", "rich"):
    params = train(x, list(y), tier=tier, epochs=500)
    acc = np.mean(np.array(predict_labels(params, x)) == y)
    print(f"{tier:8s} training accuracy {acc:.3f}, loss {params.loss_history[0]:.3f} -> {params.loss_history[-1]:.3f}")

# the analytic gradient agrees with central differences
print("gradient check:", grad_check(params, x[:40], list(y[:40])))
print("posterior of first beat:", np.round(predict(params, x[0]), 4))

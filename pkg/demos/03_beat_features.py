"""
Per-beat features
=================

Each beat gets 23 numbers: four RR intervals, the same four normalised by
the mean RR, the R amplitude, ten higher-order statistics of the beat window
and four landmark distances. Only the first eight depend on timing alone.
"""

import numpy as np

from ecgroute.features import FEATURE_NAMES, MINIMAL_MASK, format_beat, rr_quadruple, segment_features
from ecgroute.synthetic import SyntheticConfig, synthetic_record

anchors = [77, 370, 663, 947, 1231, 1515, 1809, 2045, 2403, 2706, 2998, 3283, 3560]
for k in range(4):
    print("beat", k, "pre/next/local/global RR:", rr_quadruple(anchors, k))

rec = synthetic_record("demo", SyntheticConfig(records=["demo"], seconds=20.0))
samples, labels = rec.beats()
window = rec.signals[0, :3600]
inside = samples[samples < 3600]
rows = segment_features(window, inside, rec.sampling_rate_hz)
print(rows.shape, "feature matrix; minimal tier uses", [FEATURE_NAMES[i] for i in MINIMAL_MASK])

# one beat in the text grammar used for fixtures
print(format_beat(int(inside[1]), rows[1], digits=4))

# premature beats stand out in the normalised pre-RR column
for lab in ("N", "S", "V"):
    sel = labels[: len(inside)] == lab
    if sel.any():
        print(lab, "mean normalised pre-RR", np.round(rows[sel, 4].mean(), 3))

"""
Metrics and stress tests
========================

Per-class F1 from a confusion matrix, then the two perturbations: masking
one anchor and shifting one anchor by 6 to 30 samples.
"""

from ecgroute.evalx import compute_metrics, confusion_csv, stress_mask, stress_mislocalize

m = compute_metrics(["N", "V", "V", "V"], ["N", "N", "V", "V"])
print("micro", m.micro_f1, "macro", round(m.macro_f1, 4), "per class", {c: round(v, 3) for c, v in m.f1.items()})
print(confusion_csv(m, normalized=True))

anchors, labels = (100, 400, 700, 1000), ("N", "V", "N", "S")
print("mask beat 1:", stress_mask(anchors, labels, 1))
print("shift beat 1 by +12:", stress_mislocalize(anchors, labels, 1, 12, 3600))
print("shift that would reorder beats:", stress_mislocalize((100, 110), ("N", "N"), 0, 15, 3600))

"""
Minority-beat re-anchoring
==========================

Extra training windows are cut so that a rare beat sits at several
positions inside the 10 s window. The plan sizes the budget so each
minority class approaches a target ratio of the N count.
"""

from ecgroute.augment import plan_augmentation, reanchor, training_segments
from ecgroute.synthetic import SyntheticConfig, synthetic_record

counts = {"N": 45866, "S": 944, "V": 3788, "F": 415}
plan = plan_augmentation(counts)
for cls, (n, extra) in plan.budget.items():
    print(f"{cls}: {n} beats, {extra} extra windows, {plan.per_beat(cls):.2f} per beat")

cfg = SyntheticConfig(records=["a", "b"], seconds=60.0)
records = [synthetic_record(name, cfg) for name in cfg.records]
seg = reanchor(records[0], 5000, 0.5)
print("window start", seg.start_sample, "puts the beat at", seg.target_anchor)

segments, plan = training_segments(records)
n_aug = sum(s.origin == "augmented" for s in segments)
print(len(segments), "training windows of which", n_aug, "augmented")

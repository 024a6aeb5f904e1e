"""
Confidence routing
==================

A segment keeps the cheap timing-only labels when the mean (or minimum)
per-beat max posterior reaches the threshold; otherwise the rich branch is
called. The threshold is chosen on a held-out split.
"""

import numpy as np

from ecgroute.routing import SweepItem, route, routing_report, sweep_threshold

rng = np.random.default_rng(1)
items = []
for i in range(20):
    truth = ["N"] * 8 + ["V"] * (i % 3)
    conf = float(rng.uniform(0.6, 1.0))
    # low-confidence segments are where the cheap branch makes mistakes
    minimal = truth if conf > 0.8 else ["N"] * len(truth)
    items.append(SweepItem(f"s{i}", conf, minimal, truth, truth))
res = sweep_threshold(items)
print(f"chosen threshold {res.tau:.4f}: micro-F1 {res.micro_f1:.3f} with {res.n_rich} rich segments")

# a borderline segment just under the threshold goes to the rich branch
post = np.array([[0.989392, 0.010608, 0.0, 0.0]])
decision = route("100:0", post, 0.990529, rich_predictor=lambda: ["N"])
print(decision.branch, "branch,", decision.tool_calls, "tool calls")
print(routing_report([decision]))

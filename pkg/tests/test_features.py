import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ecgroute.errors import ValidationError
from ecgroute.features import (
    FEATURE_NAMES,
    MINIMAL_MASK,
    N_FEATURES,
    WINDOW,
    assemble,
    beat_windows,
    format_beat,
    hos_features,
    my_morph,
    normalize_rr,
    parse_beat,
    rr_quadruple,
    rr_table,
    segment_features,
    split,
    timing_features,
)
from ecgroute.synthetic import SyntheticConfig, beat_schedule, synthetic_record

from conftest import DATA

ANCHORS_100 = [77, 370, 663, 947, 1231, 1515, 1809, 2045, 2403, 2706, 2998, 3283, 3560]


def transcript():
    with open(os.path.join(DATA, "record100_segment0.txt")) as fh:
        return [line.strip() for line in fh if line.strip()]


def test_rr_quadruples_of_first_beats():
    assert rr_quadruple(ANCHORS_100, 0) == (77, 293, 77, 77)
    assert rr_quadruple(ANCHORS_100, 1) == (293, 293, 185, 77)
    assert rr_quadruple(ANCHORS_100, 2) == (293, 284, 221, 185)
    assert rr_quadruple(ANCHORS_100, 3) == (284, 284, 237, 221)


def test_rr_quadruples_match_reference_transcript():
    rows = [parse_beat(line) for line in transcript()]
    assert [a for a, _ in rows] == ANCHORS_100
    ref = np.array([v[:4] for _, v in rows])
    ours = np.array([rr_quadruple(ANCHORS_100, k) for k in range(len(ANCHORS_100))])
    assert np.array_equal(ours[:-1], ref[:-1])
    # the last beat has no successor inside the segment: next-RR falls back to its pre-RR
    assert ours[-1].tolist() == [277, 277, 290, 274]
    assert ref[-1].tolist() == [277, 303, 290, 274]


def test_norm_rr_range_against_reference_with_record_divisor():
    rows = [parse_beat(line) for line in transcript()]
    ref = np.array([v[4:8] for _, v in rows])
    ours = normalize_rr(rr_table(ANCHORS_100), 650000 / 2273)  # mean RR of record 100
    assert np.abs(ours[:-1] - ref[:-1]).max() < 2e-3


def test_transcript_grammar_reproduced_at_four_digits():
    for line in transcript():
        anchor, vec = parse_beat(line)
        assert vec.shape == (N_FEATURES,)
        assert format_beat(anchor, vec, digits=4) == line


def test_lossless_serialization(rng):
    vec = np.concatenate([[77, 293, 77, 77], rng.normal(size=19)])
    anchor, back = parse_beat(format_beat(77, vec))
    assert anchor == 77 and np.array_equal(back, vec)
    assert np.array_equal(assemble(*split(vec).values()), vec)


def test_parse_rejects_garbage():
    with pytest.raises(ValidationError):
        parse_beat("77:RR=1")
    with pytest.raises(ValidationError):
        parse_beat("[77:RR=1,2,3,4;amp=1]")


def test_rr_locality(rng):
    anchors = np.cumsum(rng.integers(150, 400, size=20))
    for k in range(18):
        moved = anchors.copy()
        moved[k + 2 :] += 37
        assert rr_quadruple(moved, k) == rr_quadruple(anchors, k)


def test_rr_rounding_is_half_to_even():
    # local mean of (77, 293, 293, 284, 284, 284) = 252.5 -> 252
    assert rr_quadruple(ANCHORS_100, 5)[2] == 252


def test_layout_and_masks():
    assert len(FEATURE_NAMES) == N_FEATURES == 23
    assert MINIMAL_MASK == tuple(range(8))
    assert FEATURE_NAMES[8] == "amp"


def test_hos_matches_scipy_per_block(rng):
    w = rng.normal(size=WINDOW) ** 3
    h = hos_features(w)
    blocks = w.reshape(5, 36)
    assert np.allclose(h[:5], stats.skew(blocks, axis=1), atol=1e-12)
    assert np.allclose(h[5:], stats.kurtosis(blocks, axis=1, fisher=False), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(-50, 50), st.integers(0, 2**31))
def test_hos_affine_invariance(a, b, seed):
    w = np.random.default_rng(seed).normal(size=WINDOW)
    assert np.abs(hos_features(a * w + b) - hos_features(w)).max() < 1e-9


def test_hos_constant_block_is_zero():
    w = np.zeros(WINDOW)
    w[100:] = np.linspace(0, 1, 80)
    h = hos_features(w)
    assert h[0] == h[1] == h[5] == h[6] == 0.0


@pytest.mark.parametrize("scaling", ["minmax", "zscore"])
def test_morph_shift_invariance(rng, scaling):
    for _ in range(20):
        w = rng.normal(size=WINDOW)
        b = rng.uniform(-100, 100)
        assert np.abs(my_morph(w + b, scaling) - my_morph(w, scaling)).max() < 1e-9


def test_morph_constant_window():
    # leftmost ties pick indices 0, 75, 95, 150
    assert np.allclose(my_morph(np.ones(WINDOW)), [0.6, 0.1, 1 / 30, 0.4])
    assert np.allclose(my_morph(np.ones(WINDOW), "zscore"), np.array([90, 15, 5, 60]) / 180)


def test_morph_flat_amplitude_gives_time_offsets():
    w = np.zeros(WINDOW)
    w[[10, 80, 100, 170]] = [1.0, -1.0, -1.0, 1.0]
    w[90] = 1.0
    # minmax: x over {10, 80, 100, 170, 90}; y values of R and landmarks 0 and 3 coincide
    out = my_morph(w)
    assert np.isclose(out[0], 80 / 160) and np.isclose(out[3], 80 / 160)
    assert np.isclose(out[1], np.hypot(10 / 160, 1.0))
    with pytest.raises(ValidationError):
        my_morph(w, "bogus")


def test_morph_range_on_synthetic_normal_beats():
    rec = synthetic_record("x", SyntheticConfig(records=["x"], seconds=30, snr_db=30.0))
    samples, labels = rec.beats()
    keep = (labels == "N") & (samples > 200) & (samples < rec.n_samples - 200)
    rows = segment_features(rec.signals[0], samples[keep], 360)
    morph = rows[:, 19:]
    assert morph.min() >= 0.8 and morph.max() <= 1.1


def test_beat_windows_padding_and_resampling():
    x = np.arange(1000, dtype=float)
    w, flags = beat_windows(x, [50, 500, 990], 360)
    assert w.shape == (3, WINDOW)
    assert flags.tolist() == [[True, False], [False, False], [False, True]]
    assert w[0, :40].sum() == 0 and w[0, 40] == 0 and w[0, 41] == 1
    assert np.array_equal(w[1], np.arange(410, 590))
    w2, _ = beat_windows(x, [500], 720)  # twice the rate: same +-0.25 s span
    assert np.allclose(w2[0], 500 + (np.arange(WINDOW) - 90) * 2)


def test_segment_features_layout(rng):
    sig = rng.normal(size=3600)
    anchors = [300, 700, 1000, 1500]
    rows = segment_features(sig, anchors, 360)
    assert rows.shape == (4, N_FEATURES)
    assert np.array_equal(rows[:, :8], timing_features(anchors))
    assert np.array_equal(rows[:, 8], sig[anchors])
    assert segment_features(sig, [], 360).shape == (0, N_FEATURES)
    with pytest.raises(ValidationError):
        normalize_rr([1, 2], 0.0)


def test_masking_is_local(rng):
    sig = rng.normal(size=3600)
    anchors = [200, 500, 800, 1100, 1400, 1700, 2000]
    full = segment_features(sig, anchors, 360, divisor=300.0)
    k = 3
    masked = segment_features(sig, anchors[:k] + anchors[k + 1 :], 360, divisor=300.0)
    kept = [i for i in range(len(anchors)) if i != k]
    for pos, i in enumerate(kept):
        same_shape = np.array_equal(masked[pos, 8:], full[i, 8:])
        assert same_shape
        if abs(i - k) > 1:
            assert np.array_equal(masked[pos, :2], full[i, :2])
    assert masked[k - 1, 1] == 600 and masked[k, 0] == 600


def test_premature_beat_pre_rr():
    cfg = SyntheticConfig(records=["x"], hrv=0.0, class_rates={"S": 0.2})
    rr = 360.0
    beats = beat_schedule(rr, 36000, {"S": 0.2}, cfg, np.random.default_rng(3))
    pos = [p for p, _ in beats]
    hits = [i for i, (_, c) in enumerate(beats) if c == "S"]
    assert hits
    for i in hits:
        assert abs((pos[i] - pos[i - 1]) - 0.6 * rr) <= 1

import numpy as np
import pytest
from hypothesis import given, strategies as st

from keyface.keystroke import (
    FeatureSequence,
    InvalidSampleError,
    KeystrokeSample,
    RawKeyEvent,
    SampleFormatError,
    compute_durations,
    compute_latencies,
    features_from_timings,
    normalize,
    parse_samples,
    serialize_samples,
)


def make_sample(timings, text=None):
    """Build a sample from (press, release) pairs."""
    events = tuple(
        RawKeyEvent(key_label=f"k{i}", press_time=p, release_time=r)
        for i, (p, r) in enumerate(timings)
    )
    return KeystrokeSample(events=events, expected_text=text or "x" * len(events))


def random_sample(rng, n_keys=10):
    """Random valid sample: positive durations, latencies of either sign."""
    timings = []
    press = int(rng.integers(0, 50))
    for _ in range(n_keys):
        duration = int(rng.integers(1, 200))
        timings.append((press, press + duration))
        # next press may land before the current release (rollover)
        press = press + duration + int(rng.integers(-duration + 1, 300))
    return make_sample(timings)


# ------------------------------------------------------------------ durations


def test_duration_direct_substitution():
    sample = make_sample([(100, 150), (200, 260)])
    assert compute_durations(sample) == [50, 60]


def test_duration_minimal_positive():
    sample = make_sample([(0, 1), (5, 9)])
    assert compute_durations(sample)[0] == 1


def test_durations_random_sample_scalar_oracle():
    rng = np.random.default_rng(42)
    for _ in range(20):
        sample = random_sample(rng)
        expected = [e.release_time - e.press_time for e in sample.events]
        assert compute_durations(sample) == expected
        assert all(d > 0 for d in expected)


def test_non_positive_duration_rejected():
    with pytest.raises(InvalidSampleError):
        RawKeyEvent(key_label="a", press_time=10, release_time=10)
    with pytest.raises(InvalidSampleError):
        RawKeyEvent(key_label="a", press_time=10, release_time=5)


# ------------------------------------------------------------------ latencies


def test_latency_direct_substitution():
    sample = make_sample([(0, 50), (80, 120)])
    assert compute_latencies(sample) == [30]


def test_latency_negative_on_rollover():
    # second key pressed before the first is released
    sample = make_sample([(0, 50), (40, 120)])
    assert compute_latencies(sample) == [-10]


def test_latencies_ten_key_password_oracle():
    rng = np.random.default_rng(7)
    sample = random_sample(rng, n_keys=10)
    latencies = compute_latencies(sample)
    assert len(latencies) == 9
    for i, lat in enumerate(latencies):
        assert lat == sample.events[i + 1].press_time - sample.events[i].release_time


# -------------------------------------------------------------- normalization


def test_normalize_two_key_telescoping_example():
    # durations [50, 50], latency [100], total 200
    sample = make_sample([(0, 50), (150, 200)])
    features = normalize(sample)
    assert features.total_time_ms == 200
    assert features.observations == ((0.25, 0.5),)
    assert features.final_duration == 0.25
    assert 0.25 + 0.5 + 0.25 == 1


def test_normalize_back_to_back_equal_durations():
    n, d = 5, 40
    timings = [(i * d, (i + 1) * d) for i in range(n)]
    features = normalize(make_sample(timings))
    for dur, lat in features.observations:
        assert dur == pytest.approx(1 / n, abs=1e-12)
        assert lat == 0.0
    assert features.final_duration == pytest.approx(1 / n, abs=1e-12)


def test_normalize_random_sample_scalar_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        sample = random_sample(rng, n_keys=10)
        features = normalize(sample)
        durations = [e.release_time - e.press_time for e in sample.events]
        latencies = [
            b.press_time - a.release_time
            for a, b in zip(sample.events, sample.events[1:])
        ]
        total = sample.events[-1].release_time - sample.events[0].press_time
        assert features.total_time_ms == total
        for t, (dur, lat) in enumerate(features.observations):
            assert dur == pytest.approx(durations[t] / total, abs=1e-12)
            assert lat == pytest.approx(latencies[t] / total, abs=1e-12)
        assert features.final_duration == pytest.approx(durations[-1] / total, abs=1e-12)
        checksum = sum(d + l for d, l in features.observations) + features.final_duration
        assert checksum == pytest.approx(1.0, abs=1e-9)


def test_feature_sequence_rejects_bad_telescoping():
    with pytest.raises(InvalidSampleError):
        FeatureSequence(observations=((0.25, 0.5),), final_duration=0.1, total_time_ms=200)


# ------------------------------------------------------ invariants/properties

event_count = st.integers(min_value=2, max_value=12)


@st.composite
def samples(draw):
    n = draw(event_count)
    press = draw(st.integers(min_value=0, max_value=100))
    timings = []
    for _ in range(n):
        duration = draw(st.integers(min_value=1, max_value=400))
        timings.append((press, press + duration))
        gap = draw(st.integers(min_value=-duration + 1, max_value=500))
        press = press + duration + gap
    return make_sample(timings)


@given(samples())
def test_lengths_and_telescoping(sample):
    durations = compute_durations(sample)
    latencies = compute_latencies(sample)
    assert len(durations) == len(sample.events)
    assert len(latencies) == len(sample.events) - 1
    assert sum(durations) + sum(latencies) == (
        sample.events[-1].release_time - sample.events[0].press_time
    )


@given(samples(), st.integers(min_value=2, max_value=9))
def test_normalization_scale_invariance(sample, c):
    start = sample.events[0].press_time
    scaled = make_sample(
        [
            (start + c * (e.press_time - start), start + c * (e.release_time - start))
            for e in sample.events
        ]
    )
    base = normalize(sample)
    fast = normalize(scaled)
    assert fast.final_duration == pytest.approx(base.final_duration, abs=1e-12)
    for (d0, l0), (d1, l1) in zip(base.observations, fast.observations):
        assert d1 == pytest.approx(d0, abs=1e-12)
        assert l1 == pytest.approx(l0, abs=1e-12)


@given(st.lists(samples(), max_size=5))
def test_serialize_parse_round_trip(samples_list):
    text = serialize_samples(samples_list)
    parsed = parse_samples(text)
    assert len(parsed) == len(samples_list)
    for sample, (durations, latencies) in zip(samples_list, parsed):
        assert durations == compute_durations(sample)
        assert latencies == compute_latencies(sample)


def test_parse_serialize_identity_on_text():
    text = "50,30;60,-10;70\n12,5;20\n"
    parsed = parse_samples(text)
    rebuilt = "".join(
        ";".join([f"{d},{l}" for d, l in zip(ds[:-1], ls)] + [str(ds[-1])]) + "\n"
        for ds, ls in parsed
    )
    assert rebuilt == text


# --------------------------------------------------------------- text format


def test_serialize_single_sample_format():
    # durations [50, 60, 70], latencies [30, -10]
    sample = make_sample([(0, 50), (80, 140), (130, 200)])
    assert serialize_samples([sample]) == "50,30;60,-10;70\n"


def test_serialize_empty_list():
    assert serialize_samples([]) == ""


def test_parse_example_line():
    assert parse_samples("50,30;60,-10;70") == [([50, 60, 70], [30, -10])]


def test_parse_empty_text():
    assert parse_samples("") == []


def test_parse_error_names_line():
    with pytest.raises(SampleFormatError, match="line 1"):
        parse_samples("50,30;x")
    with pytest.raises(SampleFormatError, match="line 2"):
        parse_samples("50,30;70\n50,oops;70\n")
    with pytest.raises(SampleFormatError, match="line 1"):
        parse_samples("50,30,2;70")


def test_features_from_timings_matches_normalize():
    rng = np.random.default_rng(11)
    sample = random_sample(rng)
    direct = normalize(sample)
    rebuilt = features_from_timings(
        compute_durations(sample), compute_latencies(sample)
    )
    assert rebuilt == direct


# ------------------------------------------------------------------- errors


def test_sample_needs_two_events():
    with pytest.raises(InvalidSampleError):
        make_sample([(0, 10)])


def test_sample_events_must_be_ordered():
    events = (
        RawKeyEvent("a", 100, 150),
        RawKeyEvent("b", 50, 90),
    )
    with pytest.raises(InvalidSampleError):
        KeystrokeSample(events=events, expected_text="ab")


def test_sample_length_must_match_password():
    events = (RawKeyEvent("a", 0, 10), RawKeyEvent("b", 20, 30))
    with pytest.raises(InvalidSampleError):
        KeystrokeSample(events=events, expected_text="abc")

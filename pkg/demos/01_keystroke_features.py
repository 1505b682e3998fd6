"""Keystroke timing features, step by step.

A fixed password typed twice at different speeds produces the same
normalized feature sequence: the rhythm is what identifies the typist,
not the tempo.
"""

from keyface import (
    KeystrokeSample,
    RawKeyEvent,
    compute_durations,
    compute_latencies,
    normalize,
    parse_samples,
    serialize_samples,
)

# One attempt at the 10-key password "strawberry". Times are integer
# milliseconds from a monotonic clock. Note keys 4->5: the next key goes
# down before the previous one comes up (rollover), giving a negative
# latency.
timings = [
    (0, 95),
    (150, 230),
    (300, 370),
    (430, 540),
    (600, 690),
    (670, 760),   # pressed 20 ms before the previous key was released
    (820, 905),
    (960, 1050),
    (1100, 1185),
    (1240, 1330),
]
password = "strawberry"
events = tuple(
    RawKeyEvent(key_label=ch, press_time=p, release_time=r)
    for ch, (p, r) in zip(password, timings)
)
sample = KeystrokeSample(events=events, expected_text=password)

durations = compute_durations(sample)
latencies = compute_latencies(sample)
print("durations (ms):", durations)
print("latencies (ms):", latencies)
print("negative latencies:", [l for l in latencies if l < 0])

# Total elapsed time telescopes exactly.
total = sample.events[-1].release_time - sample.events[0].press_time
assert sum(durations) + sum(latencies) == total
print("total time (ms):", total)

features = normalize(sample)
print("\nnormalized observations (duration, latency):")
for t, (d, l) in enumerate(features.observations):
    print(f"  key {t}: ({d:+.4f}, {l:+.4f})")
print(f"final key duration: {features.final_duration:.4f}")
checksum = sum(d + l for d, l in features.observations) + features.final_duration
print(f"checksum (should be 1): {checksum:.12f}")

# The same rhythm typed 3x slower normalizes identically.
slow = KeystrokeSample(
    events=tuple(
        RawKeyEvent(e.key_label, 3 * e.press_time, 3 * e.release_time)
        for e in events
    ),
    expected_text=password,
)
slow_features = normalize(slow)
drift = max(
    abs(a - b)
    for (a1, a2), (b1, b2) in zip(features.observations, slow_features.observations)
    for a, b in ((a1, b1), (a2, b2))
)
print(f"\nmax feature drift after 3x slowdown: {drift:.2e}")

# The plaintext storage format: semicolon-separated per-key vectors, one
# line per attempt, final key carries duration only.
text = serialize_samples([sample])
print("\nserialized sample:")
print(" ", text.strip())
print("parsed back:", parse_samples(text)[0] == (durations, latencies))

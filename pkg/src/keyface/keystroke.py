"""Keystroke timing features.

Turns raw key press/release event streams into per-key durations and
inter-key latencies, normalizes them by the total elapsed time of the
attempt so the result is independent of absolute typing speed, and
reads/writes the semicolon-delimited plaintext sample format used by the
profile store.

All times are integer milliseconds on a monotonic clock. Latencies may be
negative: under rollover typing the next key goes down before the previous
one comes up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidSampleError",
    "SampleFormatError",
    "RawKeyEvent",
    "KeystrokeSample",
    "FeatureSequence",
    "compute_durations",
    "compute_latencies",
    "normalize",
    "features_from_timings",
    "serialize_samples",
    "serialize_timings",
    "parse_samples",
]


class InvalidSampleError(ValueError):
    """Key events violate the capture contract (corrupted capture)."""


class SampleFormatError(ValueError):
    """Serialized sample text cannot be parsed."""


@dataclass(frozen=True)
class RawKeyEvent:
    """One key press/release pair, times in integer ms on a monotonic clock."""

    key_label: str
    press_time: int
    release_time: int

    def __post_init__(self) -> None:
        if self.press_time < 0 or self.release_time < 0:
            raise InvalidSampleError(
                f"key {self.key_label!r}: negative timestamp "
                f"(press={self.press_time}, release={self.release_time})"
            )
        if self.release_time <= self.press_time:
            raise InvalidSampleError(
                f"key {self.key_label!r}: release_time ({self.release_time}) must be "
                f"after press_time ({self.press_time})"
            )


@dataclass(frozen=True)
class KeystrokeSample:
    """One attempt at typing the fixed password, events ordered by press time."""

    events: tuple[RawKeyEvent, ...]
    expected_text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        if len(self.events) < 2:
            raise InvalidSampleError("a sample needs at least 2 key events")
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.press_time < prev.press_time:
                raise InvalidSampleError("events must be ordered by press time")
        if len(self.events) != len(self.expected_text):
            raise InvalidSampleError(
                f"{len(self.events)} events for a {len(self.expected_text)}-character "
                "password (fixed-text verification requires one event per character)"
            )


@dataclass(frozen=True)
class FeatureSequence:
    """Normalized bivariate observations fed to the keystroke HMM.

    ``observations[t]`` pairs the normalized duration of key ``t`` with the
    normalized latency between keys ``t`` and ``t+1``. The final key has no
    following latency, so its normalized duration is kept separately in
    ``final_duration`` instead of entering the observation sequence. By the
    telescoping identity, the sum of all entries (including
    ``final_duration``) is 1.
    """

    observations: tuple[tuple[float, float], ...]
    final_duration: float
    total_time_ms: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "observations",
            tuple((float(d), float(l)) for d, l in self.observations),
        )
        if self.total_time_ms <= 0:
            raise InvalidSampleError(f"non-positive total time ({self.total_time_ms} ms)")
        if self.final_duration <= 0.0 or any(d <= 0.0 for d, _ in self.observations):
            raise InvalidSampleError("every normalized duration must be positive")
        total = sum(d + l for d, l in self.observations) + self.final_duration
        if abs(total - 1.0) > 1e-9:
            raise InvalidSampleError(
                f"durations and latencies sum to {total!r}, expected 1 (telescoping identity)"
            )

    def __len__(self) -> int:
        return len(self.observations)

    def as_array(self) -> np.ndarray:
        """Observations as a (T, 2) float array of (duration, latency) rows."""
        return np.array(self.observations, dtype=float).reshape(len(self.observations), 2)


def compute_durations(sample: KeystrokeSample) -> list[int]:
    """Per-key hold times in ms: release minus press for each event."""
    return [e.release_time - e.press_time for e in sample.events]


def compute_latencies(sample: KeystrokeSample) -> list[int]:
    """Inter-key latencies in ms: next press minus current release.

    Length is one less than the number of events. Values may be negative
    (rollover typing).
    """
    return [
        nxt.press_time - cur.release_time
        for cur, nxt in zip(sample.events, sample.events[1:])
    ]


def normalize(sample: KeystrokeSample) -> FeatureSequence:
    """Extract the speed-invariant feature sequence from a sample.

    Every duration and latency is divided by the total elapsed time (release
    of the final key minus press of the first) so that re-typing the same
    rhythm faster or slower yields the same features.
    """
    durations = compute_durations(sample)
    latencies = compute_latencies(sample)
    total = sample.events[-1].release_time - sample.events[0].press_time
    return _build_features(durations, latencies, total)


def features_from_timings(durations: list[int], latencies: list[int]) -> FeatureSequence:
    """Build a FeatureSequence from stored raw timings (the parsed sample format).

    The total elapsed time is recovered from the telescoping identity:
    it equals the sum of all durations and latencies.
    """
    if len(durations) != len(latencies) + 1:
        raise InvalidSampleError(
            f"{len(durations)} durations require {len(durations) - 1} latencies, "
            f"got {len(latencies)}"
        )
    if any(d <= 0 for d in durations):
        raise InvalidSampleError("every duration must be positive")
    total = sum(durations) + sum(latencies)
    return _build_features(durations, latencies, total)


def _build_features(
    durations: list[int], latencies: list[int], total: int
) -> FeatureSequence:
    if total <= 0:
        raise InvalidSampleError(f"non-positive total time ({total} ms)")
    obs = tuple(
        (d / total, l / total) for d, l in zip(durations[:-1], latencies)
    )
    return FeatureSequence(
        observations=obs,
        final_duration=durations[-1] / total,
        total_time_ms=total,
    )


def serialize_samples(samples: list[KeystrokeSample]) -> str:
    """Render samples in the plaintext sample format.

    One line per sample; per-key ``duration,latency`` vectors joined by
    semicolons; the final key carries its duration only. Round-trips
    losslessly through :func:`parse_samples` at millisecond resolution.
    """
    return "".join(
        serialize_timings(compute_durations(s), compute_latencies(s)) for s in samples
    )


def serialize_timings(durations: list[int], latencies: list[int]) -> str:
    """One newline-terminated line of the sample format from raw timings."""
    if len(durations) != len(latencies) + 1:
        raise InvalidSampleError(
            f"{len(durations)} durations require {len(durations) - 1} latencies, "
            f"got {len(latencies)}"
        )
    vectors = [f"{d},{l}" for d, l in zip(durations[:-1], latencies)]
    vectors.append(str(durations[-1]))
    return ";".join(vectors) + "\n"


def parse_samples(text: str) -> list[tuple[list[int], list[int]]]:
    """Inverse of :func:`serialize_samples`, at the feature level.

    Returns one ``(durations, latencies)`` pair per non-empty line. Raises
    :class:`SampleFormatError` naming the offending line on malformed input.
    """
    out: list[tuple[list[int], list[int]]] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line:
            continue
        vectors = line.split(";")
        if len(vectors) < 2:
            raise SampleFormatError(
                f"line {lineno}: expected at least 2 key vectors, got {len(vectors)}"
            )
        durations: list[int] = []
        latencies: list[int] = []
        for vec in vectors[:-1]:
            parts = vec.split(",")
            if len(parts) != 2:
                raise SampleFormatError(
                    f"line {lineno}: expected 'duration,latency', got {vec!r}"
                )
            durations.append(_parse_ms(parts[0], lineno))
            latencies.append(_parse_ms(parts[1], lineno))
        final = vectors[-1]
        if "," in final:
            raise SampleFormatError(
                f"line {lineno}: final key carries duration only, got {final!r}"
            )
        durations.append(_parse_ms(final, lineno))
        if any(d <= 0 for d in durations):
            raise SampleFormatError(f"line {lineno}: non-positive duration")
        out.append((durations, latencies))
    return out


def _parse_ms(field: str, lineno: int) -> int:
    try:
        return int(field)
    except ValueError:
        raise SampleFormatError(
            f"line {lineno}: non-numeric field {field!r}"
        ) from None

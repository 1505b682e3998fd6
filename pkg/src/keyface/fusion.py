"""Score-level fusion of the keystroke and face modalities.

Each modality contributes a pair of calibrated scores: the evidence that
the user is genuine and the evidence that they are an imposter (the two
need not sum to one). An integrator (product by default, also sum, min,
max) combines the per-modality genuine scores into a fused genuine score
and likewise for the imposter scores; the attempt is accepted only when
the fused genuine score strictly exceeds the fused imposter score, so
ties reject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "INTEGRATORS",
    "MODALITIES",
    "ModalityScore",
    "FusedDecision",
    "integrate",
    "keystroke_match_score",
]

INTEGRATORS = ("product", "sum", "min", "max")
MODALITIES = ("keystroke", "face")

_COMBINE = {
    "product": lambda a, b: a * b,
    "sum": lambda a, b: a + b,
    "min": min,
    "max": max,
}


@dataclass(frozen=True)
class ModalityScore:
    """Calibrated genuine/imposter evidence from one modality."""

    p_true: float
    p_false: float
    modality: str

    def __post_init__(self) -> None:
        for name in ("p_true", "p_false"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v!r} must lie in [0, 1]")
        if self.modality not in MODALITIES:
            raise ValueError(
                f"unknown modality {self.modality!r}, expected one of {MODALITIES}"
            )


@dataclass(frozen=True)
class FusedDecision:
    """Fused genuine/imposter scores and the resulting accept/reject."""

    s_true: float
    s_false: float
    integrator: str
    accepted: bool

    def __post_init__(self) -> None:
        if self.accepted != (self.s_true > self.s_false):
            raise ValueError("accepted must equal (s_true > s_false)")


def integrate(
    key: ModalityScore, face: ModalityScore, integrator: str = "product"
) -> FusedDecision:
    """Combine two modality scores and decide.

    The integrator is applied separately to the genuine scores and to the
    imposter scores; acceptance requires the fused genuine score to strictly
    exceed the fused imposter score.
    """
    try:
        combine = _COMBINE[integrator]
    except KeyError:
        raise ValueError(
            f"unknown integrator {integrator!r}, expected one of {INTEGRATORS}"
        ) from None
    s_true = combine(key.p_true, face.p_true)
    s_false = combine(key.p_false, face.p_false)
    return FusedDecision(
        s_true=s_true,
        s_false=s_false,
        integrator=integrator,
        accepted=s_true > s_false,
    )


def keystroke_match_score(band_distance: float) -> ModalityScore:
    """Map a keystroke band distance (in score standard deviations) to evidence.

    Distances within one standard deviation score 1; beyond that the score
    decays exponentially. Monotone decreasing in the band distance, which is
    the only property fusion relies on.
    """
    if band_distance < 0:
        raise ValueError("band_distance is a magnitude and cannot be negative")
    p_true = math.exp(-max(0.0, band_distance - 1.0))
    return ModalityScore(p_true=p_true, p_false=1.0 - p_true, modality="keystroke")

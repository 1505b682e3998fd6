"""Score-level fusion: how the four integrators combine two modalities.

Each modality delivers calibrated evidence (p_true, p_false). An
integrator combines the genuine sides and the imposter sides separately;
the attempt is accepted only when fused genuine evidence strictly exceeds
fused imposter evidence.
"""

from keyface import ModalityScore, integrate, keystroke_match_score
from keyface.fusion import INTEGRATORS

cases = {
    "both confident": (
        ModalityScore(0.95, 0.05, "keystroke"),
        ModalityScore(0.90, 0.10, "face"),
    ),
    "keystroke shaky, face sure": (
        ModalityScore(0.40, 0.60, "keystroke"),
        ModalityScore(0.95, 0.02, "face"),
    ),
    "both doubtful": (
        ModalityScore(0.30, 0.70, "keystroke"),
        ModalityScore(0.25, 0.60, "face"),
    ),
    "split decision": (
        ModalityScore(0.80, 0.20, "keystroke"),
        ModalityScore(0.10, 0.90, "face"),
    ),
}

header = f"{'case':26s}" + "".join(f"{name:>10s}" for name in INTEGRATORS)
print(header)
print("-" * len(header))
for label, (key, face) in cases.items():
    row = f"{label:26s}"
    for integrator in INTEGRATORS:
        decision = integrate(key, face, integrator)
        row += f"{'ACCEPT' if decision.accepted else 'reject':>10s}"
    print(row)

# The keystroke side is calibrated from the band distance: within one
# standard deviation scores full evidence, beyond that it decays.
print("\nkeystroke band distance -> evidence:")
for z in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0):
    score = keystroke_match_score(z)
    print(f"  z={z:3.1f}: p_true={score.p_true:.4f}")

# Ties reject: "exceeds" is strict.
tie = integrate(
    ModalityScore(0.5, 0.5, "keystroke"), ModalityScore(0.5, 0.5, "face"), "product"
)
print(f"\ntie case: s_true={tie.s_true} s_false={tie.s_false} accepted={tie.accepted}")

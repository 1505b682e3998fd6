"""Eigenfaces + Fisherfaces on procedurally generated 64x64 faces.

Each synthetic identity is a fixed base pattern; its captures are noisy
copies. PCA (via the snapshot method) finds the directions of greatest
variation, LDA then finds the projection that best separates identities,
and probes are classified to the nearest class mean in Fisher space.
"""

import numpy as np

from keyface import FaceImage, classify, face_match_score, train_face_model
from keyface.face import IMAGE_SIZE, load_pgm, write_pgm

rng = np.random.default_rng(7)


def capture(base, noise=12):
    jitter = rng.normal(0, noise, (IMAGE_SIZE, IMAGE_SIZE))
    return FaceImage(pixels=np.clip(base + jitter, 0, 255).astype(np.uint8))


identities = {}
for name in ("ada", "grace", "edsger"):
    base = rng.integers(40, 216, (IMAGE_SIZE, IMAGE_SIZE)).astype(float)
    identities[name] = (base, [capture(base) for _ in range(20)])

model = train_face_model({name: caps for name, (_, caps) in identities.items()})
print(f"enrolled classes: {model.class_labels}")
print(f"eigenfaces kept: {model.eigenfaces.shape[0]} "
      f"(each a {model.eigenfaces.shape[1]}-pixel direction)")
print(f"Fisher dimensions: {model.fisher_basis.shape[0]} (at most classes - 1)")
print(f"genuine distance calibration: mean={model.genuine_dist_mean:.3f} "
      f"std={model.genuine_dist_std:.3f}")

# Fresh probes from each identity classify back to it.
print("\nclassification of fresh probes:")
for name, (base, _) in identities.items():
    probe = capture(base)
    label, distance = classify(model, probe)
    print(f"  true={name:7s} -> predicted={label:7s} distance={distance:.3f}")

# Verification against a claim: distance calibrated to a match score.
ada_probe = capture(identities["ada"][0])
for claim in ("ada", "grace"):
    score = face_match_score(model, ada_probe, claim)
    print(f"probe of ada claimed as {claim:5s}: p_true={score.p_true:.4f} "
          f"p_false={score.p_false:.4f}")

# Images travel as binary PGM and survive the trip pixel-exactly.
blob = write_pgm(ada_probe)
again = load_pgm(blob)
print(f"\nPGM round trip: {len(blob)} bytes, "
      f"pixel-identical={np.array_equal(again.pixels, ada_probe.pixels)}")

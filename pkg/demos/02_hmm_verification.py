"""Training a per-user keystroke HMM and testing the acceptance band.

A user's typing is modeled by a 2-state HMM with bivariate Gaussian
emissions over (normalized duration, normalized latency). The acceptance
test scores an attempt with the Viterbi algorithm and checks how far the
score falls from the mean of the user's own training scores.
"""

import numpy as np

from keyface import GaussianParams, HmmModel, TrainingConfig, fit_profile, verify_keystroke
from keyface.hmm import forward_backward, sample_sequences, train_with_history, viterbi

rng = np.random.default_rng(42)

# Ground truth for a synthetic user: a "confident" state with short holds
# and a "hesitant" state with longer ones.
true_user = HmmModel(
    initial_probs=np.array([0.7, 0.3]),
    transition=np.array([[0.8, 0.2], [0.3, 0.7]]),
    emissions=(
        GaussianParams(mean=np.array([0.055, 0.030]), covariance=0.00012 * np.eye(2)),
        GaussianParams(mean=np.array([0.085, 0.055]), covariance=0.00020 * np.eye(2)),
    ),
)

training = sample_sequences(true_user, 30, 9, rng)
model, history = train_with_history(training, TrainingConfig(iterations=20, seed=0))
print("log-likelihood trajectory (first/last 3):")
for i in (0, 1, 2):
    print(f"  iteration {i:2d}: {history[i]:.3f}")
print("  ...")
for i in (-3, -2, -1):
    print(f"  iteration {len(history) + i:2d}: {history[i]:.3f}")

print("\nlearned state means:")
for i, e in enumerate(model.emissions):
    print(f"  state {i}: mean=({e.mean[0]:.4f}, {e.mean[1]:.4f})")
print("learned transition matrix:\n", np.round(model.transition, 3))

# Decode one sequence: which state generated each observation?
attempt = sample_sequences(true_user, 1, 9, rng)[0]
path, log_joint = viterbi(model, attempt)
loglik, _ = forward_backward(model, attempt)
print(f"\nViterbi path: {path.tolist()}  (joint {log_joint:.2f}, forward {loglik:.2f})")

# The profile stores the band statistics computed over the training scores.
profile = fit_profile(training, TrainingConfig(iterations=20, seed=0))
print(f"\nscore band: mean={profile.score_mean:.4f} std={profile.score_std:.4f} "
      f"k={profile.band_width_k}")

genuine = sample_sequences(true_user, 200, 9, rng)
accepted = sum(verify_keystroke(profile, seq).accepted for seq in genuine)
print(f"genuine attempts accepted: {accepted}/200")

# An imposter with a different rhythm scores far outside the band.
imposter = HmmModel(
    initial_probs=true_user.initial_probs,
    transition=true_user.transition,
    emissions=(
        GaussianParams(mean=np.array([0.035, 0.065]), covariance=0.00012 * np.eye(2)),
        GaussianParams(mean=np.array([0.110, 0.020]), covariance=0.00020 * np.eye(2)),
    ),
)
attacks = sample_sequences(imposter, 200, 9, rng)
false_accepts = sum(verify_keystroke(profile, seq).accepted for seq in attacks)
print(f"imposter attempts accepted: {false_accepts}/200")

result = verify_keystroke(profile, attacks[0])
print(f"\none imposter attempt: score={result.score:.4f} "
      f"band_distance={result.band_distance:.2f} accepted={result.accepted}")

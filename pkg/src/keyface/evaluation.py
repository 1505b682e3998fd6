"""Error-rate evaluation: FAR/FRR arithmetic, EER, threshold sweeps, and a
seeded synthetic population for desk-scale end-to-end experiments.

Real enrollment corpora are private and hardware-bound, so end-to-end
behavior is exercised on generated populations: each synthetic user owns a
keystroke HMM and a face cluster in Fisher space, genuine attempts are
drawn from the user's own parameters, and imposter attempts are drawn from
other users' parameters against the claimed identity (zero-effort
imposters). Everything is deterministic given the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import fusion
from .hmm import (
    HmmModel,
    GaussianParams,
    TrainedProfile,
    TrainingConfig,
    fit_profile,
    sample_sequences,
    score_sequence,
)

__all__ = [
    "FACE_DIM",
    "UndefinedRateError",
    "Attempt",
    "far",
    "frr",
    "compute_eer",
    "UserParams",
    "SyntheticPopulation",
    "AttemptSample",
    "EnrolledUser",
    "ScoredAttempt",
    "RocPoint",
    "generate_population",
    "draw_attempts",
    "enroll_population",
    "score_attempts",
    "keystroke_decision",
    "face_modality_score",
    "fused_decision",
    "sweep_roc",
    "modality_eers",
    "format_report",
]

FACE_DIM = 3


class UndefinedRateError(ValueError):
    """The requested rate has a zero denominator."""


@dataclass(frozen=True)
class Attempt:
    """One logged verification attempt; genuine iff claimed equals true."""

    claimed_user: str
    true_user: str
    accepted: bool

    @property
    def is_genuine(self) -> bool:
        return self.claimed_user == self.true_user


def far(attempts: Iterable[Attempt]) -> float:
    """False acceptance rate: accepted imposter attempts over all imposter attempts."""
    imposter = [a for a in attempts if not a.is_genuine]
    if not imposter:
        raise UndefinedRateError("FAR is undefined without imposter attempts")
    return sum(a.accepted for a in imposter) / len(imposter)


def frr(attempts: Iterable[Attempt]) -> float:
    """False rejection rate: rejected genuine attempts over all genuine attempts."""
    genuine = [a for a in attempts if a.is_genuine]
    if not genuine:
        raise UndefinedRateError("FRR is undefined without genuine attempts")
    return sum(not a.accepted for a in genuine) / len(genuine)


def compute_eer(
    genuine_scores: Sequence[float], imposter_scores: Sequence[float]
) -> tuple[float, float]:
    """Equal error rate over continuous scores (higher score = more genuine).

    Sweeps the decision threshold over the pooled scores and returns the
    (EER, threshold) at the operating point where FRR and FAR are closest.
    """
    genuine = np.asarray(genuine_scores, dtype=float)
    imposter = np.asarray(imposter_scores, dtype=float)
    if genuine.size == 0 or imposter.size == 0:
        raise UndefinedRateError("EER needs both genuine and imposter scores")
    all_scores = np.concatenate([genuine, imposter])
    labels = np.concatenate([np.ones(genuine.size), np.zeros(imposter.size)])
    order = np.argsort(all_scores, kind="mergesort")
    labels = labels[order]
    # Threshold just below each sorted score: everything >= threshold accepts.
    genuine_below = np.concatenate([[0], np.cumsum(labels)])
    imposter_below = np.arange(all_scores.size + 1) - genuine_below
    frr_curve = genuine_below / genuine.size
    far_curve = (imposter.size - imposter_below) / imposter.size
    idx = int(np.argmin(np.abs(frr_curve - far_curve)))
    eer = float((frr_curve[idx] + far_curve[idx]) / 2.0)
    thresholds = np.concatenate([[all_scores[order[0]] - 1.0], all_scores[order]])
    return eer, float(thresholds[idx])


@dataclass(frozen=True)
class UserParams:
    """Generative parameters of one synthetic user."""

    user_id: str
    keystroke_model: HmmModel
    face_mean: np.ndarray
    face_spread: float


@dataclass(frozen=True)
class SyntheticPopulation:
    """Per-user generative parameters plus the sampled enrollment data."""

    users: tuple[UserParams, ...]
    seed: int
    sequence_length: int
    enrollment_keystrokes: Mapping[str, list[np.ndarray]]
    enrollment_faces: Mapping[str, np.ndarray]

    @property
    def user_ids(self) -> list[str]:
        return [u.user_id for u in self.users]


@dataclass(frozen=True)
class AttemptSample:
    """Raw data of one simulated verification attempt."""

    claimed_user: str
    true_user: str
    keystroke_obs: np.ndarray
    face_point: np.ndarray

    @property
    def is_genuine(self) -> bool:
        return self.claimed_user == self.true_user


@dataclass(frozen=True)
class EnrolledUser:
    """What the system retains after enrolling one synthetic user."""

    user_id: str
    profile: TrainedProfile
    face_mean: np.ndarray
    face_cal_mean: float
    face_cal_std: float


@dataclass(frozen=True)
class ScoredAttempt:
    """Modality-level evidence of one attempt against the claimed profile.

    ``keystroke_z`` is the band distance (score deviation in training-score
    standard deviations); ``face_z`` is the signed excess of the Fisher-space
    distance over the claimed user's genuine-distance mean, in genuine-distance
    standard deviations.
    """

    claimed_user: str
    true_user: str
    keystroke_z: float
    face_z: float

    @property
    def is_genuine(self) -> bool:
        return self.claimed_user == self.true_user


class RocPoint(NamedTuple):
    k: float
    far: float
    frr: float


def generate_population(
    n_users: int,
    samples_per_user: int,
    seed: int,
    spread: float = 1.0,
    sequence_length: int = 9,
    face_enrollment: int = 20,
) -> SyntheticPopulation:
    """Draw a population of distinct synthetic users plus enrollment data.

    ``spread`` scales every user's within-user dispersion (emission
    covariance and face cluster spread): small values give widely separated
    users, large values make them overlap.
    """
    if n_users < 2:
        raise ValueError(f"a population needs at least 2 users, got {n_users}")
    if samples_per_user < 2:
        raise ValueError("each user needs at least 2 enrollment samples")
    rng = np.random.default_rng(seed)
    users = []
    enrollment_keystrokes: dict[str, list[np.ndarray]] = {}
    enrollment_faces: dict[str, np.ndarray] = {}
    for i in range(n_users):
        user_id = f"user{i:03d}"
        model = _random_user_model(rng, spread)
        face_mean = rng.normal(0.0, 1.0, size=FACE_DIM)
        face_spread = 0.35 * spread
        users.append(
            UserParams(
                user_id=user_id,
                keystroke_model=model,
                face_mean=face_mean,
                face_spread=face_spread,
            )
        )
        enrollment_keystrokes[user_id] = sample_sequences(
            model, samples_per_user, sequence_length, rng
        )
        enrollment_faces[user_id] = face_mean + face_spread * rng.standard_normal(
            (face_enrollment, FACE_DIM)
        )
    for a in range(n_users):
        for b in range(a + 1, n_users):
            if np.allclose(users[a].face_mean, users[b].face_mean):
                raise RuntimeError("drawn users are not distinct; change the seed")
    return SyntheticPopulation(
        users=tuple(users),
        seed=seed,
        sequence_length=sequence_length,
        enrollment_keystrokes=enrollment_keystrokes,
        enrollment_faces=enrollment_faces,
    )


def _random_user_model(rng: np.random.Generator, spread: float) -> HmmModel:
    center = rng.uniform([0.04, 0.00], [0.12, 0.07])
    delta = rng.uniform(0.010, 0.025, size=2)
    emissions = []
    for sign in (-1.0, +1.0):
        sig = rng.uniform(0.006, 0.015, size=2) * spread
        rho = rng.uniform(-0.5, 0.5)
        cov = np.array(
            [
                [sig[0] ** 2, rho * sig[0] * sig[1]],
                [rho * sig[0] * sig[1], sig[1] ** 2],
            ]
        )
        emissions.append(GaussianParams(mean=center + sign * delta, covariance=cov))
    transition = np.stack([rng.dirichlet([5.0, 5.0]) for _ in range(2)])
    initial = rng.dirichlet([5.0, 5.0])
    return HmmModel(
        initial_probs=initial, transition=transition, emissions=tuple(emissions)
    )


def draw_attempts(
    population: SyntheticPopulation,
    n_genuine_per_user: int,
    n_imposter_per_user: int,
    seed: int,
) -> list[AttemptSample]:
    """Simulate genuine and zero-effort imposter attempts, deterministically."""
    rng = np.random.default_rng(seed)
    by_id = {u.user_id: u for u in population.users}
    ids = population.user_ids
    attempts: list[AttemptSample] = []
    for claimed in ids:
        own = by_id[claimed]
        for seq in sample_sequences(
            own.keystroke_model, n_genuine_per_user, population.sequence_length, rng
        ):
            point = own.face_mean + own.face_spread * rng.standard_normal(FACE_DIM)
            attempts.append(AttemptSample(claimed, claimed, seq, point))
        others = [u for u in ids if u != claimed]
        for _ in range(n_imposter_per_user):
            true = by_id[str(rng.choice(others))]
            seq = sample_sequences(
                true.keystroke_model, 1, population.sequence_length, rng
            )[0]
            point = true.face_mean + true.face_spread * rng.standard_normal(FACE_DIM)
            attempts.append(AttemptSample(claimed, true.user_id, seq, point))
    return attempts


def enroll_population(
    population: SyntheticPopulation, config: TrainingConfig = TrainingConfig()
) -> dict[str, EnrolledUser]:
    """Train a keystroke profile and face calibration for every user."""
    enrolled = {}
    for user in population.users:
        profile = fit_profile(population.enrollment_keystrokes[user.user_id], config)
        faces = population.enrollment_faces[user.user_id]
        mean_est = faces.mean(axis=0)
        dists = np.linalg.norm(faces - mean_est, axis=1)
        enrolled[user.user_id] = EnrolledUser(
            user_id=user.user_id,
            profile=profile,
            face_mean=mean_est,
            face_cal_mean=float(dists.mean()),
            face_cal_std=float(dists.std()),
        )
    return enrolled


def score_attempts(
    enrolled: Mapping[str, EnrolledUser], attempts: Iterable[AttemptSample]
) -> list[ScoredAttempt]:
    """Score every attempt against the claimed user's enrolled parameters."""
    scored = []
    for attempt in attempts:
        e = enrolled[attempt.claimed_user]
        score = score_sequence(e.profile.model, attempt.keystroke_obs)
        dev = abs(score - e.profile.score_mean)
        if e.profile.score_std > 0:
            keystroke_z = dev / e.profile.score_std
        else:
            keystroke_z = 0.0 if dev <= 1e-9 else float("inf")
        d = float(np.linalg.norm(attempt.face_point - e.face_mean))
        face_z = (d - e.face_cal_mean) / (e.face_cal_std + 1e-12)
        scored.append(
            ScoredAttempt(
                claimed_user=attempt.claimed_user,
                true_user=attempt.true_user,
                keystroke_z=keystroke_z,
                face_z=face_z,
            )
        )
    return scored


def keystroke_decision(attempt: ScoredAttempt, band_width_k: float) -> bool:
    """Keystroke-only decision: inside the band of width k."""
    return attempt.keystroke_z <= band_width_k


def face_modality_score(face_z: float) -> fusion.ModalityScore:
    """Calibrated face evidence from the signed distance excess."""
    p_true = float(np.exp(-max(0.0, face_z)))
    return fusion.ModalityScore(p_true=p_true, p_false=1.0 - p_true, modality="face")


def fused_decision(
    attempt: ScoredAttempt, integrator: str = "product"
) -> fusion.FusedDecision:
    """Fuse the two modality scores of one attempt."""
    key = fusion.keystroke_match_score(attempt.keystroke_z)
    face = face_modality_score(attempt.face_z)
    return fusion.integrate(key, face, integrator)


def sweep_roc(
    scored: Sequence[ScoredAttempt], k_values: Sequence[float]
) -> list[RocPoint]:
    """FAR/FRR of the keystroke band decision at each band width.

    Widening the band can only accept more attempts, so FRR is
    non-increasing and FAR non-decreasing in k.
    """
    if not any(a.is_genuine for a in scored) or all(a.is_genuine for a in scored):
        raise UndefinedRateError("sweep needs both genuine and imposter attempts")
    points = []
    for k in k_values:
        log = [
            Attempt(a.claimed_user, a.true_user, keystroke_decision(a, k))
            for a in scored
        ]
        points.append(RocPoint(k=float(k), far=far(log), frr=frr(log)))
    return points


def modality_eers(
    scored: Sequence[ScoredAttempt], integrator: str = "product"
) -> dict[str, float]:
    """EER of each modality alone and of the fused score, on the same attempts."""
    genuine = [a for a in scored if a.is_genuine]
    imposter = [a for a in scored if not a.is_genuine]
    if not genuine or not imposter:
        raise UndefinedRateError("EER needs both genuine and imposter attempts")

    def fused_margin(a: ScoredAttempt) -> float:
        decision = fused_decision(a, integrator)
        return decision.s_true - decision.s_false

    out = {}
    out["keystroke"] = compute_eer(
        [-a.keystroke_z for a in genuine], [-a.keystroke_z for a in imposter]
    )[0]
    out["face"] = compute_eer(
        [-a.face_z for a in genuine], [-a.face_z for a in imposter]
    )[0]
    out["fused"] = compute_eer(
        [fused_margin(a) for a in genuine], [fused_margin(a) for a in imposter]
    )[0]
    return out


def format_report(points: Iterable[RocPoint]) -> str:
    """Line-delimited JSON records (one per band width) suitable for plotting."""
    return "".join(
        json.dumps({"k": p.k, "far": p.far, "frr": p.frr}) + "\n" for p in points
    )

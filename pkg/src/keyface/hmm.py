"""Two-state hidden Markov model with bivariate Gaussian emissions.

Implements expectation-maximization (Baum-Welch) training over multiple
observation sequences, forward-backward likelihood/posterior computation,
Viterbi decoding, and the band-around-the-mean acceptance test used for
keystroke verification. All probability arithmetic is carried out in
log-space; products of 2-D Gaussian densities underflow far too quickly
for linear-domain computation.

Observations are (duration, latency) pairs; functions accept either a
:class:`keyface.keystroke.FeatureSequence` or any array-like of shape (T, 2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .keystroke import FeatureSequence

__all__ = [
    "N_STATES",
    "CovarianceError",
    "EmptySequenceError",
    "UnderTrainedProfileWarning",
    "GaussianParams",
    "HmmModel",
    "TrainedProfile",
    "TrainingConfig",
    "VerificationResult",
    "log_gaussian_density",
    "forward_backward",
    "viterbi",
    "score_sequence",
    "em_step",
    "baum_welch_train",
    "train_with_history",
    "fit_profile",
    "verify_keystroke",
    "sample_sequences",
    "swap_states",
]

N_STATES = 2
_DIM = 2
_LOG_2PI = math.log(2.0 * math.pi)


class CovarianceError(ValueError):
    """Covariance matrix is not usable (asymmetric or not positive-definite)."""


class EmptySequenceError(ValueError):
    """An observation sequence with zero observations was supplied."""


class UnderTrainedProfileWarning(UserWarning):
    """Profile has zero score spread; verification degenerates to exact match."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianParams:
    """Mean and full covariance of one state's (duration, latency) emission."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = _readonly(self.mean)
        cov = _readonly(self.covariance)
        if mean.shape != (_DIM,):
            raise ValueError(f"mean must be a 2-vector, got shape {mean.shape}")
        if cov.shape != (_DIM, _DIM):
            raise ValueError(f"covariance must be 2x2, got shape {cov.shape}")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise CovarianceError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class HmmModel:
    """A 2-state HMM: initial distribution, transition matrix, Gaussian emissions."""

    initial_probs: np.ndarray
    transition: np.ndarray
    emissions: tuple[GaussianParams, GaussianParams]

    def __post_init__(self) -> None:
        pi = _readonly(self.initial_probs)
        a = _readonly(self.transition)
        if pi.shape != (N_STATES,):
            raise ValueError(f"initial_probs must have shape ({N_STATES},)")
        if a.shape != (N_STATES, N_STATES):
            raise ValueError(f"transition must have shape ({N_STATES}, {N_STATES})")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("initial_probs must be non-negative and sum to 1")
        if np.any(a < 0) or np.max(np.abs(a.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("every transition row must be non-negative and sum to 1")
        if len(self.emissions) != N_STATES:
            raise ValueError(f"expected {N_STATES} emission distributions")
        object.__setattr__(self, "initial_probs", pi)
        object.__setattr__(self, "transition", a)
        object.__setattr__(self, "emissions", tuple(self.emissions))

    @property
    def n_states(self) -> int:
        return N_STATES

    def to_dict(self) -> dict:
        return {
            "initial_probs": self.initial_probs.tolist(),
            "transition": self.transition.tolist(),
            "emissions": [
                {"mean": e.mean.tolist(), "covariance": e.covariance.tolist()}
                for e in self.emissions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HmmModel":
        return cls(
            initial_probs=np.array(d["initial_probs"], dtype=float),
            transition=np.array(d["transition"], dtype=float),
            emissions=tuple(
                GaussianParams(
                    mean=np.array(e["mean"], dtype=float),
                    covariance=np.array(e["covariance"], dtype=float),
                )
                for e in d["emissions"]
            ),
        )


@dataclass(frozen=True)
class TrainedProfile:
    """A trained user model plus the genuine-score band statistics."""

    model: HmmModel
    score_mean: float
    score_std: float
    band_width_k: float = 1.0

    def __post_init__(self) -> None:
        if self.score_std < 0:
            raise ValueError("score_std must be non-negative")
        if self.band_width_k <= 0:
            raise ValueError("band_width_k must be positive")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "score_mean": self.score_mean,
            "score_std": self.score_std,
            "band_width_k": self.band_width_k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedProfile":
        return cls(
            model=HmmModel.from_dict(d["model"]),
            score_mean=float(d["score_mean"]),
            score_std=float(d["score_std"]),
            band_width_k=float(d["band_width_k"]),
        )


@dataclass(frozen=True)
class TrainingConfig:
    """Knobs for Baum-Welch training and profile fitting.

    ``early_stop_tol``, when set, stops training once the per-iteration
    log-likelihood improvement drops below it; by default all ``iterations``
    run.
    """

    iterations: int = 20
    covariance_floor: float = 1e-6
    seed: int = 0
    early_stop_tol: float | None = None
    band_width_k: float = 1.0


class VerificationResult(NamedTuple):
    """Outcome of scoring one sequence against a profile's acceptance band."""

    accepted: bool
    score: float
    band_distance: float


ObservationsLike = FeatureSequence | np.ndarray | Sequence[tuple[float, float]]


def _as_observations(obs: ObservationsLike) -> np.ndarray:
    if isinstance(obs, FeatureSequence):
        arr = obs.as_array()
    else:
        arr = np.asarray(obs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != _DIM:
        raise ValueError(f"observations must have shape (T, {_DIM}), got {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptySequenceError("observation sequence is empty")
    return arr


def log_gaussian_density(x: np.ndarray, params: GaussianParams) -> float:
    """log N(x; mean, covariance) for a 2-D Gaussian.

    Raises :class:`CovarianceError` if the covariance is not
    positive-definite (a sign the regularization floor was skipped).
    """
    x = np.asarray(x, dtype=float)
    chol = _cholesky(params.covariance)
    return float(_log_density_given_chol(x.reshape(1, _DIM), params.mean, chol)[0])


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise CovarianceError(
            "covariance is not positive-definite; apply the regularization floor"
        ) from None


def _log_density_given_chol(
    x: np.ndarray, mean: np.ndarray, chol: np.ndarray
) -> np.ndarray:
    # x: (T, 2). Solve L z = (x - mean)^T, quadratic form = ||z||^2.
    dev = (x - mean).T
    z = np.linalg.solve(chol, dev)
    quad = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (_DIM * _LOG_2PI + logdet + quad)


def _emission_logprobs(model: HmmModel, arr: np.ndarray) -> np.ndarray:
    """Per-time, per-state emission log densities, shape (T, 2)."""
    cols = [
        _log_density_given_chol(arr, e.mean, _cholesky(e.covariance))
        for e in model.emissions
    ]
    return np.stack(cols, axis=1)


def _log_forward(model: HmmModel, log_b: np.ndarray) -> np.ndarray:
    T = log_b.shape[0]
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial_probs)
        log_a = np.log(model.transition)
    alpha = np.empty((T, N_STATES))
    alpha[0] = log_pi + log_b[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + log_a, axis=0) + log_b[t]
    return alpha


def _log_backward(model: HmmModel, log_b: np.ndarray) -> np.ndarray:
    T = log_b.shape[0]
    with np.errstate(divide="ignore"):
        log_a = np.log(model.transition)
    beta = np.zeros((T, N_STATES))
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(log_a + (log_b[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def forward_backward(
    model: HmmModel, obs: ObservationsLike
) -> tuple[float, np.ndarray]:
    """Log-likelihood of the sequence and per-time state posteriors.

    Returns ``(log_likelihood, posteriors)`` where ``posteriors[t]`` sums
    to 1 and gives the probability of each hidden state at time ``t`` given
    the whole sequence.
    """
    arr = _as_observations(obs)
    log_b = _emission_logprobs(model, arr)
    alpha = _log_forward(model, log_b)
    beta = _log_backward(model, log_b)
    log_likelihood = float(logsumexp(alpha[-1]))
    log_gamma = alpha + beta - log_likelihood
    posteriors = np.exp(log_gamma)
    posteriors /= posteriors.sum(axis=1, keepdims=True)
    return log_likelihood, posteriors


def viterbi(model: HmmModel, obs: ObservationsLike) -> tuple[np.ndarray, float]:
    """Most likely hidden-state path and its joint log-probability."""
    arr = _as_observations(obs)
    log_b = _emission_logprobs(model, arr)
    T = arr.shape[0]
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial_probs)
        log_a = np.log(model.transition)
    delta = np.empty((T, N_STATES))
    back = np.zeros((T, N_STATES), dtype=int)
    delta[0] = log_pi + log_b[0]
    for t in range(1, T):
        cand = delta[t - 1][:, None] + log_a
        back[t] = np.argmax(cand, axis=0)
        delta[t] = cand[back[t], np.arange(N_STATES)] + log_b[t]
    path = np.empty(T, dtype=int)
    path[-1] = int(np.argmax(delta[-1]))
    for t in range(T - 2, -1, -1):
        path[t] = back[t + 1, path[t + 1]]
    return path, float(delta[-1, path[-1]])


def score_sequence(model: HmmModel, obs: ObservationsLike) -> float:
    """Viterbi joint log-probability divided by the observation count.

    Per-observation normalization keeps the acceptance band invariant to
    sequence length; with a fixed password all lengths are equal anyway.
    """
    arr = _as_observations(obs)
    _, log_joint = viterbi(model, arr)
    return log_joint / arr.shape[0]


def _initial_model(arrs: list[np.ndarray], config: TrainingConfig) -> HmmModel:
    """Deterministic, seed-reproducible initialization.

    Transition rows get a small seeded jitter to break the symmetric EM
    fixed point; emission parameters come from splitting the pooled
    observations at the median of the duration coordinate.
    """
    rng = np.random.default_rng(config.seed)
    initial = np.full(N_STATES, 1.0 / N_STATES)
    transition = np.full((N_STATES, N_STATES), 1.0 / N_STATES)
    transition = transition + rng.uniform(-0.05, 0.05, size=(N_STATES, N_STATES))
    transition = np.clip(transition, 1e-3, None)
    transition /= transition.sum(axis=1, keepdims=True)

    pooled = np.concatenate(arrs, axis=0)
    median = np.median(pooled[:, 0])
    halves = [pooled[pooled[:, 0] <= median], pooled[pooled[:, 0] > median]]
    if any(len(h) == 0 for h in halves):
        halves = [pooled, pooled]
    emissions = tuple(
        GaussianParams(
            mean=h.mean(axis=0),
            covariance=_floored_scatter(h, h.mean(axis=0), config.covariance_floor),
        )
        for h in halves
    )
    return HmmModel(initial_probs=initial, transition=transition, emissions=emissions)


def _floored_scatter(x: np.ndarray, mean: np.ndarray, floor: float) -> np.ndarray:
    dev = x - mean
    scatter = dev.T @ dev / len(x)
    return _regularize_covariance(scatter, floor)


def _regularize_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    """Clamp eigenvalues to the floor.

    Leaves a healthy covariance bit-exactly alone (so EM keeps its exact
    monotonicity guarantee) and only rebuilds the matrix when an eigenvalue
    falls below the floor.
    """
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[0] >= floor:
        return cov
    rebuilt = (eigvecs * np.maximum(eigvals, floor)) @ eigvecs.T
    return 0.5 * (rebuilt + rebuilt.T)


def em_step(
    model: HmmModel,
    samples: Sequence[ObservationsLike],
    covariance_floor: float = 1e-6,
) -> tuple[HmmModel, float]:
    """One Baum-Welch iteration over all training sequences.

    Returns the updated model and the total log-likelihood of the *input*
    model on the training set (the quantity EM is guaranteed not to
    decrease).
    """
    arrs = [_as_observations(s) for s in samples]
    total_ll = 0.0
    init_acc = np.zeros(N_STATES)
    xi_acc = np.zeros((N_STATES, N_STATES))
    w_acc = np.zeros(N_STATES)
    wx_acc = np.zeros((N_STATES, _DIM))
    wxx_acc = np.zeros((N_STATES, _DIM, _DIM))
    with np.errstate(divide="ignore"):
        log_a = np.log(model.transition)

    for arr in arrs:
        log_b = _emission_logprobs(model, arr)
        alpha = _log_forward(model, log_b)
        beta = _log_backward(model, log_b)
        ll = float(logsumexp(alpha[-1]))
        total_ll += ll
        gamma = np.exp(alpha + beta - ll)
        gamma /= gamma.sum(axis=1, keepdims=True)

        init_acc += gamma[0]
        w_acc += gamma.sum(axis=0)
        wx_acc += gamma.T @ arr
        for i in range(N_STATES):
            wxx_acc[i] += (gamma[:, i][:, None] * arr).T @ arr
        if arr.shape[0] > 1:
            # log xi[t, i, j] = alpha[t, i] + log A[i, j] + log b[t+1, j] + beta[t+1, j] - ll
            log_xi = (
                alpha[:-1, :, None]
                + log_a[None, :, :]
                + (log_b[1:] + beta[1:])[:, None, :]
                - ll
            )
            xi_acc += np.exp(logsumexp(log_xi, axis=0))

    initial = init_acc / init_acc.sum()
    row_sums = xi_acc.sum(axis=1, keepdims=True)
    transition = np.where(row_sums > 0, xi_acc / np.maximum(row_sums, 1e-300), model.transition)
    transition /= transition.sum(axis=1, keepdims=True)

    emissions = []
    for i in range(N_STATES):
        w = max(w_acc[i], 1e-300)
        mean = wx_acc[i] / w
        cov = wxx_acc[i] / w - np.outer(mean, mean)
        cov = _regularize_covariance(cov, covariance_floor)
        emissions.append(GaussianParams(mean=mean, covariance=cov))

    updated = HmmModel(
        initial_probs=initial, transition=transition, emissions=tuple(emissions)
    )
    return updated, total_ll


def _validate_training_set(samples: Sequence[ObservationsLike]) -> list[np.ndarray]:
    if len(samples) < 2:
        raise ValueError(f"training requires at least 2 samples, got {len(samples)}")
    arrs = [_as_observations(s) for s in samples]
    for i, arr in enumerate(arrs):
        if arr.shape[0] < 2:
            raise ValueError(
                f"training sample {i} has {arr.shape[0]} observations, need at least 2"
            )
    return arrs


def train_with_history(
    samples: Sequence[ObservationsLike], config: TrainingConfig = TrainingConfig()
) -> tuple[HmmModel, list[float]]:
    """Baum-Welch training, also returning the log-likelihood trajectory.

    ``history[k]`` is the total training log-likelihood of the model after
    ``k`` update steps; the final entry scores the returned model.
    """
    arrs = _validate_training_set(samples)
    model = _initial_model(arrs, config)
    history: list[float] = []
    for _ in range(config.iterations):
        model, ll_before = em_step(model, arrs, config.covariance_floor)
        history.append(ll_before)
        if (
            config.early_stop_tol is not None
            and len(history) >= 2
            and history[-1] - history[-2] < config.early_stop_tol
        ):
            break
    final_ll = sum(forward_backward(model, arr)[0] for arr in arrs)
    history.append(final_ll)
    return model, history


def baum_welch_train(
    samples: Sequence[ObservationsLike], config: TrainingConfig = TrainingConfig()
) -> HmmModel:
    """Estimate transition and emission parameters from training sequences.

    Runs ``config.iterations`` EM updates from the deterministic seeded
    initialization; with ``iterations=0`` the initialization is returned
    unchanged. Training log-likelihood is non-decreasing across iterations.
    """
    model, _ = train_with_history(samples, config)
    return model


def fit_profile(
    samples: Sequence[ObservationsLike], config: TrainingConfig = TrainingConfig()
) -> TrainedProfile:
    """Train a model and derive the genuine-score acceptance band.

    Every training sample is scored against the trained model; the band is
    centered on the mean of those scores with width ``band_width_k`` times
    their population standard deviation.
    """
    model = baum_welch_train(samples, config)
    scores = np.array([score_sequence(model, s) for s in samples])
    return TrainedProfile(
        model=model,
        score_mean=float(scores.mean()),
        score_std=float(scores.std()),  # population convention (ddof=0)
        band_width_k=config.band_width_k,
    )


def verify_keystroke(
    profile: TrainedProfile,
    obs: ObservationsLike,
    one_sided: bool = False,
) -> VerificationResult:
    """Score a sequence against a profile and test it against the band.

    Two-sided by default: accept iff |score - mean| <= k * std. With
    ``one_sided=True`` only scores below the band reject (any score at or
    above ``mean - k*std`` is accepted).
    """
    score = score_sequence(profile.model, obs)
    deviation = abs(score - profile.score_mean)
    if profile.score_std == 0.0:
        warnings.warn(
            "profile has zero score spread; accepting exact score matches only",
            UnderTrainedProfileWarning,
            stacklevel=2,
        )
        accepted = deviation <= 1e-9
        return VerificationResult(accepted, score, 0.0 if accepted else math.inf)
    band_distance = deviation / profile.score_std
    if one_sided:
        accepted = score >= profile.score_mean - profile.band_width_k * profile.score_std
    else:
        accepted = band_distance <= profile.band_width_k
    return VerificationResult(bool(accepted), score, band_distance)


def sample_sequences(
    model: HmmModel,
    n_sequences: int,
    length: int,
    rng: np.random.Generator | int | None = None,
) -> list[np.ndarray]:
    """Draw observation sequences from the model's generative process."""
    if length < 1:
        raise ValueError("length must be at least 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    chols = [_cholesky(e.covariance) for e in model.emissions]
    out = []
    for _ in range(n_sequences):
        seq = np.empty((length, _DIM))
        state = rng.choice(N_STATES, p=model.initial_probs)
        for t in range(length):
            if t > 0:
                state = rng.choice(N_STATES, p=model.transition[state])
            seq[t] = model.emissions[state].mean + chols[state] @ rng.standard_normal(_DIM)
        out.append(seq)
    return out


def swap_states(model: HmmModel) -> HmmModel:
    """Relabel the two hidden states (permutation symmetry helper)."""
    perm = [1, 0]
    return HmmModel(
        initial_probs=model.initial_probs[perm],
        transition=model.transition[np.ix_(perm, perm)],
        emissions=(model.emissions[1], model.emissions[0]),
    )

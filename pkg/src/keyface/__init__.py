"""keyface: multimodal user verification.

Keystroke-dynamics features modeled by per-user 2-state Gaussian-emission
HMMs, eigenface/fisherface matching over pre-cropped grayscale images,
score-level fusion, encrypted per-user profile storage, and a FAR/FRR
evaluation harness.
"""

from .keystroke import (
    RawKeyEvent,
    KeystrokeSample,
    FeatureSequence,
    InvalidSampleError,
    SampleFormatError,
    compute_durations,
    compute_latencies,
    normalize,
    features_from_timings,
    serialize_samples,
    parse_samples,
)
from .hmm import (
    GaussianParams,
    HmmModel,
    TrainedProfile,
    TrainingConfig,
    VerificationResult,
    log_gaussian_density,
    forward_backward,
    viterbi,
    score_sequence,
    baum_welch_train,
    fit_profile,
    verify_keystroke,
)
from .face import (
    FaceImage,
    FaceModel,
    load_pgm,
    write_pgm,
    train_pca,
    train_lda,
    train_face_model,
    project,
    classify,
    face_match_score,
)
from .fusion import ModalityScore, FusedDecision, integrate, keystroke_match_score
from .evaluation import (
    Attempt,
    far,
    frr,
    compute_eer,
    generate_population,
    enroll_population,
    draw_attempts,
    score_attempts,
    sweep_roc,
)
from .profile_store import ProfileStore, encrypt_profile, decrypt_profile

__version__ = "0.1.0"

__all__ = [
    "RawKeyEvent",
    "KeystrokeSample",
    "FeatureSequence",
    "InvalidSampleError",
    "SampleFormatError",
    "compute_durations",
    "compute_latencies",
    "normalize",
    "features_from_timings",
    "serialize_samples",
    "parse_samples",
    "GaussianParams",
    "HmmModel",
    "TrainedProfile",
    "TrainingConfig",
    "VerificationResult",
    "log_gaussian_density",
    "forward_backward",
    "viterbi",
    "score_sequence",
    "baum_welch_train",
    "fit_profile",
    "verify_keystroke",
    "FaceImage",
    "FaceModel",
    "load_pgm",
    "write_pgm",
    "train_pca",
    "train_lda",
    "train_face_model",
    "project",
    "classify",
    "face_match_score",
    "ModalityScore",
    "FusedDecision",
    "integrate",
    "keystroke_match_score",
    "Attempt",
    "far",
    "frr",
    "compute_eer",
    "generate_population",
    "enroll_population",
    "draw_attempts",
    "score_attempts",
    "sweep_roc",
    "ProfileStore",
    "encrypt_profile",
    "decrypt_profile",
    "__version__",
]
